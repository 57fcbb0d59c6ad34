"""Explicit connecting trajectories, reachability probes, and the cone
unreachability certificate.

Connectors are two-leg constructions: a horizontal leg (exact for the
dynamics) onto a declared rail -- a vertical segment, a sloped segment, or
a power curve anchored at the target -- followed by a leg that rides the
rail into the target.  Power-curve legs with exponent nu+1 admit a constant
second control component, so their nodes land on the rail exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .dynamics import (
    AdmissibilityReport,
    ControlSignal,
    Trajectory,
    abs_pow_integral,
    admissibility_check,
    integrate,
)
from .errors import ConfigurationError, DomainError, UnsupportedWitnessError
from .geometry import ConstraintSet, Witness

CASE_OFF_AXIS_VERTICAL = "off_axis_vertical"
CASE_OFF_AXIS_SLOPE = "off_axis_slope"
CASE_ON_AXIS_POWER = "on_axis_power"
CASE_INTERIOR = "interior"

_AXIS_TOL = 1e-7


@dataclass
class ConnectResult:
    traj: Trajectory
    delta: float
    control_l2: float
    case_tag: str

    @property
    def control_energy(self) -> float:
        return self.control_l2**2

    def to_json(self) -> dict:
        return {
            "delta": self.delta,
            "control_l2": self.control_l2,
            "control_energy": self.control_energy,
            "case_tag": self.case_tag,
            "endpoint": [float(v) for v in self.traj.final],
        }


def _legs_to_control(legs, dilation: float) -> ControlSignal:
    """legs: list of (duration, a1, a2) pieces; dilation slows the clock."""
    legs = [(d, a1, a2) for (d, a1, a2) in legs if d > 0.0]
    if not legs:
        return ControlSignal.empty()
    durations = np.array([d for d, _, _ in legs]) * dilation
    times = np.concatenate([[0.0], np.cumsum(durations)])
    values = np.array([[a1 / dilation, a2 / dilation] for _, a1, a2 in legs])
    return ControlSignal(0.0, float(times[-1]), values, times)


def _rail_leg_pieces(y1_from: float, y1_to: float, a1: float, y2_of_y1, nu: float, n: int):
    """Pieces riding a rail y2 = y2_of_y1(y1) at unit horizontal speed.

    Each sub-piece's a2 is chosen so the node increments match the rail
    exactly; between nodes the path deviates by O(h^2).
    """
    us = np.linspace(y1_from, y1_to, n + 1)
    pieces = []
    for ua, ub in zip(us[:-1], us[1:]):
        h = (ub - ua) / a1
        integral = float(abs_pow_integral(ua, a1, h, nu))
        dy2 = y2_of_y1(ub) - y2_of_y1(ua)
        a2 = dy2 / integral if integral > 1e-300 else 0.0
        pieces.append((h, a1, a2))
    return pieces


def _candidate_vertical(source, target, nu, rail_len, case_tag):
    x01, x02 = target
    xn1, xn2 = source
    d2 = xn2 - x02
    if d2 < -1e-15 or d2 > rail_len * (1 + 1e-12):
        return None
    legs = [(abs(x01 - xn1), math.copysign(1.0, x01 - xn1) if x01 != xn1 else 0.0, 0.0)]
    if abs(d2) > 0:
        legs.append((abs(d2), 0.0, math.copysign(1.0, x02 - xn2) / abs(x01) ** nu))
    return legs, case_tag


def _candidate_slope(source, target, nu, c, radius, side):
    """side +1: rail x2 - x02 = C (x1 - x01); side -1: x2 - x02 = C (x01 - x1)."""
    x01, x02 = target
    xn1, xn2 = source
    u0 = (xn2 - x02) / c
    if u0 < -1e-15 or u0 > radius * (1 + 1e-12):
        return None
    u0 = max(u0, 0.0)
    rail_x1 = x01 + side * u0
    legs = [(abs(rail_x1 - xn1), math.copysign(1.0, rail_x1 - xn1) if rail_x1 != xn1 else 0.0, 0.0)]
    if u0 > 0:
        a1 = -side  # ride back toward the target
        legs += _rail_leg_pieces(
            rail_x1,
            x01,
            a1,
            lambda y1: x02 + c * side * (y1 - x01),
            nu,
            n=max(16, min(512, int(math.ceil(u0 / 0.002)))),
        )
    return legs, CASE_OFF_AXIS_SLOPE


def _candidate_power(source, target, nu, c, radius, side):
    """On-axis rail x2 - x02 = C |x1|^(nu+1) on side*x1 > 0; constant a2 leg."""
    x01, x02 = target
    xn1, xn2 = source
    d2 = xn2 - x02
    if d2 < -1e-15:
        return None
    d2 = max(d2, 0.0)
    xi = (d2 / c) ** (1.0 / (nu + 1.0))
    if xi > radius * (1 + 1e-12):
        return None
    rail_x1 = side * xi
    legs = [(abs(xn1 - rail_x1), math.copysign(1.0, rail_x1 - xn1) if rail_x1 != xn1 else 0.0, 0.0)]
    if xi > 0:
        legs.append((xi, -side, -c * (nu + 1.0)))
    return legs, CASE_ON_AXIS_POWER


def _candidate_power_rho(source, target, nu, c, radius, rho, on_axis):
    """Rail x2 - x02 = C u^rho with x1 = x01 + u (experimental for rho != nu+1)."""
    x01, x02 = target
    xn1, xn2 = source
    d2 = xn2 - x02
    if d2 < -1e-15:
        return None
    d2 = max(d2, 0.0)
    xi = (d2 / c) ** (1.0 / rho)
    if xi > radius * (1 + 1e-12):
        return None
    rail_x1 = x01 + xi
    legs = [(abs(xn1 - rail_x1), math.copysign(1.0, rail_x1 - xn1) if rail_x1 != xn1 else 0.0, 0.0)]
    if xi > 0:
        legs += _rail_leg_pieces(
            rail_x1,
            x01,
            -1.0,
            lambda y1: x02 + c * max(y1 - x01, 0.0) ** rho,
            nu,
            n=max(32, min(1024, int(math.ceil(xi / 0.001)))),
        )
    tag = CASE_ON_AXIS_POWER if on_axis else CASE_OFF_AXIS_SLOPE
    return legs, tag


def _bisect_edge_coefficient(a, d2, nu, reach):
    """Smallest C with (a^(nu+1) + d2/C)^(1/(nu+1)) <= a + reach."""
    target = (a + reach) ** (nu + 1.0) - a ** (nu + 1.0)
    if target <= 0:
        return None
    lo, hi = 1e-12, 1e12
    if d2 / hi > target:
        return None
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if d2 / mid <= target:
            hi = mid
        else:
            lo = mid
        if hi / lo < 1.0 + 1e-12:
            break
    return hi


def _interior_candidates(set_, nu, source, target, rails=("vertical", "power")):
    """Rail candidates at an interior target: an optional vertical rail plus
    power curves x2 = x02 + s*C*(x1^(nu+1) - x01^(nu+1)) through the target,
    over a small coefficient ladder and both branch orientations.  Every
    candidate is verified for admissibility downstream."""
    x01, x02 = target
    xn1, xn2 = source
    margin = -set_.violation(target)
    reach = 0.7 * min(margin, 1.0)
    cands = []
    d2 = xn2 - x02
    if abs(x01) > _AXIS_TOL and "vertical" in rails:
        legs = [(abs(x01 - xn1), math.copysign(1.0, x01 - xn1) if x01 != xn1 else 0.0, 0.0)]
        if abs(d2) > 0:
            legs.append((abs(d2), 0.0, math.copysign(1.0, -d2) / abs(x01) ** nu))
        cands.append((legs, CASE_INTERIOR))
    if abs(d2) <= 1e-15:
        cands.append(
            ([(abs(x01 - xn1), math.copysign(1.0, x01 - xn1) if x01 != xn1 else 0.0, 0.0)],
             CASE_INTERIOR)
        )
        return cands
    if "power" not in rails:
        return cands
    # reflect so the target sits on the nonnegative x1 side
    eps1 = 1.0 if x01 >= 0 else -1.0
    a = abs(x01)
    b = eps1 * xn1
    p = nu + 1.0
    for branch in (1.0, -1.0):
        coeffs = []
        if d2 / branch > 0:
            # the rail meets the source level beyond the target (xi > a)
            c_edge = _bisect_edge_coefficient(a, d2 / branch, nu, reach)
            if c_edge is not None:
                coeffs.append(c_edge)
            if a**p + d2 / branch > 0:
                coeffs.append(1.0)
            if b > a and b**p > a**p:
                coeffs.append((d2 / branch) / (b**p - a**p))
        else:
            # the rail meets the source level between the axis and the target
            if a > 0:
                c_min = (-d2 / branch) / a**p
                coeffs.extend([c_min * (1.0 + 1e-9), c_min * 4.0])
                if 1.0 >= c_min:
                    coeffs.append(1.0)
                if 0.0 <= b < a and a**p > b**p:
                    c_src = (-d2 / branch) / (a**p - b**p)
                    if c_src >= c_min:
                        coeffs.append(c_src)
        for c in dict.fromkeys(coeffs):
            rhs = a**p + d2 / (branch * c)
            if rhs < 0:
                continue
            xi = rhs ** (1.0 / p)
            legs = [(abs(b - xi), math.copysign(1.0, xi - b) if xi != b else 0.0, 0.0)]
            if abs(xi - a) > 0:
                ride = math.copysign(1.0, a - xi)
                legs.append((abs(xi - a), ride, branch * c * p * ride))
            legs = [(d, eps1 * a1, a2) for (d, a1, a2) in legs]
            cands.append((legs, CASE_INTERIOR))
    return cands


def _usable_witness_candidates(set_, nu, source, target):
    cands = []
    on_axis = abs(target[0]) <= _AXIS_TOL
    for _, w in set_.witnesses_at(target):
        fam = w.family
        if fam == "segment_vertical":
            if on_axis:
                continue  # the rail cannot be traversed at the axis
            c = _candidate_vertical(source, target, nu, w.radius, CASE_OFF_AXIS_VERTICAL)
        elif fam == "segment_slope_pos":
            if on_axis:
                continue
            c = _candidate_slope(source, target, nu, w.c, w.radius, +1)
        elif fam == "segment_slope_neg":
            if on_axis:
                continue
            c = _candidate_slope(source, target, nu, w.c, w.radius, -1)
        elif fam == "power_curve_pos":
            c = _candidate_power(source, target, nu, w.c, w.radius, +1) if on_axis else None
        elif fam == "power_curve_neg":
            c = _candidate_power(source, target, nu, w.c, w.radius, -1) if on_axis else None
        else:  # power_exponent
            if on_axis and not w.rho > nu + 0.5:
                raise ConfigurationError("on-axis power_exponent witness needs rho > nu + 1/2")
            c = _candidate_power_rho(source, target, nu, w.c, w.radius, w.rho, on_axis)
        if c is not None:
            cands.append(c)
    return cands


def connect(set_: ConstraintSet, nu: float, source, target,
            dilation: float = 1.0, substeps: int = 4,
            interior_rails=("vertical", "power")) -> ConnectResult:
    """Build an admissible trajectory from source to target.

    Boundary targets require a declared witness whose family matches the
    target's axis class; interior targets use locally constructed rails.
    Raises UnsupportedWitnessError when no construction applies.
    """
    if nu <= 0:
        raise ConfigurationError("nu must be positive")
    if dilation <= 0:
        raise ConfigurationError("dilation must be positive")
    source = np.asarray(source, dtype=float)
    target = np.asarray(target, dtype=float)
    if not set_.contains(target):
        raise DomainError(f"target {tuple(target)} is not in the set")
    if not set_.contains(source):
        raise DomainError(f"source {tuple(source)} is not in the set")
    if float(np.hypot(*(source - target))) <= set_.tol_member:
        traj = Trajectory(np.array([0.0]), source[None, :].copy(), ControlSignal.empty(), nu)
        return ConnectResult(traj, 0.0, 0.0, CASE_INTERIOR)

    margin = -set_.violation(target)
    candidates = []
    if margin > 100.0 * set_.tol_member:
        candidates.extend(_interior_candidates(set_, nu, tuple(source), tuple(target), interior_rails))
    candidates.extend(_usable_witness_candidates(set_, nu, tuple(source), tuple(target)))
    if not candidates:
        raise UnsupportedWitnessError(
            f"no applicable witness or interior construction at target {tuple(target)}"
        )

    best = None
    worst_violation = math.inf
    for legs, tag in candidates:
        ctrl = _legs_to_control(legs, dilation)
        if ctrl.n_pieces == 0:
            continue
        traj = integrate(source, ctrl, nu, substeps=substeps)
        if float(np.hypot(*(traj.final - target))) > max(1e-7, 100.0 * set_.tol_member):
            continue
        rep = admissibility_check(traj, set_)
        worst_violation = min(worst_violation, rep.max_violation)
        if rep.max_violation > set_.tol_member:
            continue
        delta = traj.duration
        l2 = ctrl.l2_norm()
        key = (delta, l2)
        if best is None or key < best[0]:
            best = (key, traj, tag)
    if best is None:
        raise UnsupportedWitnessError(
            f"no admissible connector at target {tuple(target)} "
            f"(best construction violated the set by {worst_violation:.3e})"
        )
    (_, traj, tag) = best
    return ConnectResult(traj, traj.duration, traj.control.l2_norm(), tag)


@dataclass
class ReachSequenceReport:
    deltas: list[float]
    l2norms: list[float]
    energies: list[float]
    established: bool
    failures: list[str]
    monotone_to_zero: bool

    def to_json(self) -> dict:
        return {
            "deltas": self.deltas,
            "l2norms": self.l2norms,
            "energies": self.energies,
            "established": self.established,
            "failures": self.failures,
            "monotone_to_zero": self.monotone_to_zero,
        }


def verify_reachability_sequence(
    set_: ConstraintSet,
    nu: float,
    target,
    sources,
    delta_threshold: float = 1e-2,
    l2_threshold: float = 1e-2,
    dilation: float = 1.0,
) -> ReachSequenceReport:
    """Connect each source to the target and check that durations and control
    norms fall below the caller's thresholds by the last source."""
    deltas, l2s, failures = [], [], []
    for s in sources:
        try:
            res = connect(set_, nu, s, target, dilation=dilation)
            deltas.append(res.delta)
            l2s.append(res.control_l2)
        except (UnsupportedWitnessError, DomainError) as exc:
            failures.append(f"{tuple(np.asarray(s, dtype=float))}: {exc}")
    established = not failures and len(deltas) == len(list(sources))
    monotone = (
        established
        and len(deltas) > 0
        and deltas[-1] <= delta_threshold
        and l2s[-1] <= l2_threshold
    )
    return ReachSequenceReport(
        deltas=deltas,
        l2norms=l2s,
        energies=[v * v for v in l2s],
        established=established,
        failures=failures,
        monotone_to_zero=monotone,
    )


@dataclass
class UnreachCertificate:
    m1: float
    observed_min_ratio: float
    times: np.ndarray
    bound_values: np.ndarray
    abs_a2_integral: float

    def bound_at(self, t: float) -> float:
        return float(np.interp(t, self.times, self.bound_values))

    def to_json(self) -> dict:
        return {
            "m1": self.m1,
            "observed_min_ratio": self.observed_min_ratio,
            "abs_a2_integral": self.abs_a2_integral,
            "bound_final": float(self.bound_values[-1]),
        }


def cone_gronwall_bound(m1: float, traj: Trajectory) -> UnreachCertificate:
    """Exponential lower bound on y2 for trajectories in the cone above slope m1.

    While y2 >= m1*y1 >= 0, the dynamics force
    y2(s) >= y2(0) * exp(-(1/m1) * int_0^s |a2|), so reaching y2 = 0 needs an
    unbounded |a2| integral.
    """
    if m1 <= 0:
        raise ConfigurationError("m1 must be positive")
    x02 = float(traj.states[0, 1])
    if x02 <= 0:
        raise DomainError("certificate requires y2(0) > 0")
    ts = traj.times
    pts = traj.states
    if len(ts) >= 2:
        mids = traj.states_at(0.5 * (ts[:-1] + ts[1:]))
        chk = np.concatenate([pts, mids])
    else:
        chk = pts
    tol = 1e-9 * max(1.0, float(np.max(np.abs(chk))))
    if np.any(chk[:, 0] < -tol) or np.any(chk[:, 1] - m1 * chk[:, 0] < -tol):
        raise DomainError("trajectory exits the cone")
    cum = traj.control.abs_integral(1)
    cum_at = np.interp(ts, traj.control.times, cum) if traj.control.n_pieces else np.zeros_like(ts)
    bound = x02 * np.exp(-cum_at / m1)
    ratio = float(np.min(pts[:, 1] / bound))
    return UnreachCertificate(m1, ratio, ts.copy(), bound, float(cum_at[-1]))


def truncated_cone_cost(x0, eps: float) -> float:
    """Energy of the explicit straight-segment control toward the apex,
    truncated eps short of it; diverges like 1/eps as eps -> 0."""
    x01, x02 = float(x0[0]), float(x0[1])
    if x01 <= 0:
        raise DomainError("starting point must have x1 > 0")
    if not 0 < eps < x01:
        raise DomainError("eps must lie strictly between 0 and x1(0)")

    def integrand(s):
        a2 = x02 / (x01 * (x01 - s))
        return 0.5 * (1.0 + a2 * a2)

    val, _ = quad(integrand, 0.0, x01 - eps, epsabs=1e-12, epsrel=1e-12, limit=500)
    return float(val)


def truncated_cone_control(x0, eps: float, n_pieces: int = 200) -> ControlSignal:
    """Piecewise-constant sampling of the explicit apex-directed control."""
    x01, x02 = float(x0[0]), float(x0[1])
    if not 0 < eps < x01:
        raise DomainError("eps must lie strictly between 0 and x1(0)")
    edges = x01 - (x01 - eps) * np.geomspace(1.0, eps / x01, n_pieces + 1)
    edges[0] = 0.0
    edges[-1] = x01 - eps
    mids = 0.5 * (edges[:-1] + edges[1:])
    vals = np.stack([-np.ones_like(mids), -x02 / (x01 * (x01 - mids))], axis=1)
    return ControlSignal(0.0, float(edges[-1]), vals, edges)


def random_cone_trajectories(m1: float, m2: float, x0, n_traj: int, seed: int,
                             n_pieces: int = 24, horizon: float = 1.0, nu: float = 1.0,
                             scale: float = 0.8) -> list[Trajectory]:
    """Randomized piecewise controls damped piece-by-piece so that node and
    midpoint states keep a positive margin inside the cone."""
    from .geometry import Cone

    cone = Cone(m1, m2)
    rng = np.random.default_rng(seed)
    out = []
    h = horizon / n_pieces
    for _ in range(n_traj):
        y = np.asarray(x0, dtype=float).copy()
        pieces = []
        t = 0.0
        for _ in range(n_pieces):
            a = rng.normal(scale=scale, size=2)
            for _ in range(24):
                ctrl = ControlSignal.uniform(t, t + h, [a])
                step = integrate(y, ctrl, nu, substeps=4)
                if admissibility_check(step, cone).max_violation <= 0.0:
                    break
                a = a * 0.5
            else:
                a = np.zeros(2)
                step = integrate(y, ControlSignal.uniform(t, t + h, [a]), nu, substeps=4)
            pieces.append(a)
            y = step.final
            t += h
        ctrl = ControlSignal.uniform(0.0, horizon, np.stack(pieces))
        out.append(integrate(np.asarray(x0, dtype=float), ctrl, nu, substeps=4))
    return out


@dataclass
class ModulusReport:
    per_pair: list[dict]
    delta_exponent: float
    delta_coeff: float
    l2_exponent: float
    l2_coeff: float
    single_modulus_ok: bool

    def to_json(self) -> dict:
        return {
            "per_pair": self.per_pair,
            "delta_exponent": self.delta_exponent,
            "delta_coeff": self.delta_coeff,
            "l2_exponent": self.l2_exponent,
            "l2_coeff": self.l2_coeff,
            "single_modulus_ok": self.single_modulus_ok,
        }


def uniform_modulus_probe(set_: ConstraintSet, nu: float, pairs,
                          dilation: float = 1.0,
                          interior_rails=("vertical", "power")) -> ModulusReport:
    """Connect each ordered (source, target) pair and fit power moduli
    delta <= A d^p, ||a||_2 <= B d^q against the pair distance d."""
    rows = []
    for source, target in pairs:
        d = float(np.hypot(*(np.asarray(target, dtype=float) - np.asarray(source, dtype=float))))
        res = connect(set_, nu, source, target, dilation=dilation, interior_rails=interior_rails)
        rows.append({"distance": d, "delta": res.delta, "l2": res.control_l2, "case": res.case_tag})
    fit_rows = [r for r in rows if r["distance"] > 0 and r["delta"] > 0]
    if len(fit_rows) >= 2:
        ld = np.log([r["distance"] for r in fit_rows])
        p_delta = np.polyfit(ld, np.log([r["delta"] for r in fit_rows]), 1)
        with_l2 = [r for r in fit_rows if r["l2"] > 0]
        if len(with_l2) >= 2:
            p_l2 = np.polyfit(
                np.log([r["distance"] for r in with_l2]),
                np.log([r["l2"] for r in with_l2]),
                1,
            )
        else:
            p_l2 = np.array([0.0, -np.inf])
        delta_exp = float(p_delta[0])
        l2_exp = float(p_l2[0])
        delta_coeff = max(r["delta"] / r["distance"] ** delta_exp for r in fit_rows)
        l2_coeff = max((r["l2"] / r["distance"] ** l2_exp for r in with_l2), default=0.0)
        ok = delta_exp > 0 and (l2_exp > 0 or not with_l2)
    else:
        delta_exp = l2_exp = 0.0
        delta_coeff = l2_coeff = 0.0
        ok = True
    return ModulusReport(rows, delta_exp, float(delta_coeff), l2_exp, float(l2_coeff), ok)
