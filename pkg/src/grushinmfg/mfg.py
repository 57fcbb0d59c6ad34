"""Lagrangian mean field game machinery: atomic measures on states and on
trajectories, exact Wasserstein-1, nonlocal couplings, fictitious play, and
mild-solution extraction.

The population is a weighted atom list over trajectories; its time marginals
are pushforwards under the evaluation map.  Fictitious play averages best
responses with harmonic weights and is monitored through exploitability and
Wasserstein diagnostics rather than assumed to converge.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.spatial.distance import cdist

from .dynamics import ControlSignal, CostSpec, Trajectory, cost, integrate
from .errors import ConfigurationError, DomainError, SolverError
from .geometry import ConstraintSet
from .ocp import SolveConfig, control_norm_bound, solve_trajectory

_NORM_TOL = 1e-12
_MERGE_BUCKET = 1e-12


@dataclass
class AtomicMeasure:
    """Weighted point cloud; weights are positive and sum to one."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float)
        if self.points.shape[1] != 2 or len(self.points) != len(self.weights):
            raise ConfigurationError("measure needs (n,2) points and n weights")
        if np.any(self.weights <= 0):
            raise DomainError("measure weights must be positive")
        if abs(math.fsum(self.weights.tolist()) - 1.0) > _NORM_TOL:
            raise DomainError("measure weights must sum to 1 within 1e-12")

    @classmethod
    def from_pairs(cls, pairs) -> "AtomicMeasure":
        pts = np.array([[p[0], p[1]] for p, _ in pairs], dtype=float)
        ws = np.array([w for _, w in pairs], dtype=float)
        return cls(pts, ws)

    @classmethod
    def dirac(cls, p) -> "AtomicMeasure":
        return cls(np.asarray(p, dtype=float)[None, :], np.array([1.0]))

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def merged(self, tol: float = 1e-9) -> "AtomicMeasure":
        """Merge atoms coinciding at resolution tol (bucket rounding)."""
        keys = np.round(self.points / max(tol, 1e-15)).astype(np.int64)
        seen: dict[tuple, int] = {}
        pts, ws = [], []
        for k, (p, w) in zip(map(tuple, keys), zip(self.points, self.weights)):
            if k in seen:
                ws[seen[k]] += w
            else:
                seen[k] = len(pts)
                pts.append(p)
                ws.append(w)
        return AtomicMeasure(np.array(pts), np.array(ws))


def _transport_cost(pa, wa, pb, wb) -> float:
    """Exact transportation LP between equal-mass atom lists."""
    mass = math.fsum(wa.tolist())
    if mass <= 1e-15:
        return 0.0
    c = cdist(pa, pb).ravel()
    n, m = len(pa), len(pb)
    rows, cols, data = [], [], []
    for i in range(n):
        rows.extend([i] * m)
        cols.extend(range(i * m, (i + 1) * m))
        data.extend([1.0] * m)
    for j in range(m - 1):  # last sink constraint is redundant
        rows.extend([n + j] * n)
        cols.extend(j + m * np.arange(n))
        data.extend([1.0] * n)
    A = sparse.csr_matrix((data, (rows, cols)), shape=(n + m - 1, n * m))
    b = np.concatenate([wa / mass, wb[:-1] / mass])
    res = linprog(c, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    if not res.success:
        raise SolverError(f"transportation LP failed: {res.message}")
    return float(res.fun) * mass


def wasserstein1(a: AtomicMeasure, b: AtomicMeasure) -> float:
    """Exact W1 with Euclidean ground distance.

    Mass shared at coincident atoms is cancelled first (optimal for metric
    costs), then the reduced transportation problem is solved exactly.
    """
    for m in (a, b):
        if abs(math.fsum(m.weights.tolist()) - 1.0) > _NORM_TOL:
            raise DomainError("wasserstein1 requires normalized measures")
    wa = dict()
    for p, w in zip(a.points, a.weights):
        k = tuple(np.round(p / _MERGE_BUCKET).astype(np.int64))
        wa[k] = wa.get(k, (0.0, p))[0] + w, p
    wb = dict()
    for p, w in zip(b.points, b.weights):
        k = tuple(np.round(p / _MERGE_BUCKET).astype(np.int64))
        wb[k] = wb.get(k, (0.0, p))[0] + w, p
    pa, ra, pb, rb = [], [], [], []
    for k, (w, p) in wa.items():
        common = min(w, wb.get(k, (0.0, None))[0])
        rest = w - common
        if rest > 1e-16:
            pa.append(p)
            ra.append(rest)
    for k, (w, p) in wb.items():
        common = min(w, wa.get(k, (0.0, None))[0])
        rest = w - common
        if rest > 1e-16:
            pb.append(p)
            rb.append(rest)
    if not pa or not pb:
        return 0.0
    return _transport_cost(np.array(pa), np.array(ra), np.array(pb), np.array(rb))


# ---------------------------------------------------------------------------
# couplings
# ---------------------------------------------------------------------------


def _zero_ell(x, t):
    x = np.asarray(x, dtype=float)
    return np.zeros(x[..., 0].shape)


def _zero_g(x):
    x = np.asarray(x, dtype=float)
    return np.zeros(x[..., 0].shape)


def gaussian_kernel(r):
    return np.exp(-np.asarray(r, dtype=float) ** 2)


class CouplingSpec:
    """Nonlocal running/terminal costs built from the state distribution.

    kernel_congestion adds a smoothed density, mean_attraction a squared
    distance to the mean; both are clipped to the declared bound so the
    sup-norm assumption holds by construction.  Instances are treated as
    immutable.
    """

    def __init__(self, kind, bound_K, ell0=None, g0=None, bandwidth=0.2, kernel=None,
                 kernel_weight=1.0, terminal_weight=1.0, L_fn=None, G_fn=None):
        if kind not in ("kernel_congestion", "mean_attraction", "custom"):
            raise ConfigurationError(f"unknown coupling kind {kind!r}")
        if kind == "kernel_congestion" and not bandwidth > 0:
            raise ConfigurationError("bandwidth must be positive")
        if kind == "custom" and (L_fn is None or G_fn is None):
            raise ConfigurationError("custom coupling requires L_fn and G_fn")
        self.kind = kind
        self.bound_K = float(bound_K)
        self.ell0 = ell0 if ell0 is not None else _zero_ell
        self.g0 = g0 if g0 is not None else _zero_g
        self.bandwidth = float(bandwidth)
        self.kernel = kernel if kernel is not None else gaussian_kernel
        self.kernel_weight = float(kernel_weight)
        self.terminal_weight = float(terminal_weight)
        self.L_fn = L_fn
        self.G_fn = G_fn

    def kernel_sum(self, m: AtomicMeasure, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        diff = x[..., None, :] - m.points
        r = np.sqrt(np.sum(diff * diff, axis=-1)) / self.bandwidth
        return np.asarray(self.kernel(r), dtype=float) @ m.weights


def coupling_eval(spec: CouplingSpec, m: AtomicMeasure, x, t):
    """Running and terminal coupling values at x, clipped to the bound."""
    x = np.asarray(x, dtype=float)
    K = spec.bound_K
    if spec.kind == "kernel_congestion":
        s = spec.kernel_sum(m, x)
        L = np.clip(spec.ell0(x, t) + spec.kernel_weight * s, -K, K)
        G = np.clip(spec.g0(x) + spec.terminal_weight * s, -K, K)
    elif spec.kind == "mean_attraction":
        b = m.mean()
        d2 = np.sum((x - b) ** 2, axis=-1)
        L = np.clip(spec.ell0(x, t) + spec.kernel_weight * d2, -K, K)
        G = np.clip(spec.g0(x) + spec.terminal_weight * d2, -K, K)
    else:
        L = np.clip(spec.L_fn(m, x, t), -K, K)
        G = np.clip(spec.G_fn(m, x), -K, K)
    return L, G


class FrozenField:
    """Coupling costs evaluated against a frozen measure path."""

    def __init__(self, spec: CouplingSpec, times, measures):
        self.spec = spec
        self.times = np.asarray(times, dtype=float)
        self.measures = list(measures)

    def _index_of(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.abs(self.times[None, :] - t[:, None]).argmin(axis=1)

    def ell(self, x, t):
        x = np.asarray(x, dtype=float)
        pts = x.reshape(-1, 2)
        t_arr = np.broadcast_to(np.asarray(t, dtype=float), pts.shape[:1]).copy()
        idx = self._index_of(t_arr)
        out = np.empty(len(pts))
        for j in np.unique(idx):
            sel = idx == j
            out[sel] = coupling_eval(self.spec, self.measures[j], pts[sel], t_arr[sel])[0]
        return out.reshape(x.shape[:-1])

    def g(self, x):
        x = np.asarray(x, dtype=float)
        return coupling_eval(self.spec, self.measures[-1], x, self.times[-1])[1]

    def cost_spec(self) -> CostSpec:
        return CostSpec(ell=self.ell, g=self.g, bound_K=self.spec.bound_K)


# ---------------------------------------------------------------------------
# trajectory measures
# ---------------------------------------------------------------------------


@dataclass
class TrajectoryAtom:
    traj: Trajectory
    weight: float
    origin: int
    rel_weight: float

    def sup_norm(self) -> float:
        return float(np.max(np.hypot(self.traj.states[:, 0], self.traj.states[:, 1])))

    def control_l2(self) -> float:
        return self.traj.control.l2_norm()


@dataclass
class TrajectoryMeasure:
    atoms: list[TrajectoryAtom]
    c_bound: float
    m0: AtomicMeasure

    def __post_init__(self):
        total = math.fsum(a.weight for a in self.atoms)
        if abs(total - 1.0) > 1e-9:
            raise DomainError(f"trajectory-measure weights sum to {total}, expected 1")

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    def holder_constant(self, nu: float) -> float:
        """Constant for the W1 half-Hoelder path bound, from stored norms."""
        best = 0.0
        for a in self.atoms:
            best = max(best, (1.0 + max(1.0, a.sup_norm()) ** nu) * a.control_l2())
        return best


def stay_put_measure(m0: AtomicMeasure, nu: float, T: float, n_steps: int,
                     substeps: int = 2) -> TrajectoryMeasure:
    atoms = []
    for i, (p, w) in enumerate(zip(m0.points, m0.weights)):
        traj = integrate(p, ControlSignal.zero(0.0, T, n_steps), nu, substeps=substeps)
        atoms.append(TrajectoryAtom(traj, float(w), i, 1.0))
    c = max(max(a.sup_norm() for a in atoms), 1.0)
    return TrajectoryMeasure(atoms, c, m0)


def pushforward_at(mu: TrajectoryMeasure, t: float, merge_tol: float = 1e-9) -> AtomicMeasure:
    """Time-t marginal of the trajectory measure; coincident atoms merge.

    At the initial time the fiber bookkeeping reproduces the initial
    distribution exactly, weight for weight.
    """
    t0 = min(a.traj.t0 for a in mu.atoms)
    if t < t0 - 1e-12 or t > max(a.traj.t1 for a in mu.atoms) + 1e-12:
        raise DomainError("pushforward time outside the trajectory horizon")
    if abs(t - t0) <= 1e-15:
        return AtomicMeasure(mu.m0.points.copy(), mu.m0.weights.copy())
    pts = np.stack([a.traj.state_at(t) for a in mu.atoms])
    ws = np.array([a.weight for a in mu.atoms])
    return AtomicMeasure(pts, ws).merged(merge_tol)


# ---------------------------------------------------------------------------
# fictitious play
# ---------------------------------------------------------------------------


@dataclass
class EquilibriumDiagnostics:
    exploitability: list[float]
    w1_successive: list[float]
    final_support_gap: float
    e0_drift: list[float]

    def to_json(self) -> dict:
        return {
            "exploitability": self.exploitability,
            "w1_successive": self.w1_successive,
            "final_support_gap": self.final_support_gap,
            "e0_drift": self.e0_drift,
        }


def _freeze_field(spec: CouplingSpec, mu: TrajectoryMeasure, times) -> FrozenField:
    measures = [pushforward_at(mu, float(t)) for t in times]
    return FrozenField(spec, times, measures)


def _fiber_indices(mu: TrajectoryMeasure) -> dict[int, list[int]]:
    fibers: dict[int, list[int]] = {}
    for idx, a in enumerate(mu.atoms):
        fibers.setdefault(a.origin, []).append(idx)
    return fibers


def _renormalize_fibers(mu: TrajectoryMeasure) -> None:
    """Rescale relative weights fiber by fiber so each sums to exactly one,
    then recompute absolute weights as w0 * q (no cross-fiber drift)."""
    fibers = _fiber_indices(mu)
    for origin, idxs in fibers.items():
        qs = [mu.atoms[i].rel_weight for i in idxs]
        s = math.fsum(qs)
        if s <= 0:
            raise SolverError("fiber lost all mass")
        for i in idxs:
            mu.atoms[i].rel_weight /= s
        head = math.fsum(mu.atoms[i].rel_weight for i in idxs[:-1])
        mu.atoms[idxs[-1]].rel_weight = 1.0 - head
        w0 = float(mu.m0.weights[origin])
        for i in idxs:
            mu.atoms[i].weight = w0 * mu.atoms[i].rel_weight


def _atom_costs(mu: TrajectoryMeasure, field_spec: CostSpec) -> list[float]:
    """Costs of every atom under a frozen field, evaluated in one batch."""
    if not mu.atoms:
        return []
    counts = [len(a.traj.times) for a in mu.atoms]
    all_ts = np.concatenate([a.traj.times for a in mu.atoms])
    all_pts = np.concatenate([a.traj.states for a in mu.atoms])
    lvals = field_spec.ell_at(all_pts, all_ts)
    finals = np.stack([a.traj.final for a in mu.atoms])
    gvals = field_spec.g_at(finals)
    out = []
    pos = 0
    for a, n, gv in zip(mu.atoms, counts, gvals):
        sl = slice(pos, pos + n)
        running = float(np.trapezoid(lvals[sl], all_ts[sl])) if n >= 2 else 0.0
        out.append(0.5 * a.traj.control.l2_norm_sq() + running + float(gv))
        pos += n
    return out


def _initial_marginal_drift(mu: TrajectoryMeasure) -> float:
    """Deviation of the bookkept initial marginal from m0: fiber masses away
    from one plus start-state mismatches (zero by construction)."""
    drift = 0.0
    fibers = _fiber_indices(mu)
    for origin, idxs in fibers.items():
        drift = max(drift, abs(math.fsum(mu.atoms[i].rel_weight for i in idxs) - 1.0))
        x0 = mu.m0.points[origin]
        for i in idxs:
            drift = max(drift, float(np.max(np.abs(mu.atoms[i].traj.start - x0))))
    return drift


def fictitious_play(
    m0: AtomicMeasure,
    set_: ConstraintSet,
    nu: float,
    spec: CouplingSpec,
    disc: SolveConfig,
    n_iters: int,
    T: float,
    n_time_checks: int = 9,
    prune_rel: float = 1e-10,
    merge_tol: float = 1e-8,
) -> tuple[TrajectoryMeasure, EquilibriumDiagnostics]:
    """Harmonic-weight fictitious play over best-response trajectory measures.

    Each iteration freezes the induced measure path, solves one constrained
    control problem per initial atom, and averages the best responses into
    the trajectory measure.  Convergence is monitored, never assumed.
    """
    for p in m0.points:
        if not set_.contains(p):
            raise DomainError(f"initial atom {tuple(p)} lies outside the set")
    mu = stay_put_measure(m0, nu, T, disc.n_steps, disc.substeps)
    grid_times = np.linspace(0.0, T, disc.n_steps + 1)
    check_ids = np.unique(np.linspace(0, disc.n_steps, n_time_checks).astype(int))
    check_times = grid_times[check_ids]
    ctilde = control_norm_bound(spec.bound_K, T)
    expl_series: list[float] = []
    w1_series: list[float] = []
    drift_series: list[float] = []
    prev_br: dict[int, np.ndarray] = {}

    for k in range(1, n_iters + 1):
        field = _freeze_field(spec, mu, grid_times)
        field_spec = field.cost_spec()
        atom_costs = _atom_costs(mu, field_spec)
        fibers = _fiber_indices(mu)
        brs: dict[int, Trajectory] = {}
        u_hat: dict[int, float] = {}
        for origin, idxs in fibers.items():
            x0 = m0.points[origin]
            inits = []
            if origin in prev_br:
                inits.append(prev_br[origin])
            best_atom = min(idxs, key=lambda i: atom_costs[i])
            inits.append(mu.atoms[best_atom].traj.control.values)
            disc_i = replace(
                disc,
                init_controls=tuple(inits),
                seed=disc.seed + 7919 * k + origin,
            )
            sol = solve_trajectory(x0, 0.0, T, set_, nu, field_spec, disc_i)
            if sol.traj.control.l2_norm() > ctilde + 1e-6:
                raise SolverError("best response violates the a-priori control bound")
            brs[origin] = sol.traj
            prev_br[origin] = sol.traj.control.values.copy()
            u_hat[origin] = min([sol.value] + [atom_costs[i] for i in idxs])
        expl = math.fsum(
            mu.atoms[i].weight * (atom_costs[i] - u_hat[a_origin])
            for a_origin, idxs in fibers.items()
            for i in idxs
        )
        expl_series.append(max(expl, 0.0))

        before = [pushforward_at(mu, float(t)) for t in check_times]
        lam = 1.0 / (k + 1.0)
        for a in mu.atoms:
            a.rel_weight *= 1.0 - lam
        for origin, traj in brs.items():
            merged = False
            for i in fibers[origin]:
                old = mu.atoms[i].traj.control.values
                new = traj.control.values
                if old.shape == new.shape and float(np.max(np.abs(old - new), initial=0.0)) <= merge_tol:
                    mu.atoms[i].rel_weight += lam
                    merged = True
                    break
            if not merged:
                mu.atoms.append(TrajectoryAtom(traj, 0.0, origin, lam))
        mu.atoms = [a for a in mu.atoms if a.rel_weight >= prune_rel]
        _renormalize_fibers(mu)
        mu.c_bound = max(
            max(a.sup_norm() for a in mu.atoms),
            max(a.control_l2() for a in mu.atoms),
            ctilde,
        )
        after = [pushforward_at(mu, float(t)) for t in check_times]
        w1_series.append(max(wasserstein1(a, b) for a, b in zip(before, after)))
        drift_series.append(_initial_marginal_drift(mu))

    field = _freeze_field(spec, mu, grid_times)
    final_costs = _atom_costs(mu, field.cost_spec())
    fibers = _fiber_indices(mu)
    gap = 0.0
    for origin, idxs in fibers.items():
        u_best = min(u_hat.get(origin, math.inf), min(final_costs[i] for i in idxs))
        gap = max(gap, max(final_costs[i] - u_best for i in idxs))
    diags = EquilibriumDiagnostics(expl_series, w1_series, float(gap), drift_series)
    return mu, diags


def exploitability(mu: TrajectoryMeasure, set_: ConstraintSet, nu: float,
                   spec: CouplingSpec, disc: SolveConfig, T: float) -> float:
    """Weighted average optimality gap of the measure's atoms against fresh
    best responses under the costs the measure itself induces."""
    grid_times = np.linspace(0.0, T, disc.n_steps + 1)
    field = _freeze_field(spec, mu, grid_times)
    field_spec = field.cost_spec()
    atom_costs = _atom_costs(mu, field_spec)
    fibers = _fiber_indices(mu)
    total = 0.0
    for origin, idxs in fibers.items():
        x0 = mu.m0.points[origin]
        inits = tuple(mu.atoms[i].traj.control.values for i in idxs[:3])
        sol = solve_trajectory(x0, 0.0, T, set_, nu, field_spec,
                               replace(disc, init_controls=inits, seed=disc.seed + origin))
        u_hat = min([sol.value] + [atom_costs[i] for i in idxs])
        total += sum(mu.atoms[i].weight * (atom_costs[i] - u_hat) for i in idxs)
    return max(float(total), 0.0)


def mild_solution_extract(mu: TrajectoryMeasure, set_: ConstraintSet, nu: float,
                          spec: CouplingSpec, grid) -> tuple:
    """Value grid under the measure-induced costs plus the marginal path."""
    from .ocp import value_grid_backward

    times = np.linspace(0.0, grid.t_end, grid.nt + 1)
    field = _freeze_field(spec, mu, times)
    vgrid = value_grid_backward(set_, nu, field.cost_spec(), grid)
    return vgrid, field.measures


@dataclass
class MonotonicityReport:
    min_pairing_value: float
    is_monotone_on_samples: bool
    values: list[dict]

    def to_json(self) -> dict:
        return {
            "min_pairing_value": self.min_pairing_value,
            "is_monotone_on_samples": self.is_monotone_on_samples,
            "values": self.values,
        }


def monotonicity_check(spec: CouplingSpec, pairs, t: float = 0.0) -> MonotonicityReport:
    """Evaluate int (F[m1] - F[m2]) d(m1 - m2) for the running coupling at a
    fixed time and for the terminal coupling, over the sample pairs."""
    rows = []
    worst = math.inf
    for m1, m2 in pairs:
        l_11, g_11 = coupling_eval(spec, m1, m1.points, t)
        l_21, g_21 = coupling_eval(spec, m2, m1.points, t)
        l_12, g_12 = coupling_eval(spec, m1, m2.points, t)
        l_22, g_22 = coupling_eval(spec, m2, m2.points, t)
        val_l = float(m1.weights @ (l_11 - l_21) - m2.weights @ (l_12 - l_22))
        val_g = float(m1.weights @ (g_11 - g_21) - m2.weights @ (g_12 - g_22))
        rows.append({"L": val_l, "G": val_g})
        worst = min(worst, val_l, val_g)
    if not rows:
        worst = 0.0
    return MonotonicityReport(float(worst), bool(worst >= -1e-9), rows)
