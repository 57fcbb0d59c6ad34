"""Controlled planar dynamics y1' = a1, y2' = |y1|^nu * a2.

Controls are piecewise constant, which makes y1 exactly piecewise linear.
The factor |y1|^nu then integrates in closed form on every interval where
y1 keeps its sign, so trajectory endpoints are exact (up to roundoff) for
piecewise-constant controls: every control piece is split at the unique
zero of the linear y1 before applying the power rule.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, DomainError
from .geometry import ConstraintSet

_SMALL_DRIFT = 1e-12


@dataclass(frozen=True)
class ControlSignal:
    """Piecewise-constant control on [t0, t1].

    ``values`` has one (a1, a2) row per piece; ``times`` are the n+1
    breakpoints.  The uniform-grid constructor is the normal path; explicit
    breakpoints exist because concatenation and time-rescaling produce
    pieces of unequal length.
    """

    t0: float
    t1: float
    values: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if values.size == 0:
            values = values.reshape(0, 2)
        times = np.asarray(self.times, dtype=float)
        if values.ndim != 2 or values.shape[1] != 2:
            raise ConfigurationError("control values must be (n, 2)")
        if len(times) != len(values) + 1:
            raise ConfigurationError("control needs len(times) == len(values) + 1")
        if len(times) >= 2 and not np.all(np.diff(times) > 0):
            raise ConfigurationError("control breakpoints must be strictly increasing")
        if len(times) and (abs(times[0] - self.t0) > 1e-12 or abs(times[-1] - self.t1) > 1e-12):
            raise ConfigurationError("control breakpoints must span [t0, t1]")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "times", times)

    @classmethod
    def uniform(cls, t0: float, t1: float, values) -> "ControlSignal":
        values = np.atleast_2d(np.asarray(values, dtype=float))
        times = np.linspace(t0, t1, len(values) + 1)
        return cls(t0, t1, values, times)

    @classmethod
    def zero(cls, t0: float, t1: float, n_pieces: int = 1) -> "ControlSignal":
        return cls.uniform(t0, t1, np.zeros((n_pieces, 2)))

    @classmethod
    def empty(cls, t: float = 0.0) -> "ControlSignal":
        return cls(t, t, np.zeros((0, 2)), np.array([t]))

    @property
    def n_pieces(self) -> int:
        return len(self.values)

    @property
    def durations(self) -> np.ndarray:
        return np.diff(self.times)

    def l2_norm_sq(self, t_start: float | None = None) -> float:
        """Exact squared L2 norm of the control on [t_start, t1]."""
        if self.n_pieces == 0:
            return 0.0
        t_start = self.t0 if t_start is None else t_start
        overlap = np.clip(self.times[1:], t_start, None) - np.clip(self.times[:-1], t_start, None)
        overlap = np.clip(overlap, 0.0, None)
        return float(np.sum((self.values**2).sum(axis=1) * overlap))

    def l2_norm(self, t_start: float | None = None) -> float:
        return math.sqrt(self.l2_norm_sq(t_start))

    def abs_integral(self, component: int) -> np.ndarray:
        """Cumulative integral of |a_component| at the breakpoints."""
        if self.n_pieces == 0:
            return np.zeros(1)
        inc = np.abs(self.values[:, component]) * self.durations
        return np.concatenate([[0.0], np.cumsum(inc)])

    def value_at(self, t: float) -> np.ndarray:
        if self.n_pieces == 0:
            return np.zeros(2)
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        i = min(max(i, 0), self.n_pieces - 1)
        return self.values[i]


def abs_pow_integral(c, a1, h, nu):
    """Exact integral of |c + a1*s|**nu over s in [0, h] (vectorized).

    Splits internally at the zero of the linear argument; the closed form
    is the power rule applied on each constant-sign side.
    """
    c = np.asarray(c, dtype=float)
    a1 = np.asarray(a1, dtype=float)
    h = np.asarray(h, dtype=float)
    c, a1, h = np.broadcast_arrays(c, a1, h)
    p = nu + 1.0
    zh = c + a1 * h
    scale = np.abs(c) + np.abs(zh)
    small = np.abs(a1) * h <= 1e-8 * np.maximum(scale, 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        # midpoint value: exact when a1 == 0, avoids cancellation when tiny
        mid = np.abs(c + 0.5 * a1 * h) ** nu * h
        s_star = np.where(a1 != 0, -c / np.where(a1 != 0, a1, 1.0), -1.0)
        crosses = (s_star > 0) & (s_star < h) & ~small
        # constant sign: signed power-rule difference
        sgn = np.sign(c + 0.5 * a1 * h)
        sgn = np.where(sgn == 0, np.sign(a1), sgn)
        no_cross = sgn * (np.abs(zh) ** p - np.abs(c) ** p) / (p * np.where(a1 != 0, a1, 1.0))
        # with a crossing, both halves contribute positively
        cross = (np.abs(c) ** p + np.abs(zh) ** p) / (p * np.abs(np.where(a1 != 0, a1, 1.0)))
    out = np.where(small, mid, np.where(crosses, cross, no_cross))
    return out


@dataclass
class Trajectory:
    """State path on a time grid together with the control that produced it.

    ``times`` always contains all control breakpoints; states at those nodes
    are exact for the piecewise-constant control.
    """

    times: np.ndarray
    states: np.ndarray
    control: ControlSignal
    nu: float
    cost_breakdown: dict | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if len(self.times) != len(self.states):
            raise ConfigurationError("states length must equal times length")

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t1(self) -> float:
        return float(self.times[-1])

    @property
    def duration(self) -> float:
        return self.t1 - self.t0

    @property
    def start(self) -> np.ndarray:
        return self.states[0]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def state_at(self, t: float) -> np.ndarray:
        """Exact state at time t (closed-form continuation from the last node)."""
        t = float(t)
        if t <= self.times[0] + 1e-15:
            return self.states[0].copy()
        if t >= self.times[-1] - 1e-15:
            return self.states[-1].copy()
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        ta = self.times[i]
        y1a, y2a = self.states[i]
        a1, a2 = self.control.value_at(0.5 * (ta + t))
        h = t - ta
        y1 = y1a + a1 * h
        y2 = y2a + a2 * float(abs_pow_integral(y1a, a1, h, self.nu))
        return np.array([y1, y2])

    def states_at(self, ts) -> np.ndarray:
        return np.stack([self.state_at(t) for t in np.asarray(ts, dtype=float)])

    def sup_distance(self, other: "Trajectory", n: int = 129) -> float:
        ts = np.linspace(max(self.t0, other.t0), min(self.t1, other.t1), n)
        return float(np.max(np.hypot(*(self.states_at(ts) - other.states_at(ts)).T)))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t,y1,y2,a1,a2\n")
            for t, (y1, y2) in zip(self.times, self.states):
                a1, a2 = self.control.value_at(min(t, self.t1 - 1e-15)) if self.duration > 0 else (0.0, 0.0)
                fh.write(f"{float(t)!r},{float(y1)!r},{float(y2)!r},{float(a1)!r},{float(a2)!r}\n")

    def breakdown_json(self) -> str:
        if self.cost_breakdown is None:
            raise DomainError("trajectory has not been costed")
        return json.dumps(self.cost_breakdown, sort_keys=True)


def integrate(x, control: ControlSignal, nu: float, substeps: int = 8) -> Trajectory:
    """Integrate the dynamics from x under a piecewise-constant control.

    y1 is exact; each y2 increment uses the closed-form power-rule integral,
    with the control piece split at the zero of y1 so no quadrature error
    enters at the degeneracy axis.
    """
    if nu <= 0:
        raise ConfigurationError("nu must be positive")
    if substeps < 1:
        raise ConfigurationError("substeps must be >= 1")
    x = np.asarray(x, dtype=float)
    times = [control.t0]
    states = [x.copy()]
    y1, y2 = float(x[0]), float(x[1])
    for i in range(control.n_pieces):
        ta, tb = control.times[i], control.times[i + 1]
        a1, a2 = control.values[i]
        h = tb - ta
        cuts = list(np.linspace(ta, tb, substeps + 1)[1:])
        if a1 != 0.0:
            s_star = ta - y1 / a1
            if ta < s_star < tb:
                cuts = sorted(set(cuts + [s_star]))
        prev = ta
        for tc in cuts:
            dh = tc - prev
            inc = float(abs_pow_integral(y1, a1, dh, nu))
            y1 = y1 + a1 * dh
            y2 = y2 + a2 * inc
            times.append(tc)
            states.append(np.array([y1, y2]))
            prev = tc
    return Trajectory(np.array(times), np.stack(states), control, nu)


@dataclass(frozen=True)
class CostSpec:
    """Running cost ell(x, t), terminal cost g(x), and a sup-norm bound.

    ``ell`` and ``g`` must accept (..., 2) point arrays (ell also a matching
    time array or scalar) and return matching shapes.
    """

    ell: Callable
    g: Callable
    bound_K: float

    def ell_at(self, pts: np.ndarray, t) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return np.asarray(self.ell(pts, t), dtype=float)

    def g_at(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return np.asarray(self.g(pts), dtype=float)


def cost(traj: Trajectory, spec: CostSpec, t_start: float | None = None) -> float:
    """Total cost: exact control energy + trapezoid running cost + terminal cost.

    The horizon is the trajectory's final time; raises if t_start is not
    covered by the trajectory.
    """
    t_start = traj.t0 if t_start is None else float(t_start)
    if t_start < traj.t0 - 1e-12 or t_start > traj.t1 + 1e-12:
        raise DomainError(f"t_start {t_start} outside trajectory span [{traj.t0}, {traj.t1}]")
    t_start = min(max(t_start, traj.t0), traj.t1)
    energy = 0.5 * traj.control.l2_norm_sq(t_start)
    sel = traj.times >= t_start - 1e-15
    ts = traj.times[sel]
    ys = traj.states[sel]
    if len(ts) == 0 or ts[0] > t_start + 1e-15:
        ts = np.concatenate([[t_start], ts])
        ys = np.concatenate([traj.state_at(t_start)[None, :], ys])
    if len(ts) >= 2:
        lvals = spec.ell_at(ys, ts)
        running = float(np.trapezoid(lvals, ts))
    else:
        running = 0.0
    terminal = float(spec.g_at(traj.final[None, :])[0])
    total = energy + running + terminal
    traj.cost_breakdown = {
        "control_energy": energy,
        "running": running,
        "terminal": terminal,
        "total": total,
    }
    return total


def rescale_concat(prefix: Trajectory, tail: Trajectory, endpoint_tol: float = 1e-9,
                   substeps: int = 4) -> Trajectory:
    """Concatenate a prefix on [0, delta] with a tail whose control is
    time-rescaled onto [delta, T].

    The rescaled control is (T/(T-delta)) * a(tau) on pieces shrunk by the
    factor (T-delta)/T, so the squared L2 norm of the tail grows by exactly
    T/(T-delta) and the final state is the tail's final state.
    """
    if prefix.nu != tail.nu:
        raise ConfigurationError("prefix and tail must share nu")
    delta = prefix.duration
    horizon = tail.duration
    if delta >= horizon:
        raise DomainError("prefix duration must be below the tail horizon")
    gap = float(np.hypot(*(prefix.final - tail.start)))
    if gap > endpoint_tol:
        raise DomainError(f"prefix endpoint misses tail start by {gap:.3e}")
    if delta == 0.0:
        ctrl = ControlSignal(tail.t0, tail.t1, tail.control.values.copy(), tail.control.times.copy())
        return Trajectory(tail.times.copy(), tail.states.copy(), ctrl, tail.nu)
    kappa = (horizon - delta) / horizon
    t_join = prefix.t0 + delta
    tail_times = t_join + (tail.control.times - tail.t0) * kappa
    times = np.concatenate([prefix.control.times[:-1], tail_times])
    values = np.concatenate([prefix.control.values, tail.control.values / kappa])
    ctrl = ControlSignal(times[0], times[-1], values, times)
    out = integrate(prefix.start, ctrl, tail.nu, substeps=substeps)
    drift = float(np.hypot(*(out.final - tail.final)))
    scale = max(1.0, float(np.max(np.abs(tail.final))))
    if drift > 1e-7 * scale:
        raise DomainError(f"rescaled concatenation drifted by {drift:.3e}")
    # the identity holds exactly in real arithmetic; pin the endpoint
    out.states[-1] = tail.final.copy()
    return out


@dataclass
class AdmissibilityReport:
    max_violation: float
    first_exit_time: float | None
    n_checked: int

    @property
    def admissible(self) -> bool:
        return self.first_exit_time is None

    def to_json(self) -> dict:
        return {
            "max_violation": self.max_violation,
            "first_exit_time": self.first_exit_time,
            "n_checked": self.n_checked,
        }


def admissibility_check(traj: Trajectory, set_: ConstraintSet) -> AdmissibilityReport:
    """Scan grid states and the exact midpoint of every step for membership."""
    ts = traj.times
    pts = traj.states
    if len(ts) >= 2:
        mid_ts = 0.5 * (ts[:-1] + ts[1:])
        mid_pts = traj.states_at(mid_ts)
        all_ts = np.concatenate([ts, mid_ts])
        all_pts = np.concatenate([pts, mid_pts])
        order = np.argsort(all_ts, kind="stable")
        all_ts, all_pts = all_ts[order], all_pts[order]
    else:
        all_ts, all_pts = ts, pts
    viol = set_.violation_many(all_pts)
    max_violation = float(max(0.0, np.max(viol)))
    first_exit = None
    bad = np.nonzero(viol > set_.tol_member)[0]
    if len(bad):
        first_exit = float(all_ts[bad[0]])
    return AdmissibilityReport(max_violation, first_exit, len(all_ts))
