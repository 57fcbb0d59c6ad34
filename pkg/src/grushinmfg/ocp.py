"""Single-agent constrained optimal control: a direct multistart solver on
piecewise-constant controls and a backward semi-Lagrangian value sweep.

The two solvers are deliberately independent and serve as each other's
oracle: the direct solver discretizes the control, the sweep discretizes
the state, and cross-checks between them bound the discretization error
of both.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import (
    ControlSignal,
    CostSpec,
    Trajectory,
    abs_pow_integral,
    admissibility_check,
    cost,
    integrate,
)
from .errors import ConfigurationError, DomainError, SolverError
from .geometry import ConstraintSet
from .reachability import connect
from .errors import UnsupportedWitnessError


def control_norm_bound(bound_k: float, horizon: float) -> float:
    """A-priori L2 bound for optimal controls: comparing any candidate with
    the stay-put control under |ell|, |g| <= K gives ||a||^2 <= 2(2K + K*T) + 1."""
    return math.sqrt(2.0 * (2.0 * bound_k + bound_k * horizon) + 1.0)


# ---------------------------------------------------------------------------
# direct trajectory optimization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SolveConfig:
    n_steps: int = 16
    n_restarts: int = 4
    penalty_weight: float = 1e4
    max_iters: int = 120
    seed: int = 0
    grad_tol: float = 1e-5
    fd_step: float = 1e-6
    feas_tol: float = 1e-6
    substeps: int = 2
    warm_targets: tuple = ()
    init_controls: tuple = ()


@dataclass
class OcpSolution:
    traj: Trajectory
    value: float
    multistart_spread: float
    converged: bool
    residual: float
    violation: float

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "multistart_spread": self.multistart_spread,
            "converged": self.converged,
            "residual": self.residual,
            "violation": self.violation,
            "cost_breakdown": self.traj.cost_breakdown,
        }


def _batch_paths(x, U, nu, h):
    """Piece-boundary states for a batch of uniform piecewise controls."""
    B, n, _ = U.shape
    y1 = np.empty((B, n + 1))
    y1[:, 0] = x[0]
    np.cumsum(U[:, :, 0] * h, axis=1, out=y1[:, 1:])
    y1[:, 1:] += x[0]
    inc = U[:, :, 1] * abs_pow_integral(y1[:, :-1], U[:, :, 0], h, nu)
    y2 = np.empty((B, n + 1))
    y2[:, 0] = x[1]
    np.cumsum(inc, axis=1, out=y2[:, 1:])
    y2[:, 1:] += x[1]
    return np.stack([y1, y2], axis=2)


def _batch_objective(set_, spec, x, U, nu, ts, pen_weight):
    h = ts[1] - ts[0]
    B, n, _ = U.shape
    P = _batch_paths(x, U, nu, h)
    energy = 0.5 * h * np.sum(U * U, axis=(1, 2))
    flat = P.reshape(-1, 2)
    lvals = spec.ell_at(flat, np.tile(ts, B)).reshape(B, n + 1)
    running = np.trapezoid(lvals, dx=h, axis=1)
    terminal = spec.g_at(P[:, -1, :])
    raw = energy + running + terminal
    v = np.clip(set_.violation_many(flat).reshape(B, n + 1), 0.0, None)
    pen = pen_weight * h * np.sum(v * v, axis=1)
    return raw + pen, raw, v.max(axis=1)


def _project_ball(U, h, cmax):
    nrm = math.sqrt(h * float(np.sum(U * U)))
    if nrm > cmax:
        return U * (cmax / nrm)
    return U


def _descend(objective, u0, h, cmax, max_iters, grad_tol, fd_step):
    u = _project_ball(u0.copy(), h, cmax)
    step = 1.0
    gnorm = math.inf
    f0 = float(objective(u[None])[0])
    for _ in range(max_iters):
        flat = u.ravel()
        eps = fd_step * np.maximum(1.0, np.abs(flat))
        batch = np.repeat(flat[None], flat.size, axis=0)
        batch[np.arange(flat.size), np.arange(flat.size)] += eps
        fb = objective(np.concatenate([flat[None], batch]).reshape(-1, *u.shape))
        f0 = float(fb[0])
        grad = ((fb[1:] - f0) / eps).reshape(u.shape)
        gnorm = float(np.max(np.abs(grad)))
        if gnorm < grad_tol:
            break
        accepted = False
        trial = step
        for _ in range(50):
            cand = _project_ball(u - trial * grad, h, cmax)
            fc = float(objective(cand[None])[0])
            if fc < f0 - 1e-4 * trial * gnorm * gnorm:
                u, f0 = cand, fc
                step = min(trial * 1.8, 1e3)
                accepted = True
                break
            trial *= 0.5
            if trial < 1e-14:
                break
        if not accepted:
            break
    return u, f0, gnorm


def _reconstruct_through(set_, x, U, nu, h):
    """Project the node path onto the set and invert the dynamics through the
    projected nodes (exact per piece); None when a node sits on the axis but
    must still move vertically."""
    P = _batch_paths(x, U[None], nu, h)[0]
    proj = set_.project_many(P)
    proj[0] = np.asarray(x, dtype=float)
    a1 = np.diff(proj[:, 0]) / h
    integ = abs_pow_integral(proj[:-1, 0], a1, h, nu)
    d2 = np.diff(proj[:, 1])
    stuck = (integ <= 1e-14) & (np.abs(d2) > 1e-12)
    if np.any(stuck):
        return None
    a2 = np.where(integ > 1e-14, d2 / np.where(integ > 1e-14, integ, 1.0), 0.0)
    return np.stack([a1, a2], axis=1)


def _finalize_candidate(set_, spec, x, t, T, u, nu, substeps):
    ctrl = ControlSignal.uniform(t, T, u)
    traj = integrate(x, ctrl, nu, substeps=substeps)
    rep = admissibility_check(traj, set_)
    if rep.max_violation > set_.tol_member:
        h = (T - t) / u.shape[0]
        u2 = _reconstruct_through(set_, x, u, nu, h)
        if u2 is not None:
            traj2 = integrate(x, ControlSignal.uniform(t, T, u2), nu, substeps=substeps)
            rep2 = admissibility_check(traj2, set_)
            if rep2.max_violation < rep.max_violation:
                traj, rep = traj2, rep2
    value = cost(traj, spec, t)
    return traj, value, rep


def _control_first_motion(u):
    moving = np.nonzero(np.abs(u).sum(axis=1) > 1e-12)[0]
    return int(moving[0]) if len(moving) else u.shape[0]


def solve_trajectory(x, t, T, set_: ConstraintSet, nu: float, spec: CostSpec,
                     disc: SolveConfig) -> OcpSolution:
    """Penalized projected gradient descent over piecewise-constant controls
    with multistart (stay-put, connector-seeded, random) initializations.

    Candidates are admitted only if they pass the admissibility scan; the
    stay-put control is always admissible, so a solution always exists.
    """
    x = np.asarray(x, dtype=float)
    if not set_.contains(x):
        raise DomainError(f"start point {tuple(x)} is not in the set")
    if not T > t:
        raise ConfigurationError("horizon must satisfy T > t")
    n = disc.n_steps
    h = (T - t) / n
    ts = np.linspace(t, T, n + 1)
    cmax = control_norm_bound(spec.bound_K, T - t)
    rng = np.random.default_rng(disc.seed)

    def objective(U):
        return _batch_objective(set_, spec, x, U, nu, ts, disc.penalty_weight)[0]

    # seed priority: explicit warm starts, the stay-put control, connector
    # seeds, then random fills, capped at the restart budget
    seeds = []
    for u_init in disc.init_controls:
        u_init = np.asarray(u_init, dtype=float)
        if u_init.shape == (n, 2):
            seeds.append(u_init.copy())
    seeds.append(np.zeros((n, 2)))
    for wt in disc.warm_targets:
        try:
            res = connect(set_, nu, x, wt)
        except (UnsupportedWitnessError, DomainError):
            continue
        u0 = np.zeros((n, 2))
        for i in range(n):
            tau = (i + 0.5) * h
            if tau < res.delta:
                u0[i] = res.traj.control.value_at(tau)
        seeds.append(u0)
    while len(seeds) < max(disc.n_restarts, 1):
        seeds.append(rng.normal(scale=0.3, size=(n, 2)))
    seeds = seeds[: max(disc.n_restarts, 1)]

    candidates = []
    # un-descended stay-put as the guaranteed-admissible fallback
    traj0, value0, rep0 = _finalize_candidate(set_, spec, x, t, T, np.zeros((n, 2)), nu, disc.substeps)
    candidates.append((traj0, value0, rep0, math.inf))
    for u0 in seeds:
        u, _, gnorm = _descend(objective, u0, h, cmax, disc.max_iters, disc.grad_tol, disc.fd_step)
        traj_c, value_c, rep_c = _finalize_candidate(set_, spec, x, t, T, u, nu, disc.substeps)
        candidates.append((traj_c, value_c, rep_c, gnorm))

    admit_tol = max(set_.tol_member, disc.feas_tol)
    admissible = [c for c in candidates if c[2].max_violation <= admit_tol]
    if not admissible:
        raise SolverError("no admissible candidate; the stay-put control should always qualify")

    def sort_key(c):
        traj_c, value_c, _, _ = c
        energy = 0.5 * traj_c.control.l2_norm_sq()
        return (value_c, energy, _control_first_motion(traj_c.control.values))

    admissible.sort(key=sort_key)
    best_traj, best_value, best_rep, best_gnorm = admissible[0]
    values = [c[1] for c in admissible]
    spread = float(max(values) - min(values))
    converged = bool(best_gnorm < disc.grad_tol * 10 and best_rep.max_violation <= admit_tol)
    cost(best_traj, spec, t)  # refresh the stored breakdown
    return OcpSolution(
        traj=best_traj,
        value=float(best_value),
        multistart_spread=spread,
        converged=converged,
        residual=float(best_gnorm),
        violation=float(best_rep.max_violation),
    )


# ---------------------------------------------------------------------------
# semi-Lagrangian backward sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    nx1: int
    nx2: int
    nt: int
    t_end: float = 1.0
    n_r: int = 12
    n_theta: int = 16
    a_max: float | None = None
    a_min: float | None = None
    box: tuple | None = None
    hard_cap: float = 200.0


@dataclass
class ValueGrid:
    x1s: np.ndarray
    x2s: np.ndarray
    times: np.ndarray
    values: np.ndarray  # (nt+1, nx1, nx2), NaN at infeasible nodes
    mask: np.ndarray
    meta: dict

    @property
    def space_points(self) -> np.ndarray:
        X1, X2 = np.meshgrid(self.x1s, self.x2s, indexing="ij")
        return np.stack([X1[self.mask], X2[self.mask]], axis=1)

    def interp_space(self, k: int, pts: np.ndarray) -> np.ndarray:
        return _masked_bilinear(self.x1s, self.x2s, self.values[k], pts)

    def value_at(self, p, t: float) -> float:
        p = np.asarray(p, dtype=float).reshape(1, 2)
        k = int(np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 2))
        t0, t1 = self.times[k], self.times[k + 1]
        w = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
        v0 = float(self.interp_space(k, p)[0])
        v1 = float(self.interp_space(k + 1, p)[0])
        return (1 - w) * v0 + w * v1

    def to_csv(self, path) -> None:
        ii, jj = np.nonzero(self.mask)
        with open(path, "w") as fh:
            fh.write("x1,x2,t,u\n")
            for k, tk in enumerate(self.times):
                vals = self.values[k]
                for i, j in zip(ii, jj):
                    fh.write(
                        f"{float(self.x1s[i])!r},{float(self.x2s[j])!r},"
                        f"{float(tk)!r},{float(vals[i, j])!r}\n"
                    )

    def meta_json(self) -> str:
        return json.dumps(self.meta, sort_keys=True)


def _masked_bilinear(x1s, x2s, vals, pts):
    """Bilinear interpolation that drops NaN corners and renormalizes the
    weights; +inf where every surrounding corner is infeasible."""
    pts = np.asarray(pts, dtype=float)
    i = np.clip(np.searchsorted(x1s, pts[:, 0], side="right") - 1, 0, len(x1s) - 2)
    j = np.clip(np.searchsorted(x2s, pts[:, 1], side="right") - 1, 0, len(x2s) - 2)
    fx = (pts[:, 0] - x1s[i]) / (x1s[i + 1] - x1s[i])
    fy = (pts[:, 1] - x2s[j]) / (x2s[j + 1] - x2s[j])
    fx = np.clip(fx, 0.0, 1.0)
    fy = np.clip(fy, 0.0, 1.0)
    total = np.zeros(len(pts))
    wsum = np.zeros(len(pts))
    for di, dj, w in (
        (0, 0, (1 - fx) * (1 - fy)),
        (1, 0, fx * (1 - fy)),
        (0, 1, (1 - fx) * fy),
        (1, 1, fx * fy),
    ):
        corner = vals[i + di, j + dj]
        feas = ~np.isnan(corner)
        total += np.where(feas, w * np.where(feas, corner, 0.0), 0.0)
        wsum += np.where(feas, w, 0.0)
    out = np.full(len(pts), np.inf)
    ok = wsum > 1e-12
    out[ok] = total[ok] / wsum[ok]
    return out


def control_samples(bound_k, horizon, dt, span, n_r, n_theta, a_max=None, a_min=None,
                    hard_cap=200.0):
    """Zero control plus a polar grid with geometric radii; the outer radius
    follows the a-priori L2 bound scaled to one step and is clipped so a
    single step cannot overshoot the grid."""
    if a_max is None:
        a_max = min(2.0 * math.sqrt(2.0 * max(bound_k, 1e-12) * (1.0 + horizon)) / math.sqrt(dt),
                    span / dt, hard_cap)
    if a_min is None:
        a_min = min(0.25 * span / max(1, 64) / dt, a_max / 8.0)
        a_min = max(a_min, a_max * 1e-4)
    radii = np.geomspace(a_min, a_max, n_r)
    angles = np.linspace(0.0, 2.0 * math.pi, n_theta, endpoint=False)
    samples = [np.zeros(2)]
    for r in radii:
        for th in angles:
            samples.append(np.array([r * math.cos(th), r * math.sin(th)]))
    return np.stack(samples)


def sweep_step(set_, spec, x1s, x2s, mask, u_next, t, dt, samples, nu):
    """One backward dynamic-programming step; pure function of its inputs."""
    X1, X2 = np.meshgrid(x1s, x2s, indexing="ij")
    P = np.stack([X1[mask], X2[mask]], axis=1)
    ell_vals = spec.ell_at(P, t)
    pow_y1 = np.abs(P[:, 0]) ** nu
    best = np.full(len(P), np.inf)
    for a in samples:
        if a[0] == 0.0 and a[1] == 0.0:
            land = P
        else:
            land = P + dt * np.stack([np.full(len(P), a[0]), pow_y1 * a[1]], axis=1)
        ok = set_.contains_many(land)
        if not np.any(ok):
            continue
        vals = _masked_bilinear(x1s, x2s, u_next, land)
        q = dt * (0.5 * float(a @ a) + ell_vals) + vals
        q = np.where(ok, q, np.inf)
        best = np.minimum(best, q)
    stay = dt * ell_vals + u_next[mask]
    best = np.where(np.isfinite(best), best, stay)
    out = np.full_like(u_next, np.nan)
    out[mask] = best
    return out


def value_grid_backward(set_: ConstraintSet, nu: float, spec: CostSpec,
                        grid: GridSpec) -> ValueGrid:
    """Backward semi-Lagrangian sweep for the value function on a masked grid."""
    if nu <= 0:
        raise ConfigurationError("nu must be positive")
    box = grid.box if grid.box is not None else set_.bounding_box()
    x1s = np.linspace(box[0], box[1], grid.nx1)
    x2s = np.linspace(box[2], box[3], grid.nx2)
    X1, X2 = np.meshgrid(x1s, x2s, indexing="ij")
    nodes = np.stack([X1.ravel(), X2.ravel()], axis=1)
    mask = set_.contains_many(nodes).reshape(grid.nx1, grid.nx2)
    if np.count_nonzero(mask.any(axis=1)) < 2 or np.count_nonzero(mask.any(axis=0)) < 2:
        raise ConfigurationError("grid does not resolve the set (need >= 2 feasible nodes per axis)")
    T = grid.t_end
    dt = T / grid.nt
    span = max(box[1] - box[0], box[3] - box[2])
    samples = control_samples(spec.bound_K, T, dt, span, grid.n_r, grid.n_theta,
                              a_max=grid.a_max, a_min=grid.a_min, hard_cap=grid.hard_cap)
    times = np.linspace(0.0, T, grid.nt + 1)
    values = np.full((grid.nt + 1, grid.nx1, grid.nx2), np.nan)
    term = np.full((grid.nx1, grid.nx2), np.nan)
    P = np.stack([X1[mask], X2[mask]], axis=1)
    term[mask] = spec.g_at(P)
    values[grid.nt] = term
    for k in range(grid.nt - 1, -1, -1):
        values[k] = sweep_step(set_, spec, x1s, x2s, mask, values[k + 1], times[k], dt, samples, nu)
    meta = {
        "nx1": grid.nx1,
        "nx2": grid.nx2,
        "nt": grid.nt,
        "t_end": T,
        "box": [float(b) for b in box],
        "n_controls": int(len(samples)),
        "a_max": float(np.max(np.hypot(samples[:, 0], samples[:, 1]))),
        "n_feasible": int(mask.sum()),
    }
    return ValueGrid(x1s, x2s, times, values, mask, meta)


# ---------------------------------------------------------------------------
# probes
# ---------------------------------------------------------------------------


@dataclass
class ClosedGraphReport:
    source_values: list[float]
    sup_dists: list[float]
    limit_cost: float
    target_value: float
    gap: float
    limit_is_optimal: bool
    inconclusive: bool
    limit_traj: Trajectory

    def to_json(self) -> dict:
        return {
            "source_values": self.source_values,
            "sup_dists": self.sup_dists,
            "limit_cost": self.limit_cost,
            "target_value": self.target_value,
            "gap": self.gap,
            "limit_is_optimal": self.limit_is_optimal,
            "inconclusive": self.inconclusive,
        }


def closed_graph_probe(set_: ConstraintSet, nu: float, spec: CostSpec, target, sources,
                       disc: SolveConfig, T: float, probe_tol: float = 1e-2) -> ClosedGraphReport:
    """Solve from each source, extract the limit trajectory, rebase it at the
    target, and compare its cost with the solved value at the target."""
    target = np.asarray(target, dtype=float)
    disc_src = replace(disc, warm_targets=tuple(disc.warm_targets) + (tuple(target),))
    sols = []
    for s in sources:
        sols.append(solve_trajectory(s, 0.0, T, set_, nu, spec, disc_src))
    sup_dists = [sols[i].traj.sup_distance(sols[i + 1].traj) for i in range(len(sols) - 1)]
    u_limit = sols[-1].traj.control.values.copy()
    limit_traj, limit_cost, limit_rep = _finalize_candidate(
        set_, spec, target, 0.0, T, u_limit, nu, disc.substeps
    )
    disc_tgt = replace(disc, init_controls=tuple(disc.init_controls) + (limit_traj.control.values,))
    target_sol = solve_trajectory(target, 0.0, T, set_, nu, spec, disc_tgt)
    gap = float(limit_cost - target_sol.value)
    inconclusive = bool(
        len(sup_dists) >= 2 and sup_dists[-1] > max(sup_dists[0], 10.0 * probe_tol)
    ) or limit_rep.max_violation > max(set_.tol_member, disc.feas_tol)
    return ClosedGraphReport(
        source_values=[s.value for s in sols],
        sup_dists=[float(d) for d in sup_dists],
        limit_cost=float(limit_cost),
        target_value=float(target_sol.value),
        gap=gap,
        limit_is_optimal=bool(gap <= probe_tol),
        inconclusive=inconclusive,
        limit_traj=limit_traj,
    )


@dataclass
class LscReport:
    source_values: list[float]
    target_value: float
    liminf_ok: bool
    continuity_ok: bool

    def to_json(self) -> dict:
        return {
            "source_values": self.source_values,
            "target_value": self.target_value,
            "liminf_ok": self.liminf_ok,
            "continuity_ok": self.continuity_ok,
        }


def lsc_continuity_probe(set_: ConstraintSet, nu: float, spec: CostSpec, target, sources,
                         disc: SolveConfig, T: float, tol: float = 1e-2) -> LscReport:
    """Evaluate u at the sources and the target via the direct solver and test
    the lower-semicontinuity and continuity conclusions."""
    target = np.asarray(target, dtype=float)
    disc_src = replace(disc, warm_targets=tuple(disc.warm_targets) + (tuple(target),))
    values = [solve_trajectory(s, 0.0, T, set_, nu, spec, disc_src).value for s in sources]
    target_value = solve_trajectory(target, 0.0, T, set_, nu, spec, disc).value
    tail = values[len(values) // 2 :]
    liminf_ok = bool(min(tail) >= target_value - tol)
    continuity_ok = bool(abs(values[-1] - target_value) <= tol)
    return LscReport(values, float(target_value), liminf_ok, continuity_ok)
