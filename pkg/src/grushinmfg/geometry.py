"""Planar constraint sets: membership, sections, boundary classification.

The constraint set is built from a closed list of parametric variants
(rectangle, sublevel region of a curve, band between two curves, cone,
curve graph, finite union).  Every variant provides a signed violation
surrogate: negative inside (approximate interior margin), positive outside
(approximate Euclidean distance to the set).  Membership uses the set's
absolute tolerance ``tol_member``, so numerically integrated paths that
graze a boundary still count as inside.

Hypothesis checking is sampling-based falsification, not proof: an empty
violation list means "no counterexample found at this resolution".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError

DEFAULT_TOL = 1e-9

# Slope threshold below which an on-axis boundary graph counts as flat.
CHAR_SLOPE_TOL = 1e-3

WITNESS_FAMILIES = (
    "segment_vertical",
    "segment_slope_pos",
    "segment_slope_neg",
    "power_curve_pos",
    "power_curve_neg",
    "power_exponent",
)


@dataclass(frozen=True)
class CurveFn:
    """Vectorized scalar curve x1 -> x2 with a serializable description.

    kinds: ``const`` (c,), ``affine`` (c0, c1), ``poly`` (ascending
    coefficients), ``power`` (c, p) meaning c * |x|**p.
    """

    kind: str
    coeffs: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in ("const", "affine", "poly", "power"):
            raise ConfigurationError(f"unknown curve kind {self.kind!r}")
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "const":
            return np.full(x.shape, self.coeffs[0])
        if self.kind == "affine":
            c0, c1 = self.coeffs
            return c0 + c1 * x
        if self.kind == "poly":
            return np.polynomial.polynomial.polyval(x, np.asarray(self.coeffs))
        c, p = self.coeffs
        return c * np.abs(x) ** p

    def to_config(self) -> dict:
        return {"kind": self.kind, "coeffs": list(self.coeffs)}

    @classmethod
    def from_config(cls, cfg) -> "CurveFn":
        if isinstance(cfg, (int, float)):
            return cls("const", (float(cfg),))
        if not isinstance(cfg, dict):
            raise ConfigurationError(f"curve config must be a number or mapping, got {cfg!r}")
        unknown = set(cfg) - {"kind", "coeffs"}
        if unknown:
            raise ConfigurationError(f"unknown curve key {sorted(unknown)[0]!r}")
        return cls(cfg["kind"], tuple(cfg["coeffs"]))


def _fd_slope(f: Callable, x: float, step: float) -> float:
    """Centered finite-difference slope; falls back to one-sided at domain edges."""
    try:
        lo = float(np.asarray(f(x - step)))
        hi = float(np.asarray(f(x + step)))
        return (hi - lo) / (2.0 * step)
    except (ValueError, FloatingPointError):
        hi = float(np.asarray(f(x + step)))
        mid = float(np.asarray(f(x)))
        return (hi - mid) / step


@dataclass(frozen=True)
class Witness:
    """Declared local curve/segment data used by hypothesis checks and connectors.

    ``family`` is one of WITNESS_FAMILIES; ``rho`` is required for
    ``power_exponent`` only.
    """

    point: tuple[float, float]
    c: float
    radius: float
    family: str
    rho: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "point", (float(self.point[0]), float(self.point[1])))
        if self.family not in WITNESS_FAMILIES:
            raise ConfigurationError(f"unknown witness family {self.family!r}")
        if not self.c > 0:
            raise ConfigurationError("witness constant C must be positive")
        if not self.radius > 0:
            raise ConfigurationError("witness radius R must be positive")
        if self.family == "power_exponent" and self.rho is None:
            raise ConfigurationError("power_exponent witness requires rho")

    def to_config(self) -> dict:
        cfg = {
            "point": list(self.point),
            "c": self.c,
            "radius": self.radius,
            "family": self.family,
        }
        if self.rho is not None:
            cfg["rho"] = self.rho
        return cfg


@dataclass(frozen=True)
class BoundaryClass:
    kind: str  # interior | boundary_off_axis | boundary_on_axis
    is_characteristic: bool

    def __post_init__(self):
        if self.is_characteristic and self.kind != "boundary_on_axis":
            raise ConfigurationError("characteristic points must be on-axis boundary points")


class ConstraintSet:
    """Base class: concrete variants implement the violation surrogate.

    Subclasses must provide ``violation_many``, ``bounding_box``,
    ``project_many`` and may override ``boundary_graph_slope``.
    """

    tol_member: float = DEFAULT_TOL
    witnesses: tuple[Witness, ...] = ()

    # -- membership -------------------------------------------------------

    def violation_many(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def violation(self, p) -> float:
        return float(self.violation_many(np.asarray(p, dtype=float).reshape(1, 2))[0])

    def contains_many(self, pts: np.ndarray) -> np.ndarray:
        return self.violation_many(pts) <= self.tol_member

    def contains(self, p) -> bool:
        return bool(self.violation(p) <= self.tol_member)

    # -- geometry helpers --------------------------------------------------

    def bounding_box(self) -> tuple[float, float, float, float]:
        """(x1_lo, x1_hi, x2_lo, x2_hi) covering the working part of the set."""
        raise NotImplementedError

    def project_many(self, pts: np.ndarray) -> np.ndarray:
        """Approximate closest points inside the set (exact for convex variants)."""
        raise NotImplementedError

    def project(self, p) -> np.ndarray:
        return self.project_many(np.asarray(p, dtype=float).reshape(1, 2))[0]

    def boundary_graph_slope(self, p, step: float) -> float | None:
        """Slope of the local boundary graph x2 = f(x1) at p, or None if the
        boundary is not an x1-graph there (corners, vertical edges, cones)."""
        return None

    def variant(self) -> str:
        raise NotImplementedError

    def witnesses_at(self, p, tol: float | None = None) -> list[tuple[int, Witness]]:
        tol = 10.0 * self.tol_member if tol is None else tol
        p = np.asarray(p, dtype=float)
        out = []
        for i, w in enumerate(self.witnesses):
            if math.hypot(w.point[0] - p[0], w.point[1] - p[1]) <= tol:
                out.append((i, w))
        return out


def _scaled_residual(curve: Callable, x1c: np.ndarray, resid: np.ndarray, step: float) -> np.ndarray:
    """Divide a vertical residual by sqrt(1 + slope^2) so it approximates
    normal distance for smooth curves."""
    try:
        lo = np.asarray(curve(x1c - step), dtype=float)
        hi = np.asarray(curve(x1c + step), dtype=float)
        slope = (hi - lo) / (2.0 * step)
    except (ValueError, FloatingPointError):
        slope = np.zeros_like(x1c)
    return resid / np.sqrt(1.0 + slope * slope)


def _combine_axis(dxs: np.ndarray, rs: np.ndarray) -> np.ndarray:
    """Combine a signed x1-interval violation with a signed cross-curve one."""
    both_out = (dxs > 0) & (rs > 0)
    out = np.where(dxs <= 0, rs, np.where(rs <= 0, dxs, 0.0))
    out = np.where(both_out, np.hypot(np.maximum(dxs, 0.0), np.maximum(rs, 0.0)), out)
    return out


@dataclass(frozen=True)
class Rectangle(ConstraintSet):
    a1: float
    b1: float
    a2: float
    b2: float
    tol_member: float = DEFAULT_TOL
    witnesses: tuple[Witness, ...] = ()

    def __post_init__(self):
        if not (self.a1 < self.b1 and self.a2 < self.b2):
            raise ConfigurationError("rectangle requires a1 < b1 and a2 < b2")

    def variant(self):
        return "rectangle"

    def violation_many(self, pts):
        pts = np.asarray(pts, dtype=float)
        dx = np.maximum(self.a1 - pts[:, 0], pts[:, 0] - self.b1)
        dy = np.maximum(self.a2 - pts[:, 1], pts[:, 1] - self.b2)
        inside = (dx <= 0) & (dy <= 0)
        outside = np.hypot(np.maximum(dx, 0.0), np.maximum(dy, 0.0))
        return np.where(inside, np.maximum(dx, dy), outside)

    def bounding_box(self):
        return (self.a1, self.b1, self.a2, self.b2)

    def project_many(self, pts):
        pts = np.asarray(pts, dtype=float)
        out = pts.copy()
        out[:, 0] = np.clip(out[:, 0], self.a1, self.b1)
        out[:, 1] = np.clip(out[:, 1], self.a2, self.b2)
        return out


@dataclass(frozen=True)
class Sublevel(ConstraintSet):
    """Region above a curve: f(x1) - x2 <= 0 with x1 in [x1_lo, x1_hi]."""

    f: Callable
    x1_lo: float
    x1_hi: float
    x2_cap: float | None = None  # working upper bound for sampling boxes
    tol_member: float = DEFAULT_TOL
    witnesses: tuple[Witness, ...] = ()

    def __post_init__(self):
        if not self.x1_lo < self.x1_hi:
            raise ConfigurationError("sublevel requires x1_lo < x1_hi")

    def variant(self):
        return "sublevel"

    def _step(self):
        return 1e-6 * max(1.0, self.x1_hi - self.x1_lo)

    def violation_many(self, pts):
        pts = np.asarray(pts, dtype=float)
        x1c = np.clip(pts[:, 0], self.x1_lo, self.x1_hi)
        dxs = np.maximum(self.x1_lo - pts[:, 0], pts[:, 0] - self.x1_hi)
        resid = np.asarray(self.f(x1c), dtype=float) - pts[:, 1]
        rs = _scaled_residual(self.f, x1c, resid, self._step())
        return _combine_axis(dxs, rs)

    def bounding_box(self):
        xs = np.linspace(self.x1_lo, self.x1_hi, 257)
        fv = np.asarray(self.f(xs), dtype=float)
        lo = float(fv.min())
        hi = self.x2_cap if self.x2_cap is not None else float(fv.max()) + max(1.0, self.x1_hi - self.x1_lo)
        return (self.x1_lo, self.x1_hi, lo, hi)

    def project_many(self, pts):
        pts = np.asarray(pts, dtype=float)
        out = pts.copy()
        out[:, 0] = np.clip(out[:, 0], self.x1_lo, self.x1_hi)
        out[:, 1] = np.maximum(out[:, 1], np.asarray(self.f(out[:, 0]), dtype=float))
        return out

    def boundary_graph_slope(self, p, step):
        p = np.asarray(p, dtype=float)
        if abs(float(np.asarray(self.f(p[0]))) - p[1]) <= 10.0 * self.tol_member:
            return _fd_slope(self.f, float(p[0]), step)
        return None


@dataclass(frozen=True)
class Band(ConstraintSet):
    """lower(x1) <= x2 <= upper(x1) with x1 in [x1_lo, x1_hi]."""

    lower: Callable
    upper: Callable
    x1_lo: float
    x1_hi: float
    tol_member: float = DEFAULT_TOL
    witnesses: tuple[Witness, ...] = ()

    def __post_init__(self):
        if not self.x1_lo < self.x1_hi:
            raise ConfigurationError("band requires x1_lo < x1_hi")

    def variant(self):
        return "band"

    def _step(self):
        return 1e-6 * max(1.0, self.x1_hi - self.x1_lo)

    def violation_many(self, pts):
        pts = np.asarray(pts, dtype=float)
        x1c = np.clip(pts[:, 0], self.x1_lo, self.x1_hi)
        dxs = np.maximum(self.x1_lo - pts[:, 0], pts[:, 0] - self.x1_hi)
        lo_r = np.asarray(self.lower(x1c), dtype=float) - pts[:, 1]
        up_r = pts[:, 1] - np.asarray(self.upper(x1c), dtype=float)
        step = self._step()
        lo_s = _scaled_residual(self.lower, x1c, lo_r, step)
        up_s = _scaled_residual(self.upper, x1c, up_r, step)
        rs = np.maximum(lo_s, up_s)
        return _combine_axis(dxs, rs)

    def bounding_box(self):
        xs = np.linspace(self.x1_lo, self.x1_hi, 257)
        lo = float(np.min(np.asarray(self.lower(xs), dtype=float)))
        hi = float(np.max(np.asarray(self.upper(xs), dtype=float)))
        return (self.x1_lo, self.x1_hi, lo, hi)

    def project_many(self, pts):
        pts = np.asarray(pts, dtype=float)
        out = pts.copy()
        out[:, 0] = np.clip(out[:, 0], self.x1_lo, self.x1_hi)
        lo = np.asarray(self.lower(out[:, 0]), dtype=float)
        hi = np.asarray(self.upper(out[:, 0]), dtype=float)
        out[:, 1] = np.clip(out[:, 1], lo, hi)
        return out

    def boundary_graph_slope(self, p, step):
        p = np.asarray(p, dtype=float)
        tol = 10.0 * self.tol_member
        if abs(float(np.asarray(self.lower(p[0]))) - p[1]) <= tol:
            return _fd_slope(self.lower, float(p[0]), step)
        if abs(float(np.asarray(self.upper(p[0]))) - p[1]) <= tol:
            return _fd_slope(self.upper, float(p[0]), step)
        return None


@dataclass(frozen=True)
class Cone(ConstraintSet):
    """m1*x1 <= x2 <= m2*x1 with x1 >= 0 and 0 < m1 < m2 (apex at the origin)."""

    m1: float
    m2: float
    tol_member: float = DEFAULT_TOL
    witnesses: tuple[Witness, ...] = ()
    extent: float = 1.0  # x1 range used for sampling boxes

    def __post_init__(self):
        if not (0 < self.m1 < self.m2):
            raise ConfigurationError("cone requires 0 < m1 < m2")

    def variant(self):
        return "cone"

    def violation_many(self, pts):
        pts = np.asarray(pts, dtype=float)
        x1, x2 = pts[:, 0], pts[:, 1]
        n1 = math.hypot(1.0, self.m1)
        n2 = math.hypot(1.0, self.m2)
        d1 = (self.m1 * x1 - x2) / n1  # > 0 below the lower edge
        d2 = (x2 - self.m2 * x1) / n2  # > 0 above the upper edge
        inside = (d1 <= 0) & (d2 <= 0)
        # outside: distance to the nearest of {apex, lower ray, upper ray}
        apex = np.hypot(x1, x2)
        t1 = (x1 + self.m1 * x2) / (1.0 + self.m1**2)
        t2 = (x1 + self.m2 * x2) / (1.0 + self.m2**2)
        cand1 = np.where(t1 >= 0, np.abs(d1), np.inf)
        cand2 = np.where(t2 >= 0, np.abs(d2), np.inf)
        lower_ok = d1 > 0
        upper_ok = d2 > 0
        outside = apex.copy()
        outside = np.where(lower_ok, np.minimum(outside, cand1), outside)
        outside = np.where(upper_ok, np.minimum(outside, cand2), outside)
        return np.where(inside, np.maximum(d1, d2), outside)

    def bounding_box(self):
        return (0.0, self.extent, 0.0, self.m2 * self.extent)

    def project_many(self, pts):
        pts = np.asarray(pts, dtype=float)
        out = pts.copy()
        viol = self.violation_many(pts)
        bad = viol > 0
        if not np.any(bad):
            return out
        x1, x2 = pts[bad, 0], pts[bad, 1]
        t1 = np.clip((x1 + self.m1 * x2) / (1.0 + self.m1**2), 0.0, None)
        t2 = np.clip((x1 + self.m2 * x2) / (1.0 + self.m2**2), 0.0, None)
        p1 = np.stack([t1, self.m1 * t1], axis=1)
        p2 = np.stack([t2, self.m2 * t2], axis=1)
        d1 = np.hypot(x1 - p1[:, 0], x2 - p1[:, 1])
        d2 = np.hypot(x1 - p2[:, 0], x2 - p2[:, 1])
        out[bad] = np.where((d1 <= d2)[:, None], p1, p2)
        return out


@dataclass(frozen=True)
class CurveGraph(ConstraintSet):
    """One-dimensional set {x2 = gamma(x1), x1 in [x1_lo, x1_hi]}."""

    gamma: Callable
    x1_lo: float
    x1_hi: float
    tol_member: float = DEFAULT_TOL
    witnesses: tuple[Witness, ...] = ()

    def __post_init__(self):
        if not self.x1_lo < self.x1_hi:
            raise ConfigurationError("curve requires x1_lo < x1_hi")

    def variant(self):
        return "curve"

    def violation_many(self, pts):
        pts = np.asarray(pts, dtype=float)
        x1c = np.clip(pts[:, 0], self.x1_lo, self.x1_hi)
        dxs = np.maximum(self.x1_lo - pts[:, 0], pts[:, 0] - self.x1_hi)
        resid = np.abs(pts[:, 1] - np.asarray(self.gamma(x1c), dtype=float))
        step = 1e-6 * max(1.0, self.x1_hi - self.x1_lo)
        rs = _scaled_residual(self.gamma, x1c, resid, step)
        return np.where(dxs <= 0, rs, np.hypot(np.maximum(dxs, 0.0), rs))

    def bounding_box(self):
        xs = np.linspace(self.x1_lo, self.x1_hi, 257)
        gv = np.asarray(self.gamma(xs), dtype=float)
        return (self.x1_lo, self.x1_hi, float(gv.min()), float(gv.max()))

    def project_many(self, pts):
        pts = np.asarray(pts, dtype=float)
        x1c = np.clip(pts[:, 0], self.x1_lo, self.x1_hi)
        return np.stack([x1c, np.asarray(self.gamma(x1c), dtype=float)], axis=1)

    def boundary_graph_slope(self, p, step):
        return _fd_slope(self.gamma, float(np.asarray(p, dtype=float)[0]), step)


@dataclass(frozen=True)
class UnionSet(ConstraintSet):
    parts: tuple[ConstraintSet, ...]
    tol_member: float = DEFAULT_TOL
    witnesses: tuple[Witness, ...] = ()

    def __post_init__(self):
        if len(self.parts) < 1:
            raise ConfigurationError("union requires at least one part")
        # keep the OR property exact: the union decides with each part's tolerance
        object.__setattr__(self, "tol_member", max(p.tol_member for p in self.parts))
        merged = tuple(self.witnesses) + tuple(w for p in self.parts for w in p.witnesses)
        object.__setattr__(self, "witnesses", merged)

    def variant(self):
        return "union"

    def violation_many(self, pts):
        vals = np.stack([p.violation_many(pts) for p in self.parts], axis=0)
        return vals.min(axis=0)

    def contains_many(self, pts):
        res = np.zeros(len(pts), dtype=bool)
        for p in self.parts:
            res |= p.contains_many(pts)
        return res

    def contains(self, p):
        return any(part.contains(p) for part in self.parts)

    def bounding_box(self):
        boxes = [p.bounding_box() for p in self.parts]
        return (
            min(b[0] for b in boxes),
            max(b[1] for b in boxes),
            min(b[2] for b in boxes),
            max(b[3] for b in boxes),
        )

    def project_many(self, pts):
        pts = np.asarray(pts, dtype=float)
        projs = [p.project_many(pts) for p in self.parts]
        dists = np.stack(
            [np.hypot(pr[:, 0] - pts[:, 0], pr[:, 1] - pts[:, 1]) for pr in projs], axis=0
        )
        pick = dists.argmin(axis=0)
        out = np.empty_like(pts)
        for i, pr in enumerate(projs):
            sel = pick == i
            out[sel] = pr[sel]
        return out

    def boundary_graph_slope(self, p, step):
        best, slope = np.inf, None
        for part in self.parts:
            v = abs(part.violation(p))
            if v < best:
                s = part.boundary_graph_slope(p, step)
                if s is not None:
                    best, slope = v, s
        return slope


# -- operations -------------------------------------------------------------


def contains(set_: ConstraintSet, p) -> bool:
    """Membership up to the set's tolerance."""
    return set_.contains(p)


@dataclass
class ConvexityViolation:
    x2: float
    x1_left: float
    x1_right: float
    t_bad: float
    violation: float

    def to_json(self) -> dict:
        return {
            "x2": self.x2,
            "x1_left": self.x1_left,
            "x1_right": self.x1_right,
            "t_bad": self.t_bad,
            "violation": self.violation,
        }


@dataclass
class ConvexityReport:
    violations: list[ConvexityViolation]
    n_samples: int

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "passed": self.passed,
            "violations": [v.to_json() for v in self.violations],
        }


def _section_runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of True as (start, stop) index pairs."""
    runs = []
    start = None
    for i, m in enumerate(mask):
        if m and start is None:
            start = i
        elif not m and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(mask)))
    return runs


def check_x1_convex(
    set_: ConstraintSet,
    n_samples: int,
    seed: int,
    n_scan: int = 512,
    n_t: int = 65,
) -> ConvexityReport:
    """Sample horizontal sections and look for gaps.

    For each sampled level x2, the x1 section is scanned on a fine grid; two
    in-set points from distinct runs witness a violation of x1-convexity and
    the worst intermediate point is recorded.
    """
    if n_samples < 1:
        raise ConfigurationError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    x1_lo, x1_hi, x2_lo, x2_hi = set_.bounding_box()
    xs = np.linspace(x1_lo, x1_hi, n_scan)
    violations: list[ConvexityViolation] = []
    for _ in range(n_samples):
        x2 = float(rng.uniform(x2_lo, x2_hi))
        pts = np.stack([xs, np.full_like(xs, x2)], axis=1)
        mask = set_.contains_many(pts)
        runs = _section_runs(mask)
        if len(runs) < 2:
            continue
        # bridge the first two components
        a = xs[runs[0][1] - 1]
        b = xs[runs[1][0]]
        ts = np.linspace(0.0, 1.0, n_t)
        mids = np.stack([a + ts * (b - a), np.full_like(ts, x2)], axis=1)
        v = set_.violation_many(mids)
        worst = int(np.argmax(v))
        if v[worst] > set_.tol_member:
            violations.append(
                ConvexityViolation(x2, float(a), float(b), float(ts[worst]), float(v[worst]))
            )
    return ConvexityReport(violations, n_samples)


def classify_point(set_: ConstraintSet, p, probe_radius: float) -> BoundaryClass:
    """Interior / off-axis boundary / on-axis boundary, with the characteristic
    flag set for on-axis points whose boundary graph has flat x1-tangent."""
    p = np.asarray(p, dtype=float)
    if not set_.contains(p):
        raise DomainError(f"point {tuple(p)} is not in the set")
    if probe_radius <= 0:
        raise ConfigurationError("probe_radius must be positive")
    angles = np.linspace(0.0, 2.0 * np.pi, 32, endpoint=False)
    ring = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    probes = np.concatenate([p + probe_radius * ring, p + 0.5 * probe_radius * ring])
    if bool(np.all(set_.contains_many(probes))):
        return BoundaryClass("interior", False)
    on_axis = abs(p[0]) <= set_.tol_member
    if not on_axis:
        return BoundaryClass("boundary_off_axis", False)
    slope = set_.boundary_graph_slope(p, step=max(1e-3 * probe_radius, 1e-12))
    is_char = slope is not None and abs(slope) <= CHAR_SLOPE_TOL
    return BoundaryClass("boundary_on_axis", is_char)


@dataclass
class WitnessCheck:
    witness_index: int
    passed: bool
    max_violation: float
    family: str
    convexity_ok: bool

    def to_json(self) -> dict:
        return {
            "witness_index": self.witness_index,
            "pass": self.passed,
            "max_violation": self.max_violation,
        }


@dataclass
class HypothesesReport:
    checks: list[WitnessCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self) -> list[dict]:
        return [c.to_json() for c in self.checks]


def witness_curve_points(w: Witness, nu: float, n: int) -> np.ndarray:
    """Sample the declared segment/curve from its anchor over its radius."""
    x0, y0 = w.point
    s = np.linspace(0.0, w.radius, n)
    if w.family == "segment_vertical":
        return np.stack([np.full_like(s, x0), y0 + s], axis=1)
    if w.family == "segment_slope_pos":
        return np.stack([x0 + s, y0 + w.c * s], axis=1)
    if w.family == "segment_slope_neg":
        return np.stack([x0 - s, y0 + w.c * s], axis=1)
    if w.family == "power_curve_pos":
        return np.stack([s, y0 + w.c * s ** (nu + 1.0)], axis=1)
    if w.family == "power_curve_neg":
        return np.stack([-s, y0 + w.c * s ** (nu + 1.0)], axis=1)
    # power_exponent: local offset form on the positive side
    return np.stack([x0 + s, y0 + w.c * s**w.rho], axis=1)


def _validate_witness_location(w: Witness, nu: float, tol: float) -> None:
    on_axis = abs(w.point[0]) <= tol
    if w.family in ("power_curve_pos", "power_curve_neg") and not on_axis:
        raise ConfigurationError(
            f"witness family {w.family!r} applies to on-axis points only (point {w.point})"
        )
    if w.family == "power_exponent":
        if on_axis and not w.rho > nu + 0.5:
            raise ConfigurationError(
                f"power_exponent witness at on-axis point needs rho > nu + 1/2, got rho={w.rho}"
            )
        if not on_axis and w.rho == 0:
            raise ConfigurationError("power_exponent witness needs rho != 0 at off-axis points")


def _local_convexity_ok(set_: ConstraintSet, x0, radius: float, n_scan: int = 96) -> tuple[bool, float]:
    """Check x1-convexity of the set restricted to a ball around x0."""
    cx, cy = x0
    levels = np.linspace(cy - radius, cy + radius, 17)
    xs = np.linspace(cx - radius, cx + radius, n_scan)
    worst = 0.0
    ok = True
    for x2 in levels:
        pts = np.stack([xs, np.full_like(xs, x2)], axis=1)
        in_ball = np.hypot(pts[:, 0] - cx, pts[:, 1] - cy) <= radius
        mask = set_.contains_many(pts) & in_ball
        runs = _section_runs(mask)
        if len(runs) >= 2:
            a = xs[runs[0][1] - 1]
            b = xs[runs[1][0]]
            mids = np.stack([np.linspace(a, b, 33), np.full(33, x2)], axis=1)
            v = float(np.max(set_.violation_many(mids)))
            if v > set_.tol_member:
                ok = False
                worst = max(worst, v)
    return ok, worst


def verify_hypotheses(set_: ConstraintSet, nu: float, grid_step: float) -> HypothesesReport:
    """Sample every declared witness curve and report containment plus local
    x1-convexity around the anchor point."""
    if not set_.witnesses:
        raise ConfigurationError("set carries no witness entries")
    if grid_step <= 0:
        raise ConfigurationError("grid_step must be positive")
    checks = []
    for i, w in enumerate(set_.witnesses):
        _validate_witness_location(w, nu, set_.tol_member)
        n = max(9, int(math.ceil(w.radius / grid_step)) + 1)
        pts = witness_curve_points(w, nu, n)
        max_v = float(np.max(set_.violation_many(pts)))
        conv_ok, conv_v = _local_convexity_ok(set_, w.point, w.radius)
        contained = max_v <= set_.tol_member
        checks.append(
            WitnessCheck(
                witness_index=i,
                passed=bool(contained and conv_ok),
                max_violation=max(max_v, conv_v),
                family=w.family,
                convexity_ok=conv_ok,
            )
        )
    return HypothesesReport(checks)
