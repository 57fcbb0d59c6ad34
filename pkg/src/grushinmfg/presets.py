"""Named example configurations: constraint sets, default costs, couplings.

Each preset fixes the free parameters of one benchmark geometry (slopes,
curve coefficients, witness data) so runs are reproducible.  Cost and
coupling builders double as the config-file vocabulary for the CLI.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dynamics import CostSpec
from .errors import ConfigurationError
from .geometry import (
    Band,
    Cone,
    ConstraintSet,
    CurveFn,
    CurveGraph,
    Rectangle,
    Sublevel,
    UnionSet,
    Witness,
)
from .mfg import AtomicMeasure, CouplingSpec


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    build: Callable[[float], ConstraintSet]
    nu: float
    T: float
    box: tuple[float, float, float, float]
    ell_cfg: dict
    g_cfg: dict
    default_target: tuple[float, float] | None
    sequence_sources: Callable[[float, int], list] | None
    m0_atoms: list | None = None


def _build_rect(nu):
    return Rectangle(
        0.0, 1.0, 0.0, 1.0,
        witnesses=(Witness((1.0, 0.0), 1.0, 1.0, "segment_vertical"),),
    )


def _build_sublevel(nu):
    return Sublevel(
        CurveFn("power", (1.0, 2.0)), -1.0, 1.0, x2_cap=1.5,
        witnesses=(
            Witness((0.0, 0.0), 1.0, 0.5, "power_curve_pos"),
            Witness((0.0, 0.0), 1.0, 0.5, "power_exponent", rho=2.0),
        ),
    )


def _build_band(nu):
    return Band(
        CurveFn("power", (1.0, nu + 1.0)), CurveFn("const", (1.0,)), 0.0, 1.0,
        witnesses=(Witness((0.0, 0.0), 1.0, 1.0, "power_curve_pos"),),
    )


def _build_parabola_band(nu):
    return Band(
        CurveFn("power", (1.0, 2.0)), CurveFn("power", (2.0, 2.0)), 0.0, 1.0,
        witnesses=(Witness((0.0, 0.0), 1.5, 1.0, "power_curve_pos"),),
    )


def _build_cone(nu):
    return Cone(1.0, 2.0, extent=1.0)


def _build_curve(nu):
    return CurveGraph(
        CurveFn("power", (1.0, 2.0)), 0.0, 1.0,
        witnesses=(Witness((0.0, 0.0), 1.0, 1.0, "power_curve_pos"),),
    )


def _build_cone_halfplane(nu):
    return UnionSet((Cone(1.0, 2.0, extent=2.0), Rectangle(-10.0, 10.0, -10.0, 0.0)))


def _band_sources(nu, k):
    return [(2.0**-j, (2.0**-j) ** (nu + 1.0)) for j in range(1, k + 1)]


def _rect_sources(nu, k):
    return [(1.0 - 0.6 * 2.0**-j, 0.8 * 2.0**-j) for j in range(1, k + 1)]


def _cone_sources(nu, k):
    scale = 1.0 / math.hypot(1.0, 1.5)
    return [(scale * 2.0**-j, 1.5 * scale * 2.0**-j) for j in range(1, k + 1)]


_BAND_M0 = [[x1, 0.7, 0.125] for x1 in np.linspace(0.15, 0.75, 8)]

PRESETS: dict[str, Preset] = {
    "rect-ex51": Preset(
        name="rect-ex51",
        description="axis-aligned rectangle [0,1]^2 (vertical witness on the right edge)",
        build=_build_rect,
        nu=1.0,
        T=1.0,
        box=(0.0, 1.0, 0.0, 1.0),
        ell_cfg={"kind": "zero"},
        g_cfg={"kind": "quad", "center": [0.7, 0.7], "scale": 1.0},
        default_target=(1.0, 0.0),
        sequence_sources=_rect_sources,
    ),
    "sublevel-ex52": Preset(
        name="sublevel-ex52",
        description="region above the parabola x2 >= x1^2 on [-1,1]",
        build=_build_sublevel,
        nu=1.0,
        T=1.0,
        box=(-1.0, 1.0, 0.0, 1.5),
        ell_cfg={"kind": "zero"},
        g_cfg={"kind": "quad", "center": [0.0, 0.5], "scale": 1.0},
        default_target=(0.0, 0.0),
        sequence_sources=lambda nu, k: [(2.0**-j, 4.0**-j) for j in range(1, k + 1)],
    ),
    "band-ex53": Preset(
        name="band-ex53",
        description="curved band 0<=x1<=1, x1^(nu+1)<=x2<=1 (cusp at the origin)",
        build=_build_band,
        nu=1.0,
        T=1.0,
        box=(0.0, 1.0, 0.0, 1.0),
        ell_cfg={"kind": "zero"},
        g_cfg={"kind": "quad", "center": [0.0, 0.0], "scale": 1.0},
        default_target=(0.0, 0.0),
        sequence_sources=_band_sources,
        m0_atoms=_BAND_M0,
    ),
    "parabola-band": Preset(
        name="parabola-band",
        description="thin band x1^2<=x2<=2*x1^2 on [0,1] (empty-interior cusp)",
        build=_build_parabola_band,
        nu=1.0,
        T=1.0,
        box=(0.0, 1.0, 0.0, 2.0),
        ell_cfg={"kind": "zero"},
        g_cfg={"kind": "quad", "center": [0.0, 0.0], "scale": 1.0},
        default_target=(0.0, 0.0),
        sequence_sources=lambda nu, k: [(2.0**-j, 1.5 * 4.0**-j) for j in range(1, k + 1)],
    ),
    "cone-ex54": Preset(
        name="cone-ex54",
        description="cone x1>=0, x1<=x2<=2*x1 (apex unreachable with finite cost)",
        build=_build_cone,
        nu=1.0,
        T=1.0,
        box=(0.0, 1.0, 0.0, 2.0),
        ell_cfg={"kind": "zero"},
        g_cfg={"kind": "quad", "center": [0.0, 0.0], "scale": 1.0},
        default_target=(0.0, 0.0),
        sequence_sources=_cone_sources,
    ),
    "curve-ex55": Preset(
        name="curve-ex55",
        description="one-dimensional support: the graph x2=x1^2 on [0,1]",
        build=_build_curve,
        nu=1.0,
        T=1.0,
        box=(0.0, 1.0, 0.0, 1.0),
        ell_cfg={"kind": "zero"},
        g_cfg={"kind": "quad", "center": [0.0, 0.0], "scale": 1.0},
        default_target=(0.0, 0.0),
        sequence_sources=lambda nu, k: [(2.0**-j, 4.0**-j) for j in range(1, k + 1)],
    ),
    "cone-halfplane-ex56": Preset(
        name="cone-halfplane-ex56",
        description="cone joined to the lower half-plane x2<=0 (truncated to a box)",
        build=_build_cone_halfplane,
        nu=1.0,
        T=5.0,
        box=(-2.0, 6.0, -3.0, 3.0),
        ell_cfg={"kind": "neg_x1_clipped", "cap": 10.0},
        g_cfg={"kind": "zero"},
        default_target=(0.0, 0.0),
        sequence_sources=_cone_sources,
    ),
}


def get_preset(name: str) -> Preset:
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r} (known: {', '.join(sorted(PRESETS))})")
    return PRESETS[name]


# -- cost builders -----------------------------------------------------------


def _as_pts(x):
    return np.asarray(x, dtype=float)


def make_ell(cfg: dict) -> Callable:
    kind = cfg.get("kind")
    if kind == "zero":
        return lambda x, t: np.zeros(_as_pts(x)[..., 0].shape)
    if kind == "const":
        v = float(cfg["value"])
        return lambda x, t: np.full(_as_pts(x)[..., 0].shape, v)
    if kind == "neg_x1_clipped":
        cap = float(cfg.get("cap", 10.0))
        return lambda x, t: -np.minimum(_as_pts(x)[..., 0], cap)
    if kind == "quad":
        cx, cy = (float(v) for v in cfg["center"])
        s = float(cfg.get("scale", 1.0))
        return lambda x, t: s * ((_as_pts(x)[..., 0] - cx) ** 2 + (_as_pts(x)[..., 1] - cy) ** 2)
    raise ConfigurationError(f"unknown running-cost kind {kind!r}")


def make_g(cfg: dict) -> Callable:
    kind = cfg.get("kind")
    if kind == "zero":
        return lambda x: np.zeros(_as_pts(x)[..., 0].shape)
    if kind == "const":
        v = float(cfg["value"])
        return lambda x: np.full(_as_pts(x)[..., 0].shape, v)
    if kind == "quad":
        cx, cy = (float(v) for v in cfg["center"])
        s = float(cfg.get("scale", 1.0))
        return lambda x: s * ((_as_pts(x)[..., 0] - cx) ** 2 + (_as_pts(x)[..., 1] - cy) ** 2)
    raise ConfigurationError(f"unknown terminal-cost kind {kind!r}")


def estimate_bound(ell, g, box, T, n: int = 33) -> float:
    xs = np.linspace(box[0], box[1], n)
    ys = np.linspace(box[2], box[3], n)
    X1, X2 = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X1.ravel(), X2.ravel()], axis=1)
    k = float(np.max(np.abs(g(pts))))
    for t in np.linspace(0.0, T, 5):
        k = max(k, float(np.max(np.abs(ell(pts, t)))))
    return max(k, 1e-6)


def make_cost_spec(ell_cfg: dict, g_cfg: dict, box, T) -> CostSpec:
    ell = make_ell(ell_cfg)
    g = make_g(g_cfg)
    return CostSpec(ell=ell, g=g, bound_K=estimate_bound(ell, g, box, T))


_COUPLING_KEYS = {
    "kind", "bound_K", "bandwidth", "kernel_weight", "terminal_weight", "ell0", "g0",
}


def make_coupling(cfg: dict) -> CouplingSpec:
    unknown = set(cfg) - _COUPLING_KEYS
    if unknown:
        raise ConfigurationError(f"unknown coupling key {sorted(unknown)[0]!r}")
    ell0 = make_ell(cfg.get("ell0", {"kind": "zero"}))
    g0 = make_g(cfg.get("g0", {"kind": "zero"}))
    return CouplingSpec(
        kind=cfg.get("kind", "kernel_congestion"),
        bound_K=float(cfg.get("bound_K", 1.0)),
        ell0=ell0,
        g0=g0,
        bandwidth=float(cfg.get("bandwidth", 0.2)),
        kernel_weight=float(cfg.get("kernel_weight", 1.0)),
        terminal_weight=float(cfg.get("terminal_weight", 1.0)),
    )


def make_m0(atoms) -> AtomicMeasure:
    pts = np.array([[a[0], a[1]] for a in atoms], dtype=float)
    ws = np.array([a[2] for a in atoms], dtype=float)
    return AtomicMeasure(pts, ws)


# -- constraint-set config loader -------------------------------------------

_SET_KEYS = {
    "variant", "a1", "b1", "a2", "b2", "m1", "m2", "extent", "lower", "upper", "f",
    "gamma", "x1_lo", "x1_hi", "x2_cap", "parts", "tol_member", "witnesses",
}


def set_from_config(cfg: dict) -> ConstraintSet:
    if not isinstance(cfg, dict):
        raise ConfigurationError("set config must be a mapping")
    unknown = set(cfg) - _SET_KEYS
    if unknown:
        raise ConfigurationError(f"unknown set key {sorted(unknown)[0]!r}")
    witnesses = tuple(
        Witness(
            point=tuple(w["point"]),
            c=float(w["c"]),
            radius=float(w["radius"]),
            family=w["family"],
            rho=float(w["rho"]) if "rho" in w else None,
        )
        for w in cfg.get("witnesses", [])
    )
    tol = float(cfg.get("tol_member", 1e-9))
    variant = cfg.get("variant")
    if variant == "rectangle":
        return Rectangle(float(cfg["a1"]), float(cfg["b1"]), float(cfg["a2"]), float(cfg["b2"]),
                         tol_member=tol, witnesses=witnesses)
    if variant == "sublevel":
        return Sublevel(CurveFn.from_config(cfg["f"]), float(cfg["x1_lo"]), float(cfg["x1_hi"]),
                        x2_cap=cfg.get("x2_cap"), tol_member=tol, witnesses=witnesses)
    if variant == "band":
        return Band(CurveFn.from_config(cfg["lower"]), CurveFn.from_config(cfg["upper"]),
                    float(cfg["x1_lo"]), float(cfg["x1_hi"]), tol_member=tol, witnesses=witnesses)
    if variant == "cone":
        return Cone(float(cfg["m1"]), float(cfg["m2"]), tol_member=tol, witnesses=witnesses,
                    extent=float(cfg.get("extent", 1.0)))
    if variant == "curve":
        return CurveGraph(CurveFn.from_config(cfg["gamma"]), float(cfg["x1_lo"]),
                          float(cfg["x1_hi"]), tol_member=tol, witnesses=witnesses)
    if variant == "union":
        return UnionSet(tuple(set_from_config(p) for p in cfg["parts"]),
                        tol_member=tol, witnesses=witnesses)
    raise ConfigurationError(f"unknown set variant {variant!r}")
