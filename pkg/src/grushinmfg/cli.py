"""Command-line front end.

Subcommands map onto the library modules: ``reach`` (connect / sequence /
certify-cone / modulus), ``value`` (backward sweep), ``ocp`` (direct solve),
``mfg`` (fictitious play plus mild solution), ``certify`` (alias for the
cone certificate), ``preset`` (list the bundled examples).

Configuration comes from a JSON file (--config) and/or a named preset
(--preset); explicit flags override both.  Exit codes: 0 success, 1 a
numerical probe/certification failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .dynamics import CostSpec, integrate
from .errors import ConfigurationError, DomainError, GrushinError
from .geometry import Cone, ConstraintSet, UnionSet
from .mfg import (
    AtomicMeasure,
    CouplingSpec,
    fictitious_play,
    mild_solution_extract,
    pushforward_at,
)
from .ocp import GridSpec, SolveConfig, solve_trajectory, value_grid_backward
from .presets import (
    PRESETS,
    get_preset,
    make_cost_spec,
    make_coupling,
    make_m0,
    set_from_config,
)
from .reachability import (
    cone_gronwall_bound,
    connect,
    random_cone_trajectories,
    truncated_cone_cost,
    uniform_modulus_probe,
    verify_reachability_sequence,
)

OUT_ENV = "GRUSHIN_MFG_OUT"

_CONFIG_KEYS = {
    "preset", "set", "nu", "T", "seed", "out", "ell", "g", "coupling", "m0",
    "disc", "grid", "target", "source", "sources", "eps", "iters", "probe_tol",
}
_DISC_KEYS = {"n_steps", "n_restarts", "penalty_weight", "max_iters", "seed", "feas_tol", "substeps"}
_GRID_KEYS = {"nx1", "nx2", "nt", "n_r", "n_theta", "a_max", "a_min", "box", "hard_cap"}


@dataclass
class RunConfig:
    subcommand: str
    mode: str | None
    set_: ConstraintSet
    nu: float
    T: float
    seed: int
    out_dir: Path
    ell_cfg: dict
    g_cfg: dict
    coupling_cfg: dict
    m0: AtomicMeasure | None
    disc: SolveConfig
    grid: GridSpec
    target: tuple | None
    source: tuple | None
    sources: list | None
    eps: list[float]
    iters: int
    probe_tol: float
    box: tuple


def _parse_point(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise ConfigurationError(f"point must be 'x1,x2', got {text!r}")
    return (float(parts[0]), float(parts[1]))


def _parse_points(text: str) -> list[tuple[float, float]]:
    return [_parse_point(chunk) for chunk in text.split(";") if chunk.strip()]


def build_arg_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="grushin-mfg",
        description="Constrained optimal control and mean field games with degenerate planar dynamics",
    )
    sub = ap.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--preset", help="named example configuration")
        p.add_argument("--out", help=f"output directory (default $" + OUT_ENV + " or ./out)")
        p.add_argument("--seed", type=int, help="RNG seed (default 0)")
        p.add_argument("--nu", type=float, help="degeneracy exponent (default from preset, else 1)")
        p.add_argument("--T", type=float, help="time horizon")

    p_reach = sub.add_parser("reach", help="connectors and reachability probes")
    p_reach.add_argument("mode", choices=["connect", "sequence", "certify-cone", "modulus"])
    common(p_reach)
    p_reach.add_argument("--source", help="source point 'x1,x2'")
    p_reach.add_argument("--target", help="target point 'x1,x2'")
    p_reach.add_argument("--sources", help="semicolon-separated source list")
    p_reach.add_argument("--pairs", type=int, default=50, help="pair count for the modulus probe")

    p_value = sub.add_parser("value", help="backward value-function sweep")
    common(p_value)
    p_value.add_argument("--nx", type=int, help="grid nodes per axis")
    p_value.add_argument("--nt", type=int, help="time steps")

    p_ocp = sub.add_parser("ocp", help="direct trajectory optimization from one point")
    common(p_ocp)
    p_ocp.add_argument("--source", help="start point 'x1,x2'")
    p_ocp.add_argument("--restarts", type=int, help="multistart count")
    p_ocp.add_argument("--steps", type=int, help="control pieces")

    p_mfg = sub.add_parser("mfg", help="fictitious play and mild solution")
    common(p_mfg)
    p_mfg.add_argument("--iters", type=int, help="fictitious-play iterations (default 50)")
    p_mfg.add_argument("--nx", type=int, help="mild-solution grid nodes per axis")
    p_mfg.add_argument("--nt", type=int, help="mild-solution time steps")

    p_cert = sub.add_parser("certify", help="unreachability certificate for the cone apex")
    common(p_cert)
    p_cert.add_argument("--target", help="point to certify (must be the apex '0,0')")

    p_preset = sub.add_parser("preset", help="list bundled presets")
    common(p_preset)
    return ap


def _load_file_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file is not valid JSON: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigurationError("config file must hold a JSON object")
    unknown = set(cfg) - _CONFIG_KEYS
    if unknown:
        raise ConfigurationError(f"unknown config key {sorted(unknown)[0]!r}")
    return cfg


def parse_config(args: argparse.Namespace) -> RunConfig:
    file_cfg = _load_file_config(args.config) if getattr(args, "config", None) else {}
    preset_name = getattr(args, "preset", None) or file_cfg.get("preset")
    preset = get_preset(preset_name) if preset_name else None

    if args.subcommand == "preset":
        return RunConfig(
            subcommand="preset", mode=None, set_=None, nu=1.0, T=1.0, seed=0,
            out_dir=Path("out"), ell_cfg={}, g_cfg={}, coupling_cfg={}, m0=None,
            disc=SolveConfig(), grid=GridSpec(nx1=3, nx2=3, nt=1), target=None,
            source=None, sources=None, eps=[], iters=0, probe_tol=1e-2,
            box=(0.0, 1.0, 0.0, 1.0),
        )

    nu = getattr(args, "nu", None)
    if nu is None:
        nu = file_cfg.get("nu", preset.nu if preset else 1.0)
    nu = float(nu)
    if nu <= 0:
        raise ConfigurationError("nu must be positive")
    horizon = getattr(args, "T", None)
    if horizon is None:
        horizon = file_cfg.get("T", preset.T if preset else 1.0)
    horizon = float(horizon)
    if horizon <= 0:
        raise ConfigurationError("T must be positive")
    seed = getattr(args, "seed", None)
    if seed is None:
        seed = int(file_cfg.get("seed", 0))

    if "set" in file_cfg:
        set_ = set_from_config(file_cfg["set"])
        box = set_.bounding_box()
    elif preset is not None:
        set_ = preset.build(nu)
        box = preset.box
    else:
        raise ConfigurationError("missing key 'set' (or use --preset)")

    ell_cfg = file_cfg.get("ell", preset.ell_cfg if preset else {"kind": "zero"})
    g_cfg = file_cfg.get("g", preset.g_cfg if preset else {"kind": "zero"})

    disc_cfg = dict(file_cfg.get("disc", {}))
    unknown = set(disc_cfg) - _DISC_KEYS
    if unknown:
        raise ConfigurationError(f"unknown disc key {sorted(unknown)[0]!r}")
    if getattr(args, "restarts", None) is not None:
        disc_cfg["n_restarts"] = args.restarts
    if getattr(args, "steps", None) is not None:
        disc_cfg["n_steps"] = args.steps
    disc_cfg.setdefault("seed", seed)
    disc = SolveConfig(**disc_cfg)

    grid_cfg = dict(file_cfg.get("grid", {}))
    unknown = set(grid_cfg) - _GRID_KEYS
    if unknown:
        raise ConfigurationError(f"unknown grid key {sorted(unknown)[0]!r}")
    if getattr(args, "nx", None) is not None:
        grid_cfg["nx1"] = args.nx
        grid_cfg["nx2"] = args.nx
    if getattr(args, "nt", None) is not None:
        grid_cfg["nt"] = args.nt
    grid_cfg.setdefault("nx1", 33)
    grid_cfg.setdefault("nx2", 33)
    grid_cfg.setdefault("nt", 33)
    if "box" in grid_cfg and grid_cfg["box"] is not None:
        grid_cfg["box"] = tuple(float(v) for v in grid_cfg["box"])
    else:
        grid_cfg["box"] = tuple(box)
    grid = GridSpec(t_end=horizon, **grid_cfg)

    coupling_cfg = dict(file_cfg.get("coupling", {"kind": "kernel_congestion", "bandwidth": 0.2,
                                                  "bound_K": 1.0}))

    m0 = None
    if "m0" in file_cfg:
        m0 = make_m0(file_cfg["m0"])
    elif preset is not None and preset.m0_atoms is not None:
        m0 = make_m0(preset.m0_atoms)

    target = None
    if getattr(args, "target", None):
        target = _parse_point(args.target)
    elif "target" in file_cfg:
        target = tuple(float(v) for v in file_cfg["target"])
    elif preset is not None:
        target = preset.default_target

    source = None
    if getattr(args, "source", None):
        source = _parse_point(args.source)
    elif "source" in file_cfg:
        source = tuple(float(v) for v in file_cfg["source"])

    sources = None
    if getattr(args, "sources", None):
        sources = _parse_points(args.sources)
    elif "sources" in file_cfg:
        sources = [tuple(float(v) for v in s) for s in file_cfg["sources"]]
    elif preset is not None and preset.sequence_sources is not None:
        sources = preset.sequence_sources(nu, 10)

    out_dir = getattr(args, "out", None) or file_cfg.get("out") or os.environ.get(OUT_ENV) or "out"

    iters = getattr(args, "iters", None)
    if iters is None:
        iters = int(file_cfg.get("iters", 50))

    eps = [10.0**-k for k in range(1, 7)]
    if "eps" in file_cfg:
        eps = [float(v) for v in file_cfg["eps"]]

    return RunConfig(
        subcommand=args.subcommand,
        mode=getattr(args, "mode", None),
        set_=set_,
        nu=nu,
        T=horizon,
        seed=seed,
        out_dir=Path(out_dir),
        ell_cfg=ell_cfg,
        g_cfg=g_cfg,
        coupling_cfg=coupling_cfg,
        m0=m0,
        disc=disc,
        grid=grid,
        target=target,
        source=source,
        sources=sources,
        eps=eps,
        iters=iters,
        probe_tol=float(file_cfg.get("probe_tol", 1e-2)),
        box=tuple(box),
    )


# -- artifact writers --------------------------------------------------------


def _write_json(path: Path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_rows(path: Path, header: str, rows) -> None:
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _cost_spec(cfg: RunConfig) -> CostSpec:
    return make_cost_spec(cfg.ell_cfg, cfg.g_cfg, cfg.box, cfg.T)


# -- subcommand runners ------------------------------------------------------


def _run_value(cfg: RunConfig) -> int:
    spec = _cost_spec(cfg)
    vg = value_grid_backward(cfg.set_, cfg.nu, spec, cfg.grid)
    vg.to_csv(cfg.out_dir / "u_grid.csv")
    _write_json(cfg.out_dir / "u_grid_meta.json", vg.meta)
    probe = cfg.target if cfg.target is not None else vg.space_points[0]
    print(f"value: u({probe[0]:g},{probe[1]:g},0) = {vg.value_at(probe, 0.0):.6g} -> {cfg.out_dir / 'u_grid.csv'}")
    return 0


def _run_ocp(cfg: RunConfig) -> int:
    if cfg.source is None:
        raise ConfigurationError("missing key 'source'")
    spec = _cost_spec(cfg)
    sol = solve_trajectory(cfg.source, 0.0, cfg.T, cfg.set_, cfg.nu, spec, cfg.disc)
    sol.traj.to_csv(cfg.out_dir / "trajectory.csv")
    _write_json(cfg.out_dir / "ocp.json", sol.to_json())
    print(f"ocp: value = {sol.value:.6g} (converged={sol.converged}) -> {cfg.out_dir / 'ocp.json'}")
    return 0


def _run_mfg(cfg: RunConfig) -> int:
    if cfg.m0 is None:
        raise ConfigurationError("missing key 'm0' (and the preset has no default)")
    coupling = make_coupling(cfg.coupling_cfg)
    mu, diags = fictitious_play(cfg.m0, cfg.set_, cfg.nu, coupling, cfg.disc, cfg.iters, cfg.T)
    vgrid, m_path = mild_solution_extract(mu, cfg.set_, cfg.nu, coupling, cfg.grid)

    _write_rows(cfg.out_dir / "mu_atoms.csv", "id,weight",
                [(i, a.weight) for i, a in enumerate(mu.atoms)])
    for i, a in enumerate(mu.atoms):
        a.traj.to_csv(cfg.out_dir / f"traj_{i:04d}.csv")
    rows = []
    for t, m in zip(vgrid.times, m_path):
        for p, w in zip(m.points, m.weights):
            rows.append((t, p[0], p[1], w))
    _write_rows(cfg.out_dir / "m_path.csv", "t,x1,x2,w", rows)
    payload = diags.to_json()
    payload["n_atoms"] = mu.n_atoms
    payload["holder_constant"] = mu.holder_constant(cfg.nu)
    _write_json(cfg.out_dir / "diagnostics.json", payload)
    vgrid.to_csv(cfg.out_dir / "u_grid.csv")
    _write_json(cfg.out_dir / "u_grid_meta.json", vgrid.meta)
    print(
        f"mfg: {cfg.iters} iterations, exploitability {diags.exploitability[-1]:.3e}, "
        f"{mu.n_atoms} atoms -> {cfg.out_dir / 'diagnostics.json'}"
    )
    return 0


def _run_certify(cfg: RunConfig) -> int:
    target = cfg.target if cfg.target is not None else (0.0, 0.0)
    if abs(target[0]) > 1e-12 or abs(target[1]) > 1e-12:
        raise ConfigurationError("certification targets the cone apex; use --target 0,0")
    cone = _find_cone(cfg.set_)
    if cone is None:
        raise ConfigurationError("certify requires a cone constraint set")
    costs = [truncated_cone_cost((1.0, 1.0), e) for e in cfg.eps]
    slope = float(np.polyfit(np.log(cfg.eps), np.log(costs), 1)[0])
    trajs = random_cone_trajectories(cone.m1, cone.m2, (1.0, 1.2), 100, cfg.seed, nu=cfg.nu)
    ratios = [cone_gronwall_bound(cone.m1, tr).observed_min_ratio for tr in trajs]
    min_ratio = min(ratios)
    certified = bool(abs(slope + 1.0) <= 0.05 and min_ratio >= 1.0 - 1e-6)
    payload = {
        "target": [target[0], target[1]],
        "m1": cone.m1,
        "m2": cone.m2,
        "eps": cfg.eps,
        "truncated_costs": costs,
        "cost_slope": slope,
        "gronwall_min_ratio": min_ratio,
        "n_random_trajectories": len(trajs),
        "unreachable_certified": certified,
    }
    _write_json(cfg.out_dir / "certificate.json", payload)
    print(
        f"certify: slope {slope:.4f}, min Gronwall ratio {min_ratio:.8f}, "
        f"certified={certified} -> {cfg.out_dir / 'certificate.json'}"
    )
    return 0 if certified else 1


def _find_cone(set_: ConstraintSet) -> Cone | None:
    if isinstance(set_, Cone):
        return set_
    if isinstance(set_, UnionSet):
        for part in set_.parts:
            found = _find_cone(part)
            if found is not None:
                return found
    return None


def _run_reach(cfg: RunConfig) -> int:
    if cfg.mode == "certify-cone":
        return _run_certify(cfg)
    if cfg.mode == "connect":
        if cfg.source is None or cfg.target is None:
            raise ConfigurationError("missing key 'source' or 'target'")
        res = connect(cfg.set_, cfg.nu, cfg.source, cfg.target)
        res.traj.to_csv(cfg.out_dir / "connector.csv")
        _write_json(cfg.out_dir / "connect.json", res.to_json())
        print(
            f"reach connect: case {res.case_tag}, delta {res.delta:.6g}, "
            f"||a||_2 {res.control_l2:.6g} -> {cfg.out_dir / 'connect.json'}"
        )
        return 0
    if cfg.mode == "sequence":
        if cfg.target is None or not cfg.sources:
            raise ConfigurationError("missing key 'target' or 'sources'")
        rep = verify_reachability_sequence(cfg.set_, cfg.nu, cfg.target, cfg.sources)
        _write_json(cfg.out_dir / "sequence.json", rep.to_json())
        ok = rep.monotone_to_zero or (rep.established and rep.deltas[-1] <= 1e-2)
        print(
            f"reach sequence: established={rep.established}, "
            f"final delta {rep.deltas[-1] if rep.deltas else float('nan'):.3e} -> {cfg.out_dir / 'sequence.json'}"
        )
        return 0 if rep.established else 1
    # modulus
    if cfg.target is None or not cfg.sources:
        raise ConfigurationError("missing key 'target' or 'sources'")
    pairs = [(s, cfg.target) for s in cfg.sources]
    rep = uniform_modulus_probe(cfg.set_, cfg.nu, pairs)
    _write_json(cfg.out_dir / "modulus.json", rep.to_json())
    print(
        f"reach modulus: delta ~ d^{rep.delta_exponent:.3f}, "
        f"||a|| ~ d^{rep.l2_exponent:.3f} -> {cfg.out_dir / 'modulus.json'}"
    )
    return 0 if rep.single_modulus_ok else 1


def _run_preset_list(cfg: RunConfig) -> int:
    for name in sorted(PRESETS):
        print(f"{name:22s} {PRESETS[name].description}")
    return 0


def run(cfg: RunConfig) -> int:
    if cfg.subcommand == "preset":
        return _run_preset_list(cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    marker = cfg.out_dir / "_FAILED"
    if marker.exists():
        marker.unlink()
    try:
        if cfg.subcommand == "reach":
            return _run_reach(cfg)
        if cfg.subcommand == "value":
            return _run_value(cfg)
        if cfg.subcommand == "ocp":
            return _run_ocp(cfg)
        if cfg.subcommand == "mfg":
            return _run_mfg(cfg)
        if cfg.subcommand == "certify":
            return _run_certify(cfg)
        raise ConfigurationError(f"unknown subcommand {cfg.subcommand!r}")
    except ConfigurationError:
        raise
    except GrushinError as exc:
        with open(marker, "w") as fh:
            fh.write(f"{type(exc).__name__}: {exc}\n")
        print(f"run failed: {exc}", file=sys.stderr)
        return 1


def main(argv=None) -> int:
    ap = build_arg_parser()
    args = ap.parse_args(argv)
    try:
        cfg = parse_config(args)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return run(cfg)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
