"""Command-line front end.

Exit codes: 0 = success / all acceptance predicates pass, 1 = computational
failure, 2 = usage or config error, 3 = ran but acceptance predicates failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import InsufficientDataError
from .estimators import (direction_set, geometric_bundle, link_dimension, local_dimension, ssp_test,
                         write_directions_csv)
from .experiments import (DIR_SCHEDULE, EXAMPLE_IDS, ConfigError, ExperimentConfig, PipelineError, jsonable,
                          atomic_write, reproduce)
from .germs import GERM_IDS, ScaleSchedule, catalog_germ, pushforward_germ
from .lipschitz import parse_map
from .maps import aa_derivative
from .pompeiu import pompeiu_demo
from .topology import (SphericalGrid, complement_components, occupancy_image, planar_section_components,
                       rasterize_cone, write_pgm)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_PREDICATE = 0, 1, 2, 3

SHARED_KEYS = ("germ", "map", "params", "seed", "scales", "alpha", "grid", "out")
EXTRA_KEYS = {
    "dirset": ("count",),
    "gdb": ("q_count", "dir_count"),
    "ssp": ("count",),
    "dim": ("point", "count"),
    "aaderiv": ("point", "grid_density"),
    "components": ("q_count", "dir_count", "thickness", "plane_height"),
    "reproduce": ("example_id",),
    "pompeiu": ("n_terms", "probe_count"),
}


class UsageError(ValueError):
    pass


def _parse_params(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--param expects k=v, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = float(v)
        except ValueError as exc:
            raise UsageError(f"--param {k}: not a number: {v!r}") from exc
    return out


def _parse_scales(value) -> ScaleSchedule:
    if isinstance(value, str):
        parts = value.split(",")
    else:
        parts = list(value)
    if len(parts) != 3:
        raise UsageError("--scales expects r0,gamma,K")
    try:
        return ScaleSchedule(r0=float(parts[0]), gamma=float(parts[1]), count=int(parts[2]))
    except ValueError as exc:
        raise UsageError(f"bad --scales: {exc}") from exc


def _parse_point(value) -> np.ndarray:
    parts = value.split(",") if isinstance(value, str) else list(value)
    try:
        return np.array([float(p) for p in parts])
    except ValueError as exc:
        raise UsageError(f"bad --point {value!r}") from exc


def _add_shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--germ", choices=GERM_IDS, help="catalog germ id")
    p.add_argument("--map", help="catalog map, e.g. rotation(30) or composite(shear-abs,rotation(30))")
    p.add_argument("--param", action="append", metavar="K=V", help="germ / example parameter (repeatable)")
    p.add_argument("--seed", type=int)
    p.add_argument("--scales", metavar="R0,GAMMA,K", help="scale schedule (default 0.5,0.5,8)")
    p.add_argument("--alpha", type=float, metavar="DEG", help="direction resolution in degrees (default 2)")
    p.add_argument("--grid", type=int, metavar="N", help="grid resolution (cube-face cells / probe density)")
    p.add_argument("--out", metavar="DIR", help="output directory for report.json and artifacts")
    p.add_argument("--config", metavar="FILE", help="JSON config; command-line flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dirbundle", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log sampling warnings")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dirset", help="direction set D_p and tangent cone of a germ")
    _add_shared(p)
    p.add_argument("--count", type=int, help="points per shell (default 400)")

    p = sub.add_parser("gdb", help="geometric directional bundle of a germ")
    _add_shared(p)
    p.add_argument("--q-count", dest="q_count", type=int, help="base points per scale (default 256)")
    p.add_argument("--dir-count", dest="dir_count", type=int, help="points per local shell (default 128)")

    p = sub.add_parser("ssp", help="sequence selection property test")
    _add_shared(p)
    p.add_argument("--count", type=int, help="points per shell for the probe directions (default 400)")

    p = sub.add_parser("dim", help="local dimension at a point")
    _add_shared(p)
    p.add_argument("--point", help="x,y[,z] (default: the base point)")
    p.add_argument("--count", type=int, help="points per shell (default 600)")

    p = sub.add_parser("aaderiv", help="Arzela-Ascoli derivative estimate of a map at a point")
    _add_shared(p)
    p.add_argument("--point", help="x,y[,z] (default: origin)")
    p.add_argument("--grid-density", dest="grid_density", type=int, help="probe grid density (default 200)")

    p = sub.add_parser("components", help="complement components of a germ's bundle cone")
    _add_shared(p)
    p.add_argument("--q-count", dest="q_count", type=int)
    p.add_argument("--dir-count", dest="dir_count", type=int)
    p.add_argument("--thickness", type=float, metavar="DEG", help="rasterization thickness in degrees")
    p.add_argument("--plane-height", dest="plane_height", type=float, help="height of the planar section (default 1)")

    p = sub.add_parser("reproduce", help="run a worked example and check its acceptance predicates")
    p.add_argument("example_id", nargs="?", help=f"one of: {', '.join(EXAMPLE_IDS)}")
    _add_shared(p)

    p = sub.add_parser("pompeiu", help="difference quotients of the inverse Pompeiu function")
    _add_shared(p)
    p.add_argument("--n-terms", dest="n_terms", type=int)
    p.add_argument("--probe-count", dest="probe_count", type=int)
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge the JSON config file with command-line flags (flags win)."""
    allowed = set(SHARED_KEYS) | set(EXTRA_KEYS[args.command])
    cfg: dict = {}
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise UsageError("config must be a JSON object")
        unknown = sorted(set(cfg) - allowed)
        if unknown:
            raise UsageError(f"unknown config keys for {args.command}: {', '.join(unknown)}")
    flags = {k: getattr(args, k) for k in allowed if getattr(args, k, None) is not None}
    if "params" in flags or args.param:
        flags["params"] = _parse_params(args.param)
    merged = dict(cfg)
    if "params" in flags:
        merged["params"] = {**cfg.get("params", {}), **flags.pop("params")}
    merged.update(flags)
    return merged


def _schedule(cfg: dict) -> ScaleSchedule:
    return _parse_scales(cfg["scales"]) if "scales" in cfg else ScaleSchedule()


def _alpha(cfg: dict) -> float:
    a = float(cfg.get("alpha", 2.0))
    if not a > 0:
        raise UsageError("--alpha must be positive")
    return math.radians(a)


def _germ(cfg: dict):
    if "germ" not in cfg:
        raise UsageError("--germ is required")
    if cfg["germ"] not in GERM_IDS:
        raise UsageError(f"unknown germ {cfg['germ']!r}")
    try:
        germ = catalog_germ(cfg["germ"], cfg.get("params"))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if cfg.get("map"):
        try:
            germ = pushforward_germ(parse_map(cfg["map"], germ.ambient_dim), germ)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    return germ


def _emit(cfg: dict, command: str, metrics: dict, artifacts=()) -> None:
    report = {"command": command, "config": cfg, "metrics": metrics, "seed": cfg.get("seed", 42),
              "tool_version": __version__}
    text = json.dumps(jsonable(report), sort_keys=True, indent=2, allow_nan=False) + "\n"
    if cfg.get("out"):
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        for name, writer in artifacts:
            writer(out / name)
        atomic_write(out / "report.json", text)
    sys.stdout.write(text)


def cmd_dirset(cfg: dict) -> int:
    germ, sch, a = _germ(cfg), _schedule(cfg), _alpha(cfg)
    est = direction_set(germ, sch, a, int(cfg.get("count", 400)), int(cfg.get("seed", 42)))
    dim = link_dimension(est.limit, a)
    metrics = {"members": len(est.limit), "per_scale_counts": [len(s) for s in est.per_scale],
               "tangent_cone_dim": dim.value, "slope": dim.slope, "warnings": est.warnings}
    _emit(cfg, "dirset", metrics,
          [("directions_dirset.csv", lambda p: write_directions_csv(p, est.scales, est.per_scale, est.limit))])
    return EXIT_OK


def _bundle(cfg: dict, germ, q_default=256, dc_default=128):
    return geometric_bundle(germ, _schedule(cfg), DIR_SCHEDULE, q_count=int(cfg.get("q_count", q_default)),
                            alpha=_alpha(cfg), seed=int(cfg.get("seed", 42)),
                            dir_count=int(cfg.get("dir_count", dc_default)))


def cmd_gdb(cfg: dict) -> int:
    germ = _germ(cfg)
    est = _bundle(cfg, germ)
    dim = link_dimension(est.limit, _alpha(cfg))
    metrics = {"members": len(est.limit), "per_scale_counts": [len(u) for u in est.per_scale_unions],
               "q_counts": est.q_counts, "bundle_dim": dim.value, "slope": dim.slope, "warnings": est.warnings}
    _emit(cfg, "gdb", metrics,
          [("directions_gdb.csv", lambda p: write_directions_csv(p, est.base_scales, est.per_scale_unions, est.limit))])
    return EXIT_OK


def cmd_ssp(cfg: dict) -> int:
    germ, sch, a = _germ(cfg), _schedule(cfg), _alpha(cfg)
    est = direction_set(germ, sch, a, int(cfg.get("count", 400)), int(cfg.get("seed", 42)))
    rep = ssp_test(germ, est.limit, sch)
    metrics = {"verdict": rep.verdict, "gap_ratios": rep.gap_ratios, "final_ratio": rep.final_ratio,
               "max_ratio": rep.max_ratio, "probe_count": rep.probe_count, "flags": rep.flags}
    _emit(cfg, "ssp", metrics)
    return EXIT_OK if rep.verdict == "pass" else EXIT_PREDICATE


def cmd_dim(cfg: dict) -> int:
    germ = _germ(cfg)
    q = _parse_point(cfg["point"]) if "point" in cfg else germ.base_point
    if q.shape != germ.base_point.shape:
        raise UsageError("--point dimension does not match the germ")
    d = local_dimension(germ, q, _schedule(cfg), int(cfg.get("seed", 42)), _alpha(cfg), int(cfg.get("count", 600)))
    _emit(cfg, "dim", {"dimension": d.value, "slope": d.slope, "residual": d.residual, "confident": d.confident,
                       "counts": d.counts, "flags": d.flags})
    return EXIT_OK


def cmd_aaderiv(cfg: dict) -> int:
    if not cfg.get("map"):
        raise UsageError("--map is required")
    p = _parse_point(cfg["point"]) if "point" in cfg else np.zeros(2)
    try:
        h = parse_map(cfg["map"], p.shape[0])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    est = aa_derivative(h, p, _schedule(cfg), int(cfg.get("grid_density", 200)))
    _emit(cfg, "aaderiv", {"converged": est.converged, "cauchy_deviation": est.cauchy_deviation,
                           "spread": est.spread, "bound_ok": est.bound_ok, "lip_estimate": est.lip_estimate})
    return EXIT_OK


def cmd_components(cfg: dict) -> int:
    germ = _germ(cfg)
    if germ.ambient_dim != 3:
        raise UsageError("components needs a germ in R^3")
    est = _bundle(cfg, germ)
    grid = SphericalGrid(3, int(cfg.get("grid", 128)))
    thickness = math.radians(float(cfg["thickness"])) if "thickness" in cfg else None
    try:
        occ = rasterize_cone(est.limit, grid, thickness)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    sphere = complement_components(occ)
    plane = planar_section_components(est.limit, float(cfg.get("plane_height", 1.0)), thickness=occ.thickness)
    img = occupancy_image(occ.active, grid)
    _emit(cfg, "components", {"sphere": sphere.as_dict(), "plane": plane.as_dict(),
                              "thickness_deg": math.degrees(occ.thickness), "members": len(est.limit)},
          [("occupancy_sphere.pgm", lambda p: write_pgm(p, img)),
           ("directions_gdb.csv", lambda p: write_directions_csv(p, est.base_scales, est.per_scale_unions, est.limit))])
    return EXIT_OK


def cmd_reproduce(cfg: dict) -> int:
    if not cfg.get("example_id"):
        raise UsageError(f"example id required; one of: {', '.join(EXAMPLE_IDS)}")
    if cfg.get("germ") or cfg.get("map"):
        raise UsageError("reproduce fixes its own germs and maps")
    kw = {"example_id": cfg["example_id"], "params": cfg.get("params", {}), "seed": int(cfg.get("seed", 42)),
          "out": cfg.get("out")}
    if "scales" in cfg:
        s = _parse_scales(cfg["scales"])
        kw.update(r0=s.r0, gamma=s.gamma, count=s.count)
    if "alpha" in cfg:
        kw["alpha_deg"] = float(cfg["alpha"])
    if "grid" in cfg:
        kw["grid"] = int(cfg["grid"])
    try:
        ecfg = ExperimentConfig(**kw)
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc
    try:
        report = reproduce(ecfg)
    except PipelineError as exc:
        sys.stdout.write(exc.report.to_json())
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    sys.stdout.write(report.to_json())
    return EXIT_OK if report.passed else EXIT_PREDICATE


def cmd_pompeiu(cfg: dict) -> int:
    try:
        table = pompeiu_demo(int(cfg.get("n_terms", 12)), int(cfg.get("seed", 42)), int(cfg.get("probe_count", 10)))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    _emit(cfg, "pompeiu", table.as_dict())
    return EXIT_OK


COMMANDS = {"dirset": cmd_dirset, "gdb": cmd_gdb, "ssp": cmd_ssp, "dim": cmd_dim, "aaderiv": cmd_aaderiv,
            "components": cmd_components, "reproduce": cmd_reproduce, "pompeiu": cmd_pompeiu}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InsufficientDataError, ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
