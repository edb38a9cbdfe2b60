"""Command-line front end.

One subcommand per verification construct: secant, limsup, hausdorff,
counterexample, el-check, action, exactness, potential.  Inputs come from
JSON config files plus a few override flags; outputs are JSON reports on
stdout and CSV/manifest files under --out.

Exit codes: 0 verified, 1 mathematical check failed, 2 configuration or
parse error, 3 numerical domain error.  Reports embed the grid and
tolerance metadata they were produced with, and identical configs produce
byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Callable, Mapping

from . import compact_sets, null_lagrangian, secant_geometry
from .errors import ConfigError, DomainError, TangentLabError
from .numerics import Box, DEFAULT_TOLERANCES, Grid
from .secant_geometry import HypersurfaceSpec, SurfaceSpec

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _print_json(payload: Any) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError("config root must be a JSON object")
    return payload


def _require(config: Mapping, key: str):
    if key not in config:
        raise ConfigError(f"config is missing required key {key!r}")
    return config[key]


def _out_dir(args) -> Path | None:
    if args.out is None:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload: Any) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _box_from_config(raw) -> Box:
    try:
        return Box(tuple(tuple(float(v) for v in iv) for iv in raw))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid box specification {raw!r}: {exc}") from exc


def _spec_from_config(config: Mapping):
    omega = _box_from_config(_require(config, "omega"))
    base = _require(config, "base")
    f_src = _require(config, "f")
    if omega.dim == 2:
        return SurfaceSpec.from_source(f_src, omega, base)
    if omega.dim == 3:
        return HypersurfaceSpec.from_source(f_src, omega, base)
    raise ConfigError("omega must be 2- or 3-dimensional")


def _grid_for(spec, config: Mapping, args) -> Grid:
    m = args.grid if args.grid is not None else config.get("grid", 201)
    try:
        return Grid(spec.omega, int(m))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _coeff_sequence(spec, config: Mapping):
    seq = _require(config, "sequence")
    if isinstance(seq, dict) and "direction" in seq:
        count = int(seq.get("count", 64))
        return secant_geometry.coefficient_sequence(spec, seq["direction"], count)
    if isinstance(seq, list):
        return [tuple(float(v) for v in c) for c in seq]
    raise ConfigError(
        "sequence must be {'direction': [...], 'count': n} or an explicit list"
    )


def _lagrangian_from_config(config: Mapping) -> null_lagrangian.SeparableLagrangian:
    raw = _require(config, "lagrangian")
    if "generators" in raw:
        gens = raw["generators"]
        triple = null_lagrangian.GeneratorTriple.from_sources(
            _require(gens, "f"), _require(gens, "g"), _require(gens, "h")
        )
        return null_lagrangian.build_from_generators(triple)
    return null_lagrangian.SeparableLagrangian.from_sources(
        _require(raw, "P"), _require(raw, "Q1"), _require(raw, "Q2"), _require(raw, "Q3")
    )


def _curve_from_config(raw: Mapping) -> null_lagrangian.Curve:
    return null_lagrangian.Curve.from_sources(
        _require(raw, "x"),
        _require(raw, "y"),
        _require(raw, "z"),
        float(_require(raw, "a")),
        float(_require(raw, "b")),
    )


def _curves_from_config(config: Mapping) -> list[null_lagrangian.Curve]:
    if "curves" in config:
        return [_curve_from_config(c) for c in config["curves"]]
    if "curve" in config:
        return [_curve_from_config(config["curve"])]
    raise ConfigError("config needs a 'curve' or 'curves' entry")


# ---------------------------------------------------------------------------
# subcommand handlers


def cmd_secant(args) -> int:
    config = _load_config(args.config)
    spec = _spec_from_config(config)
    grid = _grid_for(spec, config, args)
    coeffs = tuple(float(v) for v in _require(config, "coefficients"))
    cloud = secant_geometry.extract_secant_set(spec, coeffs, grid)
    payload = {
        "dim": spec.dim,
        "coefficients": list(coeffs),
        "grid_points_per_axis": grid.points_per_axis,
        "h": grid.h,
        "count": cloud.size,
    }
    out = _out_dir(args)
    if out is not None:
        compact_sets.write_point_cloud(cloud, out / "secant_set.csv")
        payload["csv"] = str(out / "secant_set.csv")
    _print_json(payload)
    return EXIT_OK


def cmd_limsup(args) -> int:
    config = _load_config(args.config)
    spec = _spec_from_config(config)
    grid = _grid_for(spec, config, args)
    eps = args.eps if args.eps is not None else config.get("eps")
    tail = float(config.get("tail_fraction", 0.5))
    report = secant_geometry.verify_upper_limit_inclusion(
        spec,
        _coeff_sequence(spec, config),
        grid,
        eps=None if eps is None else float(eps),
        tail_fraction=tail,
    )
    payload = report.to_json_dict()
    out = _out_dir(args)
    if out is not None:
        _write_json(out / "inclusion_report.json", payload)
        compact_sets.write_point_cloud(report.limsup_set, out / "limsup.csv")
        compact_sets.write_point_cloud(report.tangent_set, out / "tangent_set.csv")
    _print_json(payload)
    return EXIT_OK if report.inclusion else EXIT_CHECK_FAILED


def cmd_hausdorff(args) -> int:
    a = compact_sets.read_point_cloud(args.a)
    b = compact_sets.read_point_cloud(args.b)
    if a.is_empty or b.is_empty:
        raise ConfigError("hausdorff requires two nonempty point clouds")
    d_ab = compact_sets.directed_hausdorff(a, b)
    d_ba = compact_sets.directed_hausdorff(b, a)
    _print_json(
        {
            "directed_a_to_b": d_ab,
            "directed_b_to_a": d_ba,
            "hausdorff": max(d_ab, d_ba),
            "count_a": a.size,
            "count_b": b.size,
        }
    )
    return EXIT_OK


def cmd_counterexample(args) -> int:
    if args.dim is None or args.n is None:
        raise ConfigError("counterexample requires --dim and --n")
    m = args.grid if args.grid is not None else (401 if args.dim == 2 else 101)
    grid = Grid(Box.cube(-1.0, 1.0, args.dim), int(m))
    cloud, description = secant_geometry.phi_counterexample(args.dim, args.n, grid)
    payload = description.to_json_dict()
    payload["count"] = cloud.size
    payload["h"] = grid.h
    out = _out_dir(args)
    if out is not None:
        compact_sets.write_point_cloud(cloud, out / "counterexample.csv")
        _write_json(out / "counterexample.json", payload)
        payload["csv"] = str(out / "counterexample.csv")
    _print_json(payload)
    return EXIT_OK


def cmd_el_check(args) -> int:
    config = _load_config(args.config)
    lagrangian = _lagrangian_from_config(config)
    curves = _curves_from_config(config)
    samples = args.samples if args.samples is not None else int(config.get("samples", 1000))
    exact = null_lagrangian.exactness_residuals(lagrangian)
    scans = []
    worst = 0.0
    import warnings as _warnings

    with _warnings.catch_warnings():
        _warnings.simplefilter("ignore")
        for curve in curves:
            scan = null_lagrangian.max_euler_lagrange_residual(
                lagrangian, curve, samples
            )
            scans.append(scan.to_json_dict())
            worst = max(worst, scan.max_abs)
    tol = DEFAULT_TOLERANCES.exactness
    payload = {
        "exactness": exact.to_json_dict(),
        "scans": scans,
        "max_residual": worst,
        "tolerance": tol,
        "verified": worst <= tol,
    }
    out = _out_dir(args)
    if out is not None:
        _write_json(out / "el_check.json", payload)
    _print_json(payload)
    return EXIT_OK if worst <= tol else EXIT_CHECK_FAILED


def cmd_action(args) -> int:
    config = _load_config(args.config)
    lagrangian = _lagrangian_from_config(config)
    curves = _curves_from_config(config)
    panels = args.panels if args.panels is not None else int(config.get("panels", 1024))
    results = []
    for curve in curves:
        entry = {
            "interval": [curve.a, curve.b],
            "panels": panels,
            "action": null_lagrangian.action(lagrangian, curve, panels),
            "richardson_delta": null_lagrangian.action_richardson_delta(
                lagrangian, curve, panels
            ),
        }
        if lagrangian.generators is not None:
            entry["endpoint_action"] = null_lagrangian.endpoint_action(
                lagrangian.generators, curve
            )
        results.append(entry)
    payload = {"results": results}
    out = _out_dir(args)
    if out is not None:
        _write_json(out / "action.json", payload)
    _print_json(payload)
    return EXIT_OK


def cmd_exactness(args) -> int:
    config = _load_config(args.config)
    lagrangian = _lagrangian_from_config(config)
    if "box" in config:
        grid = Grid(_box_from_config(config["box"]), int(config.get("points_per_axis", 9)))
    else:
        grid = null_lagrangian.DEFAULT_SAMPLE_GRID
    report = null_lagrangian.exactness_residuals(lagrangian, grid)
    tol = DEFAULT_TOLERANCES.exactness
    payload = report.to_json_dict()
    payload["tolerance"] = tol
    payload["verified"] = report.max_residual <= tol
    out = _out_dir(args)
    if out is not None:
        _write_json(out / "exactness.json", payload)
    _print_json(payload)
    return EXIT_OK if report.max_residual <= tol else EXIT_CHECK_FAILED


def cmd_potential(args) -> int:
    config = _load_config(args.config)
    from .expr import parse

    s_var = config.get("s_var", "x")
    variables = ("t", s_var)
    p = parse(_require(config, "p"), variables)
    q = parse(_require(config, "q"), variables)
    ref = tuple(float(v) for v in _require(config, "ref"))
    panels = args.panels if args.panels is not None else int(config.get("panels", 256))
    box = _box_from_config(config["check_box"]) if "check_box" in config else None
    try:
        u = null_lagrangian.potential_from_exact_pair(
            p, q, ref, check_box=box, panels=panels
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    eval_points = config.get("evaluate", [])
    values = [
        {"point": [float(a), float(b)], "u": u(float(a), float(b))}
        for a, b in eval_points
    ]
    payload = {
        "ref": list(ref),
        "panels": panels,
        "u_at_ref": u(*ref),
        "values": values,
    }
    out = _out_dir(args)
    if out is not None:
        _write_json(out / "potential.json", payload)
    _print_json(payload)
    return EXIT_OK


_HANDLERS: dict[str, Callable] = {
    "secant": cmd_secant,
    "limsup": cmd_limsup,
    "hausdorff": cmd_hausdorff,
    "counterexample": cmd_counterexample,
    "el-check": cmd_el_check,
    "action": cmd_action,
    "exactness": cmd_exactness,
    "potential": cmd_potential,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tangentlab",
        description=(
            "Numerical checks for secant-set limit geometry and separable "
            "null Lagrangians."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, needs_config: bool = True) -> None:
        if needs_config:
            p.add_argument("--config", type=str, default=None, help="JSON config path")
        p.add_argument("--out", type=str, default=None, help="output directory")

    p = sub.add_parser("secant", help="extract one secant set as CSV + manifest")
    common(p)
    p.add_argument("--grid", type=int, default=None, help="grid points per axis")

    p = sub.add_parser("limsup", help="verify the upper-limit inclusion")
    common(p)
    p.add_argument("--grid", type=int, default=None)
    p.add_argument("--eps", type=float, default=None, help="membership tolerance")

    p = sub.add_parser("hausdorff", help="Hausdorff distance between two CSV clouds")
    p.add_argument("--a", type=str, required=True)
    p.add_argument("--b", type=str, required=True)

    p = sub.add_parser("counterexample", help="built-in flat-exponential secant set")
    common(p, needs_config=False)
    p.add_argument("--dim", type=int, choices=(2, 3), default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--grid", type=int, default=None)

    p = sub.add_parser("el-check", help="Euler-Lagrange residual scan along curves")
    common(p)
    p.add_argument("--samples", type=int, default=None)

    p = sub.add_parser("action", help="action integrals with Richardson deltas")
    common(p)
    p.add_argument("--panels", type=int, default=None)

    p = sub.add_parser("exactness", help="mixed-partial exactness residuals")
    common(p)

    p = sub.add_parser("potential", help="potential reconstruction for an exact pair")
    common(p)
    p.add_argument("--panels", type=int, default=None)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handler = _HANDLERS[args.command]
    try:
        return handler(args)
    except DomainError as exc:
        print(f"numerical domain error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, TangentLabError, ValueError, KeyError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
