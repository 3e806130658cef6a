"""Batch command-line interface.

Subcommands:

  dataset   sample a built-in system into a dataset file
  solve     compile and solve one configuration, write a certificate
  verify    residual and containment checks on a certificate
  render    level-set geometry to CSV (and SVG for planar problems)

Exit codes: 0 success, 1 solver or verification failure, 2 usage or
configuration errors.

Dataset files are JSON:

    {"n": 1, "M": 1.0, "points": [{"x": [-1.0], "y": [-0.5]}, ...]}

Configuration files are JSON or TOML (by extension) with polynomials
written over variables x1..xn:

    {
      "n": 1, "mode": "outer", "T": 1.0, "degree": 8,
      "X": {"lo": [-1.0], "hi": [1.0]},
      "X_T": {"inequalities": ["0.0625 - x1^2"]},
      "dataset": "d1.json",            // optional, --dataset overrides
      "solver": {"max_iterations": 200, "feasibility_tol": 1e-8},
      "y_ball_radius": null, "normalize_time": false
    }

Certificate files are JSON with v and w stored as coefficient vectors in
graded lexicographic order; repeated runs of the same solve produce byte
identical files.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .geometry import Dataset, SemialgebraicSet, validate_dataset
from .oracle import builtin_system, dataset_from_system
from .poly import Box, parse_polynomial
from .problems import (
    MODE_OUTER,
    Certificate,
    ProblemConfig,
    level_set,
    marching_squares,
    membership_grid,
    solve_roa,
)
from .solver import SolveOptions
from .verify import (
    containment_check,
    inner_containment_check,
    residual_report,
)
from .oracle import best_case_roa_1d

USAGE_ERROR = 2
FAILURE = 1


class CliError(Exception):
    """Configuration or input problem; maps to exit code 2."""


# ----------------------------------------------------------------------
# file formats

def dataset_to_json_dict(dataset: Dataset) -> dict:
    return {
        "n": dataset.n,
        "M": dataset.M,
        "points": [
            {"x": [float(c) for c in x], "y": [float(c) for c in y]}
            for x, y in dataset.points
        ],
    }


def dataset_from_json_dict(payload: dict) -> Dataset:
    try:
        n = int(payload["n"])
        m = float(payload["M"])
        pts = [(p["x"], p["y"]) for p in payload["points"]]
    except (KeyError, TypeError) as exc:
        raise CliError(f"malformed dataset file: missing {exc}") from None
    return Dataset.from_points(n=n, M=m, points=pts)


def load_dataset(path: Path) -> Dataset:
    try:
        payload = json.loads(path.read_text())
    except FileNotFoundError:
        raise CliError(f"dataset file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"dataset file {path} is not valid JSON: {exc}") from None
    return dataset_from_json_dict(payload)


def write_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _load_config_mapping(path: Path) -> dict:
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise CliError(f"config file not found: {path}") from None
    if path.suffix.lower() == ".toml":
        try:
            import tomllib  # py311+
        except ModuleNotFoundError:
            import tomli as tomllib
        try:
            return tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise CliError(f"config file {path} is not valid TOML: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"config file {path} is not valid JSON: {exc}") from None


def config_from_dict(payload: dict) -> tuple[ProblemConfig, str | None]:
    """Build a ProblemConfig; also returns the embedded dataset path."""
    try:
        n = int(payload["n"])
        box = Box(tuple(payload["X"]["lo"]), tuple(payload["X"]["hi"]))
        names = [f"x{i + 1}" for i in range(n)]
        target_raw = payload["X_T"]
        if isinstance(target_raw, list):
            target_raw = {"inequalities": target_raw}
        target = SemialgebraicSet(
            arity=n,
            inequalities=tuple(
                parse_polynomial(s, names)
                for s in target_raw.get("inequalities", [])
            ),
            equalities=tuple(
                parse_polynomial(s, names)
                for s in target_raw.get("equalities", [])
            ),
        )
        solver_raw = payload.get("solver", {})
        options = SolveOptions(
            feasibility_tol=float(solver_raw.get("feasibility_tol", 1e-8)),
            max_iterations=int(solver_raw.get("max_iterations", 200)),
            time_limit=float(solver_raw.get("time_limit", 0.0)),
            verbose=bool(solver_raw.get("verbose", False)),
            backend=str(solver_raw.get("backend", "clarabel")),
            exchange_dir=solver_raw.get("exchange_dir"),
        )
        config = ProblemConfig(
            n=n,
            T=float(payload["T"]),
            degree=int(payload["degree"]),
            X=box,
            X_T=target,
            mode=str(payload.get("mode", MODE_OUTER)),
            solver=options,
            y_ball_radius=(
                float(payload["y_ball_radius"])
                if payload.get("y_ball_radius") is not None
                else None
            ),
            normalize_time=bool(payload.get("normalize_time", False)),
            moment_vector=payload.get("moment_vector"),
        )
    except CliError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"bad configuration: {exc}") from None
    dataset_path = payload.get("dataset")
    return config, dataset_path


def load_config(path: Path) -> tuple[ProblemConfig, Path | None]:
    config, dataset_path = config_from_dict(_load_config_mapping(path))
    if dataset_path is not None:
        dataset_path = (path.parent / dataset_path).resolve()
    return config, dataset_path


def load_certificate(path: Path) -> Certificate:
    try:
        payload = json.loads(path.read_text())
    except FileNotFoundError:
        raise CliError(f"certificate file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"certificate file {path} is not valid JSON: {exc}") from None
    try:
        return Certificate.from_json_dict(payload)
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"malformed certificate: {exc}") from None


# ----------------------------------------------------------------------
# subcommands

def cmd_dataset(args) -> int:
    try:
        system = builtin_system(args.system)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    if (args.points is None) == (args.n_samples is None):
        raise CliError("pass exactly one of --points or --n-samples")
    if args.points is not None:
        rows = []
        for chunk in args.points.split(";"):
            chunk = chunk.strip()
            if not chunk:
                continue
            try:
                rows.append([float(v) for v in chunk.split(",")])
            except ValueError:
                raise CliError(f"bad point {chunk!r}") from None
        if system.n == 1:
            # one-dimensional states: commas and semicolons both separate
            # points, so `--points -1,0,1` is three states
            rows = [[v] for row in rows for v in row]
        points = np.array(rows, dtype=float)
        if points.ndim != 2 or points.shape[1] != system.n:
            raise CliError(
                f"points for {system.name} need {system.n} coordinates each"
            )
        dataset = dataset_from_system(system, points=points)
    else:
        if args.seed is None:
            raise CliError("--n-samples requires --seed")
        dataset = dataset_from_system(
            system, n_samples=args.n_samples, seed=args.seed
        )
    report = validate_dataset(dataset)
    write_json(Path(args.out), dataset_to_json_dict(dataset))
    print(
        f"wrote {args.out}: N={dataset.size} n={dataset.n} M={dataset.M} "
        f"consistent={report.consistent} worst_ratio={report.worst_ratio:.6f}"
    )
    return 0


def _resolve_dataset(args, config_dataset: Path | None) -> Dataset:
    if args.dataset is not None:
        return load_dataset(Path(args.dataset))
    if config_dataset is not None:
        return load_dataset(config_dataset)
    raise CliError("no dataset: pass --dataset or set it in the config")


def cmd_solve(args) -> int:
    config, config_dataset = load_config(Path(args.config))
    dataset = _resolve_dataset(args, config_dataset)
    try:
        cert, result, problem, _ = solve_roa(config, dataset)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    write_json(Path(args.out), cert.to_json_dict())
    dims = problem.psd_block_dims
    print(f"mode={cert.mode} n={cert.n} degree={cert.degree}")
    print(
        f"rows={problem.num_rows} free_vars={problem.num_free_vars} "
        f"psd_blocks={len(dims)} largest_block={max(dims) if dims else 0}"
    )
    print(
        f"status={cert.status} objective={cert.objective:.9g} "
        f"primal_residual={result.primal_residual:.3e} "
        f"min_eig={result.min_block_eigenvalue:.3e}"
    )
    print(
        f"build_seconds={cert.timings['build_seconds']:.2f} "
        f"solve_seconds={cert.timings['solve_seconds']:.2f} "
        f"iterations={result.iterations}"
    )
    print(f"wrote {args.out}")
    return 0 if cert.status == "optimal" else FAILURE


def cmd_verify(args) -> int:
    config, config_dataset = load_config(Path(args.config))
    dataset = _resolve_dataset(args, config_dataset)
    cert = load_certificate(Path(args.certificate))
    report = residual_report(
        cert, config, dataset, num_samples=args.samples, seed=args.seed
    )
    checks: dict = {"residuals": report.to_json_dict()}
    ok = report.passes()
    for entry in report.entries:
        mark = "pass" if entry.within() else "FAIL"
        print(
            f"residual {entry.name:24s} max={entry.max_violation:.3e} "
            f"scale={entry.scale:.3e} [{mark}]"
        )
    if cert.n == 1 and cert.mode == MODE_OUTER:
        region = best_case_roa_1d(dataset, config)
        contain = containment_check(cert, region)
        checks["containment"] = {"oracle_region": list(region), **contain}
        ok = ok and contain["ok"]
        print(
            f"containment best-case [{region[0]:.6f}, {region[1]:.6f}] "
            f"min_w={contain['min_w']:.6f} "
            f"[{'pass' if contain['ok'] else 'FAIL'}]"
        )
    elif cert.n == 1 and cert.mode == "inner":
        contain = inner_containment_check(cert, dataset, config)
        checks["inner_containment"] = contain
        ok = ok and contain["ok"]
        print(
            f"inner containment members={contain['num_members']} "
            f"[{'pass' if contain['ok'] else 'FAIL'}]"
        )
    checks["ok"] = ok
    if args.out:
        write_json(Path(args.out), checks)
        print(f"wrote {args.out}")
    print("verification " + ("PASSED" if ok else "FAILED"))
    return 0 if ok else FAILURE


def _svg_path(points: np.ndarray, to_px) -> str:
    return " ".join(f"{to_px(p)[0]:.2f},{to_px(p)[1]:.2f}" for p in points)


def _render_svg(path: Path, box: Box, contours: list[np.ndarray],
                target_contours: list[np.ndarray], dataset: Dataset | None,
                oracle_points: np.ndarray | None = None):
    size, margin = 640.0, 40.0
    span_x = box.hi[0] - box.lo[0]
    span_y = box.hi[1] - box.lo[1]
    inner = size - 2 * margin

    def to_px(p):
        px = margin + (p[0] - box.lo[0]) / span_x * inner
        py = size - margin - (p[1] - box.lo[1]) / span_y * inner
        return px, py

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size:.0f}" '
        f'height="{size:.0f}" viewBox="0 0 {size:.0f} {size:.0f}">',
        f'<rect x="{margin}" y="{margin}" width="{inner}" height="{inner}" '
        'fill="white" stroke="black" stroke-width="1"/>',
    ]
    if oracle_points is not None:
        for p in oracle_points:
            px, py = to_px(p)
            parts.append(
                f'<circle cx="{px:.2f}" cy="{py:.2f}" r="1.2" fill="silver"/>'
            )
    for line in target_contours:
        parts.append(
            f'<polyline points="{_svg_path(line, to_px)}" fill="none" '
            'stroke="green" stroke-width="1.5" stroke-dasharray="6 4"/>'
        )
    for line in contours:
        parts.append(
            f'<polyline points="{_svg_path(line, to_px)}" fill="none" '
            'stroke="blue" stroke-width="2"/>'
        )
    if dataset is not None:
        for x, _ in dataset.points:
            px, py = to_px(x)
            parts.append(
                f'<circle cx="{px:.2f}" cy="{py:.2f}" r="3.5" fill="crimson"/>'
            )
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")


def cmd_render(args) -> int:
    config, config_dataset = load_config(Path(args.config))
    cert = load_certificate(Path(args.certificate))
    dataset = None
    if args.dataset is not None or config_dataset is not None:
        try:
            dataset = _resolve_dataset(args, config_dataset)
        except CliError:
            dataset = None
    prefix = Path(args.out_prefix)
    if cert.n == 1:
        intervals = level_set(cert, config.X, resolution=args.resolution)
        out = prefix.with_name(prefix.name + "_intervals.csv")
        lines = ["lo,hi"] + [f"{a!r},{b!r}" for a, b in intervals]
        out.write_text("\n".join(lines) + "\n")
        print(f"wrote {out} ({len(intervals)} interval(s))")
        for a, b in intervals:
            print(f"  [{a:.6f}, {b:.6f}]")
        return 0
    if cert.n != 2:
        # no contour geometry beyond the plane: emit a membership grid
        axes, mask = membership_grid(
            cert, config.X, resolution=min(args.resolution, 20)
        )
        out = prefix.with_name(prefix.name + "_grid.csv")
        header = ",".join(f"x{i + 1}" for i in range(cert.n)) + ",member"
        lines = [header]
        grids = np.meshgrid(*axes, indexing="ij")
        flat = [g.ravel() for g in grids]
        for row, member in zip(zip(*flat), mask.ravel()):
            coords = ",".join(repr(float(c)) for c in row)
            lines.append(f"{coords},{int(member)}")
        out.write_text("\n".join(lines) + "\n")
        print(f"wrote {out} ({int(mask.sum())} member point(s))")
        return 0
    contours = level_set(cert, config.X, resolution=min(args.resolution, 800))
    out_csv = prefix.with_name(prefix.name + "_contour.csv")
    lines = ["polyline,x1,x2"]
    for idx, line in enumerate(contours):
        for p in line:
            lines.append(f"{idx},{float(p[0])!r},{float(p[1])!r}")
    out_csv.write_text("\n".join(lines) + "\n")

    def target_margin(pts):
        vals = [g.evaluate_many(pts) for g in config.X_T.inequalities]
        return np.min(np.stack(vals, axis=0), axis=0) if vals else np.ones(len(pts))

    target_contours = marching_squares(target_margin, config.X, 0.0, 400)
    oracle_points = None
    if args.oracle is not None:
        try:
            oracle_points = np.loadtxt(args.oracle, delimiter=",", ndmin=2)
        except (OSError, ValueError) as exc:
            raise CliError(f"bad oracle points file {args.oracle}: {exc}") from None
        if oracle_points.shape[1] != 2:
            raise CliError("oracle points file needs two columns")
    out_svg = prefix.with_name(prefix.name + ".svg")
    _render_svg(out_svg, config.X, contours, target_contours, dataset,
                oracle_points)
    print(f"wrote {out_csv} ({len(contours)} polyline(s)) and {out_svg}")
    return 0


# ----------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roacert",
        description="Certified region-of-attraction approximation from "
        "Lipschitz data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_data = sub.add_parser("dataset", help="sample a built-in system")
    p_data.add_argument("--system", required=True, help="toy1d or ring2d")
    p_data.add_argument(
        "--points",
        help="explicit states: coordinates comma separated, points "
        "semicolon separated, e.g. '-1;0;1' or '0.1,0.2;0.3,0.4'",
    )
    p_data.add_argument("--n-samples", type=int, help="uniform random sample count")
    p_data.add_argument("--seed", type=int, help="RNG seed for --n-samples")
    p_data.add_argument("--out", required=True, help="output dataset JSON")
    p_data.set_defaults(func=cmd_dataset)

    p_solve = sub.add_parser("solve", help="solve one configuration")
    p_solve.add_argument("--config", required=True, help="JSON or TOML config")
    p_solve.add_argument("--dataset", help="dataset JSON (overrides config)")
    p_solve.add_argument("--out", required=True, help="output certificate JSON")
    p_solve.set_defaults(func=cmd_solve)

    p_verify = sub.add_parser("verify", help="check a certificate")
    p_verify.add_argument("--certificate", required=True)
    p_verify.add_argument("--config", required=True)
    p_verify.add_argument("--dataset", help="dataset JSON (overrides config)")
    p_verify.add_argument("--samples", type=int, default=10_000)
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.add_argument("--out", help="write the check report JSON here")
    p_verify.set_defaults(func=cmd_verify)

    p_render = sub.add_parser("render", help="export level-set geometry")
    p_render.add_argument("--certificate", required=True)
    p_render.add_argument("--config", required=True)
    p_render.add_argument("--dataset", help="overlay data points (n = 2)")
    p_render.add_argument(
        "--oracle",
        help="CSV of reference region points to overlay in the SVG (n = 2)",
    )
    p_render.add_argument("--resolution", type=int, default=2000)
    p_render.add_argument("--out-prefix", required=True)
    p_render.set_defaults(func=cmd_render)
    return parser


def _merge_dash_values(argv, flags=("--points",)):
    """Fold `--points -1,0,1` into `--points=-1,0,1`.

    argparse refuses option values that begin with a dash unless they are
    joined with `=`, which would make negative coordinates unusable in
    the documented form.
    """
    out = []
    skip = False
    for k, tok in enumerate(argv):
        if skip:
            skip = False
            continue
        nxt = argv[k + 1] if k + 1 < len(argv) else None
        if tok in flags and nxt is not None and nxt.startswith("-") \
                and not nxt.startswith("--"):
            out.append(f"{tok}={nxt}")
            skip = True
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    argv = _merge_dash_values(list(argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE_ERROR if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except Exception as exc:  # solver crashes and similar
        print(f"failure: {exc}", file=sys.stderr)
        return FAILURE


if __name__ == "__main__":
    sys.exit(main())
