"""Final acceptance gates for the package.

Each test prints exactly one PASS/FAIL line on the real terminal (past
pytest's capture) before asserting, so a full run always shows the ten
verdicts together. Numbers in the assertions are the frozen targets from
the design brief; oracle closed forms live in test_oracle.
"""
from __future__ import annotations

import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from roacert import (
    Box,
    Polynomial,
    ProblemConfig,
    SemialgebraicSet,
    SolveOptions,
    parse_polynomial,
    solve_roa,
    toy_dataset,
)
from roacert.cli import (
    config_from_dict,
    dataset_to_json_dict,
    load_certificate,
    write_json,
)
from roacert.compiler import (
    PolyExpr,
    QuadraticModuleSpec,
    SosProgram,
    membership_residual,
)
from roacert.oracle import (
    RING2D,
    TOY1D,
    best_case_roa_1d,
    dataset_from_system,
    true_roa,
)
from roacert.solver import solve
from roacert.verify import (
    containment_check,
    inner_containment_check,
    residual_report,
    sweep_data_position,
)
from conftest import WIDE_TARGET, outer_interval, toy_config

RING_BOX = Box((-0.8, -0.8), (0.8, 0.8))
DISK_TARGET = SemialgebraicSet(
    2, (parse_polynomial("0.0625 - x1^2 - x2^2", ["x1", "x2"]),)
)
HALF_DISK_TARGET = SemialgebraicSet(
    2,
    (
        parse_polynomial("0.0625 - x1^2 - x2^2", ["x1", "x2"]),
        parse_polynomial("x1 + x2", ["x1", "x2"]),
    ),
)

# planar certificates stashed by criteria 5 and 6 for the residual sweep
# of criterion 9
PLANAR_RUNS: dict[str, tuple[ProblemConfig, object, object]] = {}


def report(num: int, ok: bool, detail: str, capsys) -> str:
    line = f"criterion {num:2d}: {'PASS' if ok else 'FAIL'} | {detail}"
    with capsys.disabled():
        print(line, flush=True)
    return line


def test_criterion_01_toy_outer_regression(capsys):
    dataset = toy_dataset()
    config = toy_config(8)
    start = time.perf_counter()
    cert, result, _, _ = solve_roa(config, dataset)
    elapsed = time.perf_counter() - start
    lo, hi = outer_interval(cert)
    radius = max(abs(lo), hi)
    ok = (
        result.status == "optimal"
        and hi >= 0.408 - 3e-3
        and radius <= 0.55
        and elapsed < 10.0
    )
    line = report(
        1, ok,
        f"toy outer d8 {result.status}, interval [{lo:.5f}, {hi:.5f}], "
        f"{elapsed:.2f} s", capsys,
    )
    assert ok, line


def test_criterion_02_oracle_cross_check(capsys):
    config = toy_config(8)
    best = best_case_roa_1d(toy_dataset(), config)
    best_target = 0.5 - 0.25 / math.e
    best_ok = abs(best[1] - best_target) <= 2e-3

    true_interval = true_roa(TOY1D, config)
    true_ok = abs(true_interval[1] - 0.34) <= 2e-3
    closed_form = 1.0 / math.sqrt(4.0 + 12.0 / math.e)
    assert abs(true_interval[1] - closed_form) <= 2e-3

    ok = best_ok and true_ok
    line = report(
        2, ok,
        f"best-case end {best[1]:.6f} (target {best_target:.6f}) "
        f"{'ok' if best_ok else 'off'}; true end {true_interval[1]:.6f} "
        f"vs 0.34 {'ok' if true_ok else 'off by %.4f' % abs(true_interval[1] - 0.34)}",
        capsys,
    )
    assert ok, line


def test_criterion_03_data_monotonicity(capsys, toy_solutions):
    _, _, cert_d1, _, _, _ = toy_solutions["d1-8"]
    _, _, cert_d2, _, _, _ = toy_solutions["d2-8"]
    _, r1 = outer_interval(cert_d1)
    _, r2 = outer_interval(cert_d2)
    best_d2 = best_case_roa_1d(toy_dataset([0.3]), toy_config(8))
    ok = r2 <= r1 + 1e-3 and best_d2[1] < 0.408
    line = report(
        3, ok,
        f"r(D2)={r2:.5f} <= r(D1)={r1:.5f} + 1e-3; "
        f"best-case(D2)={best_d2[1]:.5f} < 0.408", capsys,
    )
    assert ok, line


def test_criterion_04_degree_monotonicity(capsys, toy_solutions):
    objectives = [
        toy_solutions[key][2].objective for key in ("d1-4", "d1-6", "d1-8")
    ]
    ok = all(b <= a + 1e-6 for a, b in zip(objectives, objectives[1:]))
    line = report(
        4, ok,
        "objectives d4/d6/d8 = " + "/".join(f"{v:.6f}" for v in objectives),
        capsys,
    )
    assert ok, line


def test_criterion_05_planar_run(capsys, tmp_path):
    dataset = dataset_from_system(RING2D, n_samples=50, seed=7)
    data_path = tmp_path / "ring50.json"
    write_json(data_path, dataset_to_json_dict(dataset))
    start = time.perf_counter()
    cert = None
    config_payload = None
    degree_used = None
    failures = []
    # degree 10 first, degree 8 as the permitted fallback; each attempt is
    # a separate process so that a solve the kernel kills for memory
    # cannot take the test session down with it
    attempts = (
        (10, {"feasibility_tol": 1e-6, "max_iterations": 500,
              "time_limit": 120.0}, 300),
        (8, {"feasibility_tol": 1e-6, "max_iterations": 500}, 870),
    )
    for degree, solver_opts, cap in attempts:
        payload = {
            "n": 2, "mode": "outer", "T": 1.0, "degree": degree,
            "X": {"lo": [-0.8, -0.8], "hi": [0.8, 0.8]},
            "X_T": {"inequalities": ["0.0625 - x1^2 - x2^2"]},
            "dataset": str(data_path),
            "solver": solver_opts,
        }
        config_path = tmp_path / f"disk_d{degree}.json"
        config_path.write_text(json.dumps(payload))
        cert_path = tmp_path / f"disk_d{degree}_cert.json"
        try:
            proc = subprocess.run(
                [sys.executable, "-m", "roacert", "solve",
                 "--config", str(config_path), "--out", str(cert_path)],
                capture_output=True, text=True, timeout=cap,
            )
        except subprocess.TimeoutExpired:
            failures.append(f"d{degree} hit the {cap}s wall-clock cap")
            continue
        if proc.returncode == 0 and cert_path.exists():
            cert = load_certificate(cert_path)
            config_payload = payload
            degree_used = degree
            break
        if proc.returncode < 0 or proc.returncode == 137:
            failures.append(f"d{degree} killed (out of memory)")
        elif cert_path.exists():
            status = json.loads(cert_path.read_text())["status"]
            failures.append(f"d{degree} status {status}")
        else:
            failures.append(f"d{degree} exit {proc.returncode}")
    elapsed = time.perf_counter() - start

    if cert is None:
        line = report(
            5, False,
            "ring2d N=50: " + "; ".join(failures) + f", {elapsed:.0f} s",
            capsys,
        )
        assert False, line

    PLANAR_RUNS["disk"] = (config_from_dict(config_payload)[0], dataset, cert)
    axes = np.linspace(-0.8, 0.8, 100)
    mesh = np.stack(np.meshgrid(axes, axes, indexing="ij"), axis=-1).reshape(-1, 2)
    disk_points = mesh[np.linalg.norm(mesh, axis=1) <= 0.33]
    w_min = float(cert.w.evaluate_many(disk_points).min())
    ok = (
        cert.status == "optimal"
        and w_min >= 1.0 - 1e-3
        and elapsed < 900.0
    )
    line = report(
        5, ok,
        f"ring2d N=50 degree {degree_used} {cert.status}, "
        f"min w on r=0.33 disk = {w_min:.4f} over {disk_points.shape[0]} "
        f"points, {elapsed:.0f} s", capsys,
    )
    assert ok, line


def test_criterion_06_non_symmetric_target(capsys):
    dataset = dataset_from_system(RING2D, n_samples=50, seed=7)
    config = ProblemConfig(
        n=2, T=1.0, degree=6, X=RING_BOX, X_T=HALF_DISK_TARGET,
        solver=SolveOptions(max_iterations=300),
    )
    cert, result, _, _ = solve_roa(config, dataset)
    PLANAR_RUNS["halfdisk"] = (config, dataset, cert)

    axes, mask = true_roa(RING2D, config, resolution=100)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 2)
    members = mesh[mask.ravel()]
    contain = containment_check(cert, members)
    ok = result.status == "optimal" and contain["ok"]
    line = report(
        6, ok,
        f"half-disk target d6 {result.status}, oracle grid members="
        f"{members.shape[0]}, min w={contain['min_w']:.4f}", capsys,
    )
    assert ok, line


def test_criterion_07_sweep_harness(capsys, toy_solutions):
    _, _, cert_d1, _, _, _ = toy_solutions["d1-8"]
    _, r1 = outer_interval(cert_d1)
    rows = sweep_data_position((0.1, 0.2, 0.3, 0.4, 0.5), toy_config(8))
    endpoints = [row["endpoint"] for row in rows]
    ok = all(e >= 0.34 - 2e-3 for e in endpoints) and all(
        e <= r1 + 1e-3 for e in endpoints
    )
    line = report(
        7, ok,
        "sweep endpoints " + "/".join(f"{e:.4f}" for e in endpoints)
        + f" within [0.338, {r1 + 1e-3:.4f}]", capsys,
    )
    assert ok, line


def _random_module_member(rng: np.random.Generator):
    """A polynomial built to lie in a random truncated quadratic module."""
    arity = int(rng.integers(1, 3))
    degree = int(rng.choice([2, 4]))
    gens = []
    for i in range(arity):
        exps = tuple(2 if k == i else 0 for k in range(arity))
        gens.append(Polynomial(arity, {(0,) * arity: 1.0, exps: -1.0}))
    spec = QuadraticModuleSpec(arity, tuple(gens), (), degree)

    def random_gram(side):
        a = rng.normal(size=(side, side)) / side
        return a.T @ a

    from roacert.poly import monomial_basis

    sigma_basis = monomial_basis(arity, degree // 2)
    member = Polynomial(arity, {})
    from roacert.compiler import gram_polynomial, multiplier_degree

    member = member + gram_polynomial(sigma_basis, random_gram(len(sigma_basis)))
    for g in gens:
        k = multiplier_degree(degree, g.degree)
        basis = monomial_basis(arity, k)
        member = member + gram_polynomial(basis, random_gram(len(basis))) * g
    return member, spec


def test_criterion_08_compiler_soundness(capsys):
    rng = np.random.default_rng(0)
    worst_residual = 0.0
    for _ in range(100):
        member, spec = _random_module_member(rng)
        program = SosProgram()
        constraint = program.add_membership_constraint(
            PolyExpr.from_constant(member), spec, label="acceptance"
        )
        problem = program.finalize()
        result = solve(problem, SolveOptions())
        assert result.status == "optimal"
        residual = membership_residual(
            constraint, problem.blocks, result.free_values, result.block_values
        )
        worst_residual = max(worst_residual, residual.max_abs_coeff())
    identities_ok = worst_residual <= 1e-6

    interval = Polynomial(1, {(0,): 1.0, (2,): -1.0})
    agreements = 0
    checked = 0
    xs = np.linspace(-1.0, 1.0, 2001)[:, None]
    while checked < 50:
        coeffs = rng.uniform(-1.0, 1.0, size=5)
        quartic = Polynomial(1, {(k,): float(c) for k, c in enumerate(coeffs)})
        margin = float(quartic.evaluate_many(xs).min())
        if abs(margin) <= 1e-3:
            continue
        checked += 1
        program = SosProgram()
        program.add_membership_constraint(
            PolyExpr.from_constant(quartic),
            QuadraticModuleSpec(1, (interval,), (), 4),
            label="quartic",
        )
        result = solve(program.finalize(), SolveOptions())
        sos_says = result.status == "optimal"
        if sos_says == (margin > 0.0):
            agreements += 1
    agreement_ok = agreements == 50

    ok = identities_ok and agreement_ok
    line = report(
        8, ok,
        f"100 identities, worst residual {worst_residual:.2e}; "
        f"quartic agreement {agreements}/50", capsys,
    )
    assert ok, line


def test_criterion_09_certificate_residuals(capsys, toy_solutions):
    worst_label, worst_ratio = "", 0.0
    count = 0
    runs = [
        (key, cfg, ds, cert)
        for key, (cfg, ds, cert, _, _, _) in toy_solutions.items()
    ] + [
        (key, cfg, ds, cert)
        for key, (cfg, ds, cert) in PLANAR_RUNS.items()
    ]
    for key, config, dataset, cert in runs:
        rep = residual_report(cert, config, dataset, num_samples=10_000)
        count += 1
        for entry in rep.entries:
            ratio = entry.max_violation / (1e-6 * (1.0 + entry.scale))
            if ratio > worst_ratio:
                worst_label, worst_ratio = f"{key}:{entry.name}", ratio
    ok = worst_ratio <= 1.0 and count >= 6
    line = report(
        9, ok,
        f"{count} certificates, worst residual at {worst_ratio:.3f} of "
        f"budget ({worst_label or 'none'})", capsys,
    )
    assert ok, line


def test_criterion_10_inner_mode(capsys, toy_solutions):
    inner_cfg, dataset, inner_cert, inner_result, _, _ = (
        toy_solutions["wide-inner-8"]
    )
    _, _, outer_cert, _, _, _ = toy_solutions["wide-outer-8"]

    xs = np.arange(-1.0, 1.0 + 1e-9, 1e-3)[:, None]
    inner_vals = inner_cert.w.evaluate_many(xs)
    outer_vals = outer_cert.w.evaluate_many(xs)
    members = inner_vals <= 1.0
    nested = bool((outer_vals[members] >= 1.0 - 1e-9).all())
    contain = inner_containment_check(inner_cert, dataset, inner_cfg)
    ok = (
        inner_result.status == "optimal"
        and int(members.sum()) > 0
        and nested
        and contain["ok"]
    )
    line = report(
        10, ok,
        f"inner d8 {inner_result.status}, {int(members.sum())} member grid "
        f"points, nested in outer: {nested}, worst-case containment "
        f"{'ok' if contain['ok'] else 'FAIL'}", capsys,
    )
    assert ok, line
