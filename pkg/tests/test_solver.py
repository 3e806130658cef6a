"""Solver backend contract: statuses, quality metrics, and file exchange."""
from __future__ import annotations

import numpy as np
import pytest

from roacert import (
    Box,
    QuadraticModuleSpec,
    SosProgram,
    box_moments,
    solve,
)
from roacert.compiler import PolyExpr, moment_objective
from roacert.poly import Polynomial
from roacert.solver import SolveOptions, SolveResult, SolverError


def membership_problem(poly, gens=(), degree=None):
    program = SosProgram()
    if degree is None:
        degree = poly.degree + poly.degree % 2
    spec = QuadraticModuleSpec(poly.arity, tuple(gens), (), max(degree, 2))
    program.add_membership_constraint(PolyExpr.from_constant(poly), spec)
    return program.finalize()


def small_roa_style_problem(degree=4):
    """Minimize box mass of w subject to w being 1 on a subinterval."""
    program = SosProgram()
    w = program.new_decision_poly("w", 1, degree)
    box_gen = Polynomial(1, {(0,): 1.0, (2,): -1.0})
    target_gen = Polynomial(1, {(0,): 0.0625, (2,): -1.0})
    program.add_membership_constraint(
        w.as_expr() + (-1.0), QuadraticModuleSpec(1, (target_gen,), (), degree)
    )
    program.add_membership_constraint(
        w.as_expr(), QuadraticModuleSpec(1, (box_gen,), (), degree)
    )
    from roacert import monomial_basis

    moments = box_moments(Box((-1.0,), (1.0,)), monomial_basis(1, degree))
    return program.finalize(moment_objective(w, moments))


class TestStatuses:
    def test_optimal(self):
        p = Polynomial(1, {(2,): 1.0, (1,): 2.0, (0,): 1.0})
        assert solve(membership_problem(p)).status == "optimal"

    def test_infeasible(self):
        p = Polynomial(1, {(1,): 1.0})
        assert solve(membership_problem(p)).status == "infeasible"

    def test_unbounded(self):
        program = SosProgram()
        w = program.new_decision_poly("w", 1, 0)
        problem = program.finalize({w.var_ids[0]: 1.0})
        assert solve(problem).status == "unbounded"

    def test_iteration_limit(self):
        problem = small_roa_style_problem()
        result = solve(problem, SolveOptions(max_iterations=1))
        assert result.status == "iteration_limit"

    def test_unknown_backend(self):
        problem = small_roa_style_problem()
        with pytest.raises(SolverError):
            solve(problem, SolveOptions(backend="nope"))


class TestQuality:
    def test_positive_objective_on_covering_problem(self):
        result = solve(small_roa_style_problem())
        assert result.status == "optimal"
        assert result.objective > 0

    def test_residual_and_eigenvalue_bounds(self):
        problem = small_roa_style_problem(degree=6)
        result = solve(problem)
        assert result.status == "optimal"
        rhs_scale = float(np.abs(problem.rhs).max()) if problem.rhs.size else 0.0
        assert result.primal_residual <= 1e-6 * (1 + rhs_scale)
        norms = [float(np.linalg.norm(b)) for b in result.block_values]
        assert result.min_block_eigenvalue >= -1e-7 * (1 + max(norms))

    def test_block_shapes_match_problem(self):
        problem = small_roa_style_problem()
        result = solve(problem)
        assert [b.shape[0] for b in result.block_values] == problem.psd_block_dims
        for b in result.block_values:
            assert np.allclose(b, b.T, atol=1e-12)

    def test_deterministic_repeat(self):
        problem = small_roa_style_problem(degree=6)
        first = solve(problem)
        second = solve(problem)
        assert first.objective == second.objective
        assert np.array_equal(first.free_values, second.free_values)
        for a, b in zip(first.block_values, second.block_values):
            assert np.array_equal(a, b)


class TestResultSerialization:
    def test_round_trip(self):
        result = solve(small_roa_style_problem())
        clone = SolveResult.from_json(result.to_json())
        assert clone.status == result.status
        assert clone.objective == result.objective
        assert np.array_equal(clone.free_values, result.free_values)
        for a, b in zip(clone.block_values, result.block_values):
            assert np.array_equal(a, b)


class TestFileExchange:
    def test_missing_result_reports_instructions(self, tmp_path):
        problem = small_roa_style_problem()
        options = SolveOptions(backend="exchange", exchange_dir=str(tmp_path))
        with pytest.raises(SolverError, match="result.json"):
            solve(problem, options)
        assert (tmp_path / "problem.json").exists()

    def test_round_trip_through_files(self, tmp_path):
        problem = small_roa_style_problem()
        native = solve(problem)

        # stand in for the external solver: answer the posted problem
        options = SolveOptions(backend="exchange", exchange_dir=str(tmp_path))
        with pytest.raises(SolverError):
            solve(problem, options)
        from roacert import ConicProblem

        posted = ConicProblem.from_json((tmp_path / "problem.json").read_text())
        answer = solve(posted)
        (tmp_path / "result.json").write_text(answer.to_json())

        result = solve(problem, options)
        assert result.status == "optimal"
        assert result.objective == pytest.approx(native.objective, abs=1e-9)
        rhs_scale = float(np.abs(problem.rhs).max())
        assert result.primal_residual <= 1e-6 * (1 + rhs_scale)

    def test_environment_variable_selects_directory(self, tmp_path, monkeypatch):
        problem = small_roa_style_problem()
        monkeypatch.setenv("ROACERT_EXCHANGE_DIR", str(tmp_path))
        with pytest.raises(SolverError):
            solve(problem, SolveOptions(backend="exchange"))
        assert (tmp_path / "problem.json").exists()
