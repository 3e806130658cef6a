"""Conic solver adapter with a normalized status vocabulary.

The in-process backend hands the standard form to clarabel (interior
point, native PSD-triangle cones whose scaling matches this package's
svec convention).  An offline file-exchange backend serializes the
problem and picks up an externally produced result, for running the same
programs through other solvers.  All post-solve quality numbers (primal
residual, minimum block eigenvalue, objective) are recomputed here from
the returned point rather than trusted from solver internals.
"""
from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .compiler import ConicProblem, mat_from_svec, svec_dim

EXCHANGE_DIR_ENV = "ROACERT_EXCHANGE_DIR"

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_UNBOUNDED = "unbounded"
STATUS_ITERATION_LIMIT = "iteration_limit"
STATUS_NUMERICAL_TROUBLE = "numerical_trouble"

_CLARABEL_STATUS = {
    "Solved": STATUS_OPTIMAL,
    "PrimalInfeasible": STATUS_INFEASIBLE,
    "DualInfeasible": STATUS_UNBOUNDED,
    "MaxIterations": STATUS_ITERATION_LIMIT,
    "MaxTime": STATUS_ITERATION_LIMIT,
}
# anything else (AlmostSolved, NumericalError, InsufficientProgress, ...)
# maps to numerical_trouble rather than being dressed up as success


@dataclass(frozen=True)
class SolveOptions:
    feasibility_tol: float = 1e-8
    max_iterations: int = 200
    time_limit: float = 0.0  # seconds; 0 disables the limit
    verbose: bool = False
    backend: str = "clarabel"
    exchange_dir: str | None = None  # falls back to ROACERT_EXCHANGE_DIR


@dataclass
class SolveResult:
    """Solution with recomputed certificates of numerical quality."""

    status: str
    objective: float
    free_values: np.ndarray
    block_values: list[np.ndarray]
    primal_residual: float
    min_block_eigenvalue: float
    iterations: int
    solve_seconds: float

    def to_json(self) -> str:
        payload = {
            "format": "roacert-result-v1",
            "status": self.status,
            "objective": self.objective,
            "free_values": self.free_values.tolist(),
            "block_values": [b.tolist() for b in self.block_values],
            "primal_residual": self.primal_residual,
            "min_block_eigenvalue": self.min_block_eigenvalue,
            "iterations": self.iterations,
            "solve_seconds": self.solve_seconds,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SolveResult":
        payload = json.loads(text)
        if payload.get("format") != "roacert-result-v1":
            raise ValueError("unrecognized solve result format")
        return cls(
            status=str(payload["status"]),
            objective=float(payload["objective"]),
            free_values=np.array(payload["free_values"], dtype=float),
            block_values=[np.array(b, dtype=float) for b in payload["block_values"]],
            primal_residual=float(payload["primal_residual"]),
            min_block_eigenvalue=float(payload["min_block_eigenvalue"]),
            iterations=int(payload["iterations"]),
            solve_seconds=float(payload["solve_seconds"]),
        )


class SolverError(RuntimeError):
    pass


def _quality(problem: ConicProblem, x: np.ndarray) -> tuple[float, float]:
    if problem.num_rows:
        residual = float(np.max(np.abs(problem.a_eq @ x - problem.rhs)))
    else:
        residual = 0.0
    min_eig = np.inf
    offset = problem.num_free_vars
    for dim in problem.psd_block_dims:
        mat = mat_from_svec(x[offset: offset + svec_dim(dim)], dim)
        min_eig = min(min_eig, float(np.linalg.eigvalsh(mat)[0]))
        offset += svec_dim(dim)
    if not problem.psd_block_dims:
        min_eig = 0.0
    return residual, min_eig


def _split_blocks(problem: ConicProblem, x: np.ndarray) -> list[np.ndarray]:
    out = []
    offset = problem.num_free_vars
    for dim in problem.psd_block_dims:
        out.append(mat_from_svec(x[offset: offset + svec_dim(dim)], dim))
        offset += svec_dim(dim)
    return out


def _solve_clarabel(problem: ConicProblem, options: SolveOptions) -> SolveResult:
    import clarabel

    total = problem.total_cols
    svec_total = total - problem.num_free_vars
    # conic slack s = E z for the PSD part, equalities in the zero cone
    selector = sp.hstack(
        [
            sp.csc_matrix((svec_total, problem.num_free_vars)),
            sp.identity(svec_total, format="csc"),
        ],
        format="csc",
    )
    a_full = sp.vstack([problem.a_eq, -selector], format="csc")
    b_full = np.concatenate([problem.rhs, np.zeros(svec_total)])
    cones = [clarabel.ZeroConeT(problem.num_rows)]
    cones.extend(clarabel.PSDTriangleConeT(d) for d in problem.psd_block_dims)
    settings = clarabel.DefaultSettings()
    settings.verbose = options.verbose
    settings.max_iter = options.max_iterations
    settings.tol_feas = options.feasibility_tol
    settings.max_threads = 1  # deterministic runs
    if options.time_limit > 0:
        settings.time_limit = options.time_limit
    p_mat = sp.csc_matrix((total, total))
    start = time.perf_counter()
    solver = clarabel.DefaultSolver(
        p_mat, problem.full_objective(), a_full, b_full, cones, settings
    )
    solution = solver.solve()
    elapsed = time.perf_counter() - start
    status = _CLARABEL_STATUS.get(str(solution.status), STATUS_NUMERICAL_TROUBLE)
    x = np.asarray(solution.x, dtype=float)
    if x.shape[0] != total:  # solver bailed before producing a point
        x = np.zeros(total)
    residual, min_eig = _quality(problem, x)
    return SolveResult(
        status=status,
        objective=float(problem.full_objective() @ x),
        free_values=x[: problem.num_free_vars].copy(),
        block_values=_split_blocks(problem, x),
        primal_residual=residual,
        min_block_eigenvalue=min_eig,
        iterations=int(solution.iterations),
        solve_seconds=elapsed,
    )


def _solve_exchange(problem: ConicProblem, options: SolveOptions) -> SolveResult:
    directory = options.exchange_dir or os.environ.get(EXCHANGE_DIR_ENV)
    if not directory:
        raise SolverError(
            f"file-exchange backend needs exchange_dir or ${EXCHANGE_DIR_ENV}"
        )
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    problem_path = directory / "problem.json"
    result_path = directory / "result.json"
    problem_path.write_text(problem.to_json())
    if not result_path.exists():
        raise SolverError(
            f"wrote {problem_path}; place the externally solved result at "
            f"{result_path} and rerun"
        )
    result = SolveResult.from_json(result_path.read_text())
    x = np.concatenate(
        [result.free_values]
        + [np.zeros(0)]
        + [  # re-vectorize the blocks so quality checks use our convention
            _svec_all(result.block_values)
        ]
    )
    residual, min_eig = _quality(problem, x)
    result.primal_residual = residual
    result.min_block_eigenvalue = min_eig
    result.objective = float(problem.full_objective() @ x)
    return result


def _svec_all(blocks) -> np.ndarray:
    from .compiler import svec_from_mat

    if not blocks:
        return np.zeros(0)
    return np.concatenate([svec_from_mat(np.asarray(b, dtype=float)) for b in blocks])


def solve(problem: ConicProblem, options: SolveOptions | None = None) -> SolveResult:
    """Solve a finalized conic problem with the selected backend.

    Status vocabulary: optimal, infeasible, unbounded, iteration_limit,
    numerical_trouble.  The returned residuals are recomputed from the
    solution point against the problem data.
    """
    options = options or SolveOptions()
    if options.backend == "clarabel":
        return _solve_clarabel(problem, options)
    if options.backend == "exchange":
        return _solve_exchange(problem, options)
    raise SolverError(f"unknown backend {options.backend!r}")
