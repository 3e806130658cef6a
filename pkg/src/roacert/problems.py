"""Finite-horizon region-of-attraction programs over data-consistent fields.

The outer program searches for a pair (v, w): v(t, x) decreasing along
every velocity the data allows, nonnegative on the target at the final
time, with w dominating v(0, .) + 1 and nonnegative on the state box.
Minimizing the integral of w over the box then squeezes {w >= 1} onto
the set of states that some consistent field can steer into the target;
by construction {w >= 1} contains every such state, giving a certified
outer approximation.

The inner (worst-case) variant keeps the same decrease structure but
anchors v at the final time on the complement of the target inside the
box, one membership per target generator, and additionally forces v >= 0
on the lateral boundary [0, T] x (box faces).  Then {w <= 1} collects
only states that every consistent field steers into the target while
remaining in the box.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .compiler import (
    ConicProblem,
    DecisionPoly,
    PolyExpr,
    QuadraticModuleSpec,
    SosProgram,
    moment_objective,
)
from .geometry import Dataset, SemialgebraicSet, box_faces, gamma_polys, validate_dataset
from .poly import Box, Polynomial, box_moments, lie_derivative, monomial_basis
from .solver import SolveOptions, SolveResult

MODE_OUTER = "outer"
MODE_INNER = "inner"


@dataclass(frozen=True)
class ProblemConfig:
    """Everything that pins down one approximation instance."""

    n: int
    T: float
    degree: int
    X: Box
    X_T: SemialgebraicSet
    mode: str = MODE_OUTER
    solver: SolveOptions = field(default_factory=SolveOptions)
    y_ball_radius: float | None = None
    normalize_time: bool = False
    moment_vector: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("state dimension must be positive")
        if not (self.T > 0 and np.isfinite(self.T)):
            raise ValueError("horizon must be positive and finite")
        if self.degree < 2 or self.degree % 2 != 0:
            raise ValueError("degree must be an even integer >= 2")
        if self.X.arity != self.n or self.X_T.arity != self.n:
            raise ValueError("state box and target set must have arity n")
        if self.mode not in (MODE_OUTER, MODE_INNER):
            raise ValueError(f"mode must be outer or inner, got {self.mode!r}")
        if self.y_ball_radius is not None and self.y_ball_radius <= 0:
            raise ValueError("y_ball_radius must be positive when given")
        if self.moment_vector is not None:
            object.__setattr__(self, "moment_vector", tuple(float(v) for v in self.moment_vector))


@dataclass(frozen=True)
class ProblemHandles:
    """Decision-polynomial handles needed to read a solution back."""

    v: DecisionPoly
    w: DecisionPoly
    horizon: float  # horizon actually used in the build (1.0 if normalized)


def _effective(config: ProblemConfig, dataset: Dataset) -> tuple[float, Dataset]:
    """Optionally rescale time to [0, 1] by scaling velocities and M by T."""
    if not config.normalize_time or config.T == 1.0:
        return config.T, dataset
    t = config.T
    return 1.0, Dataset(n=dataset.n, M=dataset.M * t, xs=dataset.xs.copy(),
                        ys=dataset.ys * t)


def _moments(config: ProblemConfig) -> np.ndarray:
    basis = monomial_basis(config.n, config.degree)
    if config.moment_vector is not None:
        vec = np.asarray(config.moment_vector, dtype=float)
        if len(vec) != len(basis):
            raise ValueError(
                f"moment vector needs {len(basis)} entries, got {len(vec)}"
            )
        return vec
    return box_moments(config.X, basis)


def _check_dataset(config: ProblemConfig, dataset: Dataset):
    if dataset.n != config.n:
        raise ValueError("dataset dimension does not match configuration")
    report = validate_dataset(dataset)
    if not report.consistent:
        raise ValueError(
            f"dataset violates the Lipschitz bound (pair {report.worst_pair}, "
            f"ratio {report.worst_ratio:.6g})"
        )


def _flow_constraint(program: SosProgram, config: ProblemConfig,
                     dataset: Dataset, v: DecisionPoly, horizon: float):
    """-(dv/dt + y . grad_x v) in Q_d over time x box x velocity graph."""
    n = config.n
    txy = 1 + 2 * n
    t_var = Polynomial.variable(txy, 0)
    gens: list[Polynomial] = [(horizon - t_var) * t_var]
    state_map = list(range(1, n + 1))
    for g in SemialgebraicSet.from_box(config.X).inequalities:
        gens.append(g.embed(txy, state_map))
    graph_map = state_map + list(range(n + 1, 2 * n + 1))
    for g in gamma_polys(dataset):
        gens.append(g.embed(txy, graph_map))
    if config.y_ball_radius is not None:
        ball = Polynomial.constant(txy, config.y_ball_radius**2)
        for i in range(n):
            ball = ball - Polynomial.variable(txy, 1 + n + i) ** 2
        gens.append(ball)
    flow = -v.as_expr().map_polys(lambda p: lie_derivative(p, n), txy)
    program.add_membership_constraint(
        flow,
        QuadraticModuleSpec(txy, tuple(gens), (), config.degree),
        "flow",
    )


def _shared_constraints(program: SosProgram, config: ProblemConfig,
                        v: DecisionPoly, w: DecisionPoly):
    n = config.n
    box_set = SemialgebraicSet.from_box(config.X)
    v0 = v.as_expr().map_polys(lambda p: p.eval_partial({0: 0.0}), n)
    program.add_membership_constraint(
        w.as_expr() - v0 - 1.0,
        QuadraticModuleSpec(n, box_set.inequalities, (), config.degree),
        "initial",
    )
    program.add_membership_constraint(
        w.as_expr(),
        QuadraticModuleSpec(n, box_set.inequalities, (), config.degree),
        "positivity",
    )


def build_outer(config: ProblemConfig, dataset: Dataset
                ) -> tuple[ConicProblem, ProblemHandles]:
    """Assemble the outer-approximation program (minimize integral of w)."""
    if config.mode != MODE_OUTER:
        raise ValueError("config.mode must be outer")
    _check_dataset(config, dataset)
    horizon, dataset = _effective(config, dataset)
    n, d = config.n, config.degree
    program = SosProgram()
    v = program.new_decision_poly("v", 1 + n, d)
    w = program.new_decision_poly("w", n, d)
    _flow_constraint(program, config, dataset, v, horizon)
    _shared_constraints(program, config, v, w)
    v_final = v.as_expr().map_polys(lambda p: p.eval_partial({0: horizon}), n)
    program.add_membership_constraint(
        v_final,
        QuadraticModuleSpec(n, config.X_T.inequalities, config.X_T.equalities, d),
        "terminal",
    )
    problem = program.finalize(moment_objective(w, _moments(config)))
    return problem, ProblemHandles(v=v, w=w, horizon=horizon)


def build_inner(config: ProblemConfig, dataset: Dataset
                ) -> tuple[ConicProblem, ProblemHandles]:
    """Assemble the worst-case inner-approximation program.

    Final-time memberships run over each complement branch
    {x in box : g_j(x) <= 0} of the target, and v is pinned nonnegative
    on the lateral boundary, so escaping or target-missing behavior under
    ANY consistent field forces w >= 1 at the starting state.
    """
    if config.mode != MODE_INNER:
        raise ValueError("config.mode must be inner")
    if config.X_T.equalities:
        raise ValueError(
            "inner mode needs an inequality-only target description"
        )
    _check_dataset(config, dataset)
    horizon, dataset = _effective(config, dataset)
    n, d = config.n, config.degree
    program = SosProgram()
    v = program.new_decision_poly("v", 1 + n, d)
    w = program.new_decision_poly("w", n, d)
    _flow_constraint(program, config, dataset, v, horizon)
    _shared_constraints(program, config, v, w)

    box_set = SemialgebraicSet.from_box(config.X)
    v_final = v.as_expr().map_polys(lambda p: p.eval_partial({0: horizon}), n)
    for j, g in enumerate(config.X_T.inequalities):
        gens = box_set.inequalities + ((-1.0) * g,)
        program.add_membership_constraint(
            v_final,
            QuadraticModuleSpec(n, gens, (), d),
            f"terminal:branch{j}",
        )

    tx = 1 + n
    t_var = Polynomial.variable(tx, 0)
    time_gen = (horizon - t_var) * t_var
    state_map = list(range(1, n + 1))
    v_expr = v.as_expr()
    for k, face in enumerate(box_faces(config.X)):
        gens = (time_gen,) + tuple(g.embed(tx, state_map) for g in face.inequalities)
        eqs = tuple(h.embed(tx, state_map) for h in face.equalities)
        program.add_membership_constraint(
            v_expr,
            QuadraticModuleSpec(tx, gens, eqs, d),
            f"boundary:face{k}",
        )
    problem = program.finalize(moment_objective(w, _moments(config)))
    return problem, ProblemHandles(v=v, w=w, horizon=horizon)


def build(config: ProblemConfig, dataset: Dataset
          ) -> tuple[ConicProblem, ProblemHandles]:
    if config.mode == MODE_OUTER:
        return build_outer(config, dataset)
    return build_inner(config, dataset)


# ----------------------------------------------------------------------
# certificates

@dataclass(frozen=True)
class Certificate:
    """Solved (v, w) pair with the context needed to interpret it.

    v has arity 1 + n over (t, x), w arity n; when the problem was built
    with normalize_time the time variable of v runs over [0, 1] = t / T.
    """

    mode: str
    n: int
    degree: int
    objective: float
    status: str
    v: Polynomial
    w: Polynomial
    timings: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        # timings stay out of the file so reruns are byte identical
        return {
            "mode": self.mode,
            "n": self.n,
            "degree": self.degree,
            "objective": self.objective,
            "status": self.status,
            "v": list(self.v.coefficient_vector(monomial_basis(1 + self.n, self.degree))),
            "w": list(self.w.coefficient_vector(monomial_basis(self.n, self.degree))),
        }

    @classmethod
    def from_json_dict(cls, payload: dict) -> "Certificate":
        n = int(payload["n"])
        degree = int(payload["degree"])
        v_basis = monomial_basis(1 + n, degree)
        w_basis = monomial_basis(n, degree)
        v_coeffs = payload["v"]
        w_coeffs = payload["w"]
        if len(v_coeffs) != len(v_basis) or len(w_coeffs) != len(w_basis):
            raise ValueError("coefficient vector length does not match degree")
        v = Polynomial(1 + n, dict(zip(v_basis, map(float, v_coeffs))))
        w = Polynomial(n, dict(zip(w_basis, map(float, w_coeffs))))
        return cls(
            mode=str(payload["mode"]),
            n=n,
            degree=degree,
            objective=float(payload["objective"]),
            status=str(payload["status"]),
            v=v,
            w=w,
        )


def extract_certificate(result: SolveResult, handles: ProblemHandles,
                        config: ProblemConfig,
                        build_seconds: float = 0.0) -> Certificate:
    """Read (v, w) out of a solve and recompute the objective from moments."""
    v = handles.v.value(result.free_values)
    w = handles.w.value(result.free_values)
    moments = _moments(config)
    w_vec = w.coefficient_vector(monomial_basis(config.n, config.degree))
    objective = float(moments @ w_vec)
    return Certificate(
        mode=config.mode,
        n=config.n,
        degree=config.degree,
        objective=objective,
        status=result.status,
        v=v,
        w=w,
        timings={
            "build_seconds": build_seconds,
            "solve_seconds": result.solve_seconds,
        },
    )


def solve_roa(config: ProblemConfig, dataset: Dataset,
              options: SolveOptions | None = None
              ) -> tuple[Certificate, SolveResult, ConicProblem, ProblemHandles]:
    """Build, solve and extract in one call."""
    import time as _time

    from .solver import solve as _solve

    start = _time.perf_counter()
    problem, handles = build(config, dataset)
    build_seconds = _time.perf_counter() - start
    result = _solve(problem, options or config.solver)
    cert = extract_certificate(result, handles, config, build_seconds)
    return cert, result, problem, handles


# ----------------------------------------------------------------------
# level sets

def _certified_side(certificate: Certificate, values: np.ndarray) -> np.ndarray:
    """Boolean mask of the approximation region on an array of w values."""
    if certificate.mode == MODE_OUTER:
        return values >= 1.0
    return values <= 1.0


def membership_grid(certificate: Certificate, box: Box, resolution: int = 200
                    ) -> tuple[list[np.ndarray], np.ndarray]:
    """Per-axis grids plus the mask of the certified region."""
    n = certificate.n
    axes = [np.linspace(box.lo[i], box.hi[i], resolution) for i in range(n)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    vals = certificate.w.evaluate_many(mesh)
    mask = _certified_side(certificate, vals).reshape((resolution,) * n)
    return axes, mask


def level_set(certificate: Certificate, box: Box, resolution: int = 2000):
    """Geometry of {w = 1} clipped to the box.

    n = 1: list of maximal closed intervals of the certified region, each
    boundary refined by bisection to 1e-4.
    n = 2: list of polylines (arrays of shape (k, 2)) tracing w = 1 by
    marching squares on a resolution^2 grid.
    """
    if certificate.n == 1:
        return _intervals_1d(certificate, box, resolution)
    if certificate.n == 2:
        return marching_squares(
            lambda pts: certificate.w.evaluate_many(pts), box, 1.0, resolution
        )
    raise ValueError("level-set extraction supports n in {1, 2}")


def _intervals_1d(certificate: Certificate, box: Box, resolution: int,
                  xtol: float = 1e-4) -> list[tuple[float, float]]:
    lo, hi = box.lo[0], box.hi[0]
    xs = np.linspace(lo, hi, resolution + 1)
    inside = _certified_side(
        certificate, certificate.w.evaluate_many(xs[:, None])
    )

    def boundary(a: float, b: float) -> float:
        # sign change of w - 1 between an inside point a and outside b
        fa = certificate.w.evaluate([a]) - 1.0
        for _ in range(200):
            if abs(b - a) <= xtol:
                break
            mid = 0.5 * (a + b)
            fm = certificate.w.evaluate([mid]) - 1.0
            if (fm >= 0) == (fa >= 0):
                a = mid
            else:
                b = mid
        return 0.5 * (a + b)

    intervals: list[tuple[float, float]] = []
    k = 0
    while k <= resolution:
        if inside[k]:
            start = k
            while k + 1 <= resolution and inside[k + 1]:
                k += 1
            left = xs[start] if start == 0 else boundary(xs[start], xs[start - 1])
            right = xs[k] if k == resolution else boundary(xs[k], xs[k + 1])
            intervals.append((float(left), float(right)))
        k += 1
    return intervals


def marching_squares(evaluate, box: Box, level: float,
                     resolution: int = 200) -> list[np.ndarray]:
    """Contour polylines of evaluate(points) = level on a box grid.

    Linear interpolation along cell edges; the two ambiguous saddle cases
    are split by the cell-center sign.  Segments sharing endpoints are
    chained into polylines.
    """
    xs = np.linspace(box.lo[0], box.hi[0], resolution)
    ys = np.linspace(box.lo[1], box.hi[1], resolution)
    mesh = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1).reshape(-1, 2)
    grid = (evaluate(mesh) - level).reshape(resolution, resolution)

    def interp(pa, fa, pb, fb):
        t = fa / (fa - fb) if fa != fb else 0.5
        return (pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1]))

    segments: list[tuple[tuple, tuple]] = []
    for i in range(resolution - 1):
        for j in range(resolution - 1):
            f = (grid[i, j], grid[i + 1, j], grid[i + 1, j + 1], grid[i, j + 1])
            corner = (
                (xs[i], ys[j]), (xs[i + 1], ys[j]),
                (xs[i + 1], ys[j + 1]), (xs[i], ys[j + 1]),
            )
            case = sum(1 << k for k in range(4) if f[k] > 0)
            if case in (0, 15):
                continue
            crossings = {}
            for k, (a, b) in enumerate(((0, 1), (1, 2), (2, 3), (3, 0))):
                if (f[a] > 0) != (f[b] > 0):
                    crossings[k] = interp(corner[a], f[a], corner[b], f[b])
            if len(crossings) == 2:
                e = sorted(crossings)
                segments.append((crossings[e[0]], crossings[e[1]]))
            elif len(crossings) == 4:
                center = 0.25 * sum(f)
                first_pos = f[0] > 0
                if (center > 0) == first_pos:
                    segments.append((crossings[0], crossings[3]))
                    segments.append((crossings[1], crossings[2]))
                else:
                    segments.append((crossings[0], crossings[1]))
                    segments.append((crossings[2], crossings[3]))
    return _chain_segments(segments)


def _chain_segments(segments: list[tuple[tuple, tuple]]) -> list[np.ndarray]:
    def key(p):
        return (round(p[0], 9), round(p[1], 9))

    adjacency: dict[tuple, list[int]] = {}
    for idx, (a, b) in enumerate(segments):
        adjacency.setdefault(key(a), []).append(idx)
        adjacency.setdefault(key(b), []).append(idx)
    used = [False] * len(segments)
    polylines = []
    for start in range(len(segments)):
        if used[start]:
            continue
        used[start] = True
        a, b = segments[start]
        chain = [a, b]
        for endpoint_side in (1, 0):
            while True:
                tip = key(chain[-1] if endpoint_side else chain[0])
                nxt = next(
                    (s for s in adjacency.get(tip, []) if not used[s]), None
                )
                if nxt is None:
                    break
                used[nxt] = True
                sa, sb = segments[nxt]
                fresh = sb if key(sa) == tip else sa
                if endpoint_side:
                    chain.append(fresh)
                else:
                    chain.insert(0, fresh)
        polylines.append(np.array(chain))
    return polylines
