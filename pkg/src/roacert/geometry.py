"""Data-consistent dynamics sets and semialgebraic descriptions.

A dataset of state/velocity samples together with a Lipschitz bound M
pins the unknown vector field f to the set-valued envelope

    F(x) = intersection_i Ball(y_i, M * ||x - x_i||),

the tightest pointwise bound implied by ||f(x) - f(x')|| <= M ||x - x'||
and f(x_i) = y_i.  This module owns the dataset container, consistency
validation, the polynomial certificates gamma_i whose nonnegativity cuts
out the graph of F, closed-form envelopes in one dimension, rejection
sampling from F(x), and box/face semialgebraic descriptions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .poly import Box, Polynomial

PAIRWISE_SLACK = 1e-12


@dataclass(frozen=True)
class Dataset:
    """Samples (x_i, y_i = f(x_i)) plus a Lipschitz bound for f."""

    n: int
    M: float
    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        xs = np.atleast_2d(np.asarray(self.xs, dtype=float))
        ys = np.atleast_2d(np.asarray(self.ys, dtype=float))
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        if self.n < 1:
            raise ValueError("state dimension must be positive")
        if not (self.M > 0 and np.isfinite(self.M)):
            raise ValueError("Lipschitz bound must be positive and finite")
        if xs.shape != ys.shape or xs.shape[1] != self.n:
            raise ValueError(
                f"sample arrays must both have shape (N, {self.n}); "
                f"got {xs.shape} and {ys.shape}"
            )
        if xs.shape[0] < 1:
            raise ValueError("dataset needs at least one sample")
        if not (np.isfinite(xs).all() and np.isfinite(ys).all()):
            raise ValueError("samples must be finite")
        xs.flags.writeable = False
        ys.flags.writeable = False

    @property
    def size(self) -> int:
        return self.xs.shape[0]

    @property
    def points(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(self.xs[i].copy(), self.ys[i].copy()) for i in range(self.size)]

    @classmethod
    def from_points(cls, n: int, M: float, points: Sequence[tuple]) -> "Dataset":
        xs = np.array([np.atleast_1d(p[0]) for p in points], dtype=float)
        ys = np.array([np.atleast_1d(p[1]) for p in points], dtype=float)
        return cls(n=n, M=M, xs=xs, ys=ys)


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of the pairwise Lipschitz consistency check."""

    consistent: bool
    worst_pair: tuple[int, int] | None
    worst_ratio: float
    max_excess: float


def validate_dataset(dataset: Dataset, slack: float = PAIRWISE_SLACK) -> ValidationReport:
    """Check ||y_i - y_j|| <= M ||x_i - x_j|| + slack for all pairs.

    worst_pair maximises the ratio ||dy|| / (M ||dx||); duplicate states
    with distinct velocities give an infinite ratio.  A singleton dataset
    is vacuously consistent.
    """
    xs, ys, m = dataset.xs, dataset.ys, dataset.M
    if dataset.size == 1:
        return ValidationReport(True, None, 0.0, 0.0)
    dx = np.linalg.norm(xs[:, None, :] - xs[None, :, :], axis=2)
    dy = np.linalg.norm(ys[:, None, :] - ys[None, :, :], axis=2)
    iu, ju = np.triu_indices(dataset.size, k=1)
    bound = m * dx[iu, ju]
    excess = dy[iu, ju] - bound
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0, dy[iu, ju] / bound,
                         np.where(dy[iu, ju] > 0, np.inf, 0.0))
    worst = int(np.argmax(ratio))
    return ValidationReport(
        consistent=bool(np.all(excess <= slack)),
        worst_pair=(int(iu[worst]), int(ju[worst])),
        worst_ratio=float(ratio[worst]),
        max_excess=float(np.max(excess)),
    )


@dataclass(frozen=True)
class SemialgebraicSet:
    """{x : g(x) >= 0 for all inequality gens, h(x) = 0 for all equality gens}."""

    arity: int
    inequalities: tuple[Polynomial, ...] = ()
    equalities: tuple[Polynomial, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "inequalities", tuple(self.inequalities))
        object.__setattr__(self, "equalities", tuple(self.equalities))
        for g in self.inequalities + self.equalities:
            if g.arity != self.arity:
                raise ValueError("generator arity mismatch")

    @classmethod
    def from_box(cls, box: Box) -> "SemialgebraicSet":
        """One quadratic generator (x_i - lo_i)(hi_i - x_i) per coordinate."""
        gens = []
        for i, (lo, hi) in enumerate(zip(box.lo, box.hi)):
            xi = Polynomial.variable(box.arity, i)
            gens.append((xi - lo) * (hi - xi))
        return cls(arity=box.arity, inequalities=tuple(gens))

    def contains(self, point: Sequence[float], tol: float = 1e-9) -> bool:
        return all(g.evaluate(point) >= -tol for g in self.inequalities) and all(
            abs(h.evaluate(point)) <= tol for h in self.equalities
        )

    def contains_many(self, points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        mask = np.ones(points.shape[0], dtype=bool)
        for g in self.inequalities:
            mask &= g.evaluate_many(points) >= -tol
        for h in self.equalities:
            mask &= np.abs(h.evaluate_many(points)) <= tol
        return mask


def gamma_polys(dataset: Dataset) -> list[Polynomial]:
    """Graph certificates over (x, y), arity 2n.

    gamma_i(x, y) = M^2 ||x - x_i||^2 - ||y - y_i||^2 is nonnegative for
    all i exactly when y is a velocity some M-Lipschitz interpolant of the
    data can take at x.
    """
    n, m = dataset.n, dataset.M
    arity = 2 * n
    out = []
    for i in range(dataset.size):
        poly = Polynomial.zero(arity)
        for j in range(n):
            xj = Polynomial.variable(arity, j)
            yj = Polynomial.variable(arity, n + j)
            poly = poly + (m**2) * (xj - float(dataset.xs[i, j])) ** 2
            poly = poly - (yj - float(dataset.ys[i, j])) ** 2
        out.append(poly)
    return out


@dataclass(frozen=True)
class UncertaintyGraph:
    """State constraints joined with the dataset's graph certificates."""

    state_set: SemialgebraicSet
    gamma: tuple[Polynomial, ...]

    @classmethod
    def build(cls, dataset: Dataset, state_set: SemialgebraicSet) -> "UncertaintyGraph":
        if state_set.arity != dataset.n:
            raise ValueError("state set arity must equal dataset dimension")
        return cls(state_set=state_set, gamma=tuple(gamma_polys(dataset)))


def contains_F(dataset: Dataset, x: Sequence[float], y: Sequence[float],
               tol: float = 1e-12) -> bool:
    """Membership y in F(x), with additive slack on the squared radii."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lhs = np.sum((y[None, :] - dataset.ys) ** 2, axis=1)
    rhs = dataset.M**2 * np.sum((x[None, :] - dataset.xs) ** 2, axis=1)
    return bool(np.all(lhs <= rhs + tol))


def lower_envelope(dataset: Dataset, xs: np.ndarray) -> np.ndarray:
    """1D pointwise max of y_i - M |x - x_i| (vectorized over xs)."""
    if dataset.n != 1:
        raise ValueError("envelopes are one-dimensional")
    xs = np.asarray(xs, dtype=float)
    d = np.abs(xs[..., None] - dataset.xs[:, 0])
    return np.max(dataset.ys[:, 0] - dataset.M * d, axis=-1)


def upper_envelope(dataset: Dataset, xs: np.ndarray) -> np.ndarray:
    """1D pointwise min of y_i + M |x - x_i| (vectorized over xs)."""
    if dataset.n != 1:
        raise ValueError("envelopes are one-dimensional")
    xs = np.asarray(xs, dtype=float)
    d = np.abs(xs[..., None] - dataset.xs[:, 0])
    return np.min(dataset.ys[:, 0] + dataset.M * d, axis=-1)


def envelope_1d(dataset: Dataset, x: float) -> tuple[float, float] | None:
    """F(x) as the interval [l(x), u(x)]; None when the data forces emptiness.

    Consistent datasets always give l <= u.
    """
    lo = float(lower_envelope(dataset, np.array([x]))[0])
    hi = float(upper_envelope(dataset, np.array([x]))[0])
    if lo > hi:
        return None
    return (lo, hi)


class FeasibleSampleError(RuntimeError):
    """Rejection sampling from F(x) exhausted its budget."""


def sample_F(dataset: Dataset, x: Sequence[float], rng: np.random.Generator,
             max_tries: int = 10_000) -> np.ndarray:
    """Draw one y uniformly from F(x) by rejection from its smallest ball.

    The proposal is the ball of minimal radius among the N constraints;
    with a zero radius (x coincides with a data point) the sample is exact.
    Raises FeasibleSampleError if max_tries proposals all get rejected.
    """
    x = np.asarray(x, dtype=float)
    radii = dataset.M * np.linalg.norm(x[None, :] - dataset.xs, axis=1)
    star = int(np.argmin(radii))
    center = dataset.ys[star]
    radius = float(radii[star])
    if radius == 0.0:
        return center.copy()
    n = dataset.n
    for _ in range(max_tries):
        direction = rng.normal(size=n)
        norm = np.linalg.norm(direction)
        if norm == 0.0:
            continue
        y = center + direction / norm * radius * rng.uniform() ** (1.0 / n)
        if contains_F(dataset, x, y):
            return y
    raise FeasibleSampleError(
        f"no feasible velocity found at x={x.tolist()} after {max_tries} tries"
    )


def ball_center(dataset: Dataset, x: Sequence[float]) -> np.ndarray:
    """Center of the smallest constraint ball at x; always lies in F(x)
    whenever F(x) has nonempty interior around it, and is the fallback
    when rejection sampling fails."""
    x = np.asarray(x, dtype=float)
    radii = np.linalg.norm(x[None, :] - dataset.xs, axis=1)
    return dataset.ys[int(np.argmin(radii))].copy()


def box_faces(box: Box) -> list[SemialgebraicSet]:
    """The 2n facets of a box as semialgebraic sets.

    Face (i, bound) fixes x_i = bound through the equality generator
    x_i - bound and keeps the remaining coordinates' box quadratics.
    Order: coordinate 0 low, high, coordinate 1 low, high, ...
    """
    n = box.arity
    full = SemialgebraicSet.from_box(box)
    faces = []
    for i in range(n):
        others = tuple(g for j, g in enumerate(full.inequalities) if j != i)
        for bound in (box.lo[i], box.hi[i]):
            eq = Polynomial.variable(n, i) - bound
            faces.append(SemialgebraicSet(arity=n, inequalities=others, equalities=(eq,)))
    return faces
