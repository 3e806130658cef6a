"""Reference reachability oracles, independent of the SoS pipeline.

Everything here works by direct numerical integration (fixed-step RK4)
and bisection: ground-truth regions of attraction for the built-in
benchmark fields, best-case reach sets under the data envelopes, and
worst-case reach tubes in one dimension.  None of it touches the
polynomial-program machinery, so these results can sit on the other side
of a cross-check from the SDP certificates.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .geometry import Dataset, SemialgebraicSet, lower_envelope, upper_envelope
from .poly import Box

DEFAULT_DT_FRACTION = 1e-3  # default step = this fraction of the horizon
BISECT_TOL = 1e-4


# ----------------------------------------------------------------------
# built-in benchmark fields

def _toy1d_field(x: np.ndarray) -> np.ndarray:
    # cubic with stable origin and unstable points at +-0.5, linearized
    # outside so the global Lipschitz constant stays at 1
    x = np.asarray(x, dtype=float)
    v = x[..., 0]
    inner = 2.0 * v * (v**2 - 0.25)
    out = np.where(v >= 0.5, v - 0.5, np.where(v <= -0.5, v + 0.5, inner))
    return out[..., None]


def _ring2d_field(x: np.ndarray) -> np.ndarray:
    # radial profile matching toy1d: attracting origin, unstable circle
    # of radius 0.5, linear growth beyond it
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    r_safe = np.where(r > 0, r, 1.0)
    scale_in = 2.0 * (r**2 - 0.25)
    scale_out = 1.0 - 0.5 / r_safe
    scale = np.where(r <= 0.5, scale_in, scale_out)
    return x * scale[..., None]


@dataclass(frozen=True)
class BuiltinSystem:
    """A named vector field with its Lipschitz bound and default domain."""

    name: str
    n: int
    lipschitz_bound: float
    domain: Box
    field: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.field(x)


TOY1D = BuiltinSystem("toy1d", 1, 1.0, Box((-1.0,), (1.0,)), _toy1d_field)
RING2D = BuiltinSystem("ring2d", 2, 1.0, Box((-0.8, -0.8), (0.8, 0.8)), _ring2d_field)

_BUILTINS = {s.name: s for s in (TOY1D, RING2D)}


def builtin_system(name: str) -> BuiltinSystem:
    try:
        return _BUILTINS[name]
    except KeyError:
        raise ValueError(
            f"unknown system {name!r}; available: {sorted(_BUILTINS)}"
        ) from None


# ----------------------------------------------------------------------
# integration

@dataclass(frozen=True)
class IntegrationResult:
    times: np.ndarray
    states: np.ndarray  # (num_steps + 1, n); frozen at the exit point once X is left
    stayed_in_box: bool
    final_in_target: bool


def _rk4_step(field, x, dt):
    k1 = field(x)
    k2 = field(x + 0.5 * dt * k1)
    k3 = field(x + 0.5 * dt * k2)
    k4 = field(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(field: Callable[[np.ndarray], np.ndarray], x0: Sequence[float],
              horizon: float, dt: float, box: Box,
              target: SemialgebraicSet | None = None) -> IntegrationResult:
    """Fixed-step RK4 over [0, horizon] with box-exit detection.

    Integration stops (state frozen) at the first step that lands outside
    the box; stayed_in_box then reports False and final_in_target is
    evaluated at the frozen exit state.  Non-finite states raise.
    """
    if horizon <= 0 or dt <= 0:
        raise ValueError("horizon and dt must be positive")
    x = np.asarray(x0, dtype=float).copy()
    if not np.isfinite(x).all():
        raise ValueError("initial state must be finite")
    steps = max(1, int(round(horizon / dt)))
    h = horizon / steps
    times = np.linspace(0.0, horizon, steps + 1)
    states = np.empty((steps + 1, x.shape[0]))
    states[0] = x
    stayed = box.contains(x)
    for k in range(steps):
        if stayed:
            x = _rk4_step(field, x, h)
            if not np.isfinite(x).all():
                raise FloatingPointError(f"non-finite state at t={times[k + 1]:.6g}")
            if not box.contains(x):
                stayed = False
        states[k + 1] = x
    final_in_target = bool(target.contains(x)) if target is not None else False
    return IntegrationResult(times, states, stayed, final_in_target and stayed)


def integrate_batch(field, x0s: np.ndarray, horizon: float, dt: float, box: Box,
                    target: SemialgebraicSet | None = None
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized endpoint map for a batch of initial states.

    Returns (finals, stayed_mask, target_mask).  Trajectories freeze at
    their first exit from the box, so later blow-up cannot poison the
    batch.
    """
    x = np.array(x0s, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    steps = max(1, int(round(horizon / dt)))
    h = horizon / steps
    alive = box.contains_many(x)
    for _ in range(steps):
        if not alive.any():
            break
        nxt = _rk4_step(field, x[alive], h)
        if not np.isfinite(nxt).all():
            raise FloatingPointError("non-finite state during batch integration")
        x[alive] = nxt
        inside = box.contains_many(nxt)
        idx = np.flatnonzero(alive)
        alive[idx[~inside]] = False
    if target is not None:
        target_mask = target.contains_many(x) & alive
    else:
        target_mask = np.zeros(x.shape[0], dtype=bool)
    return x, alive, target_mask


# ----------------------------------------------------------------------
# ground-truth region of attraction

def _bisect_boundary(good: Callable[[float], bool], lo: float, hi: float,
                     tol: float = BISECT_TOL) -> float:
    """Boundary of a predicate between lo and hi; works in either direction."""
    glo = good(lo)
    while abs(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        if good(mid) == glo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def true_roa(system: BuiltinSystem, config, resolution: int = 400,
             dt: float | None = None):
    """Finite-horizon region of attraction by direct integration.

    `config` supplies the horizon T, state box X and target set X_T.  In
    one dimension the result is a single interval (lo, hi) refined by
    bisection to 1e-4; in higher dimension a (grid_axes, mask) pair on a
    resolution-per-axis grid.
    """
    horizon, box, target = config.T, config.X, config.X_T
    if dt is None:
        dt = DEFAULT_DT_FRACTION * horizon
    if system.n == 1:
        xs = np.linspace(box.lo[0], box.hi[0], resolution)
        _, _, good_mask = integrate_batch(system.field, xs, horizon, dt, box, target)
        if not good_mask.any():
            raise RuntimeError("no good initial state found on the scan grid")

        def good(x0: float) -> bool:
            res = integrate(system.field, [x0], horizon, dt, box, target)
            return res.final_in_target

        good_idx = np.flatnonzero(good_mask)
        right_seed = xs[good_idx[-1]]
        left_seed = xs[good_idx[0]]
        hi = box.hi[0] if good(box.hi[0]) else _bisect_boundary(
            good, right_seed, min(box.hi[0], right_seed + (xs[1] - xs[0]) * 2))
        lo = box.lo[0] if good(box.lo[0]) else _bisect_boundary(
            good, left_seed, max(box.lo[0], left_seed - (xs[1] - xs[0]) * 2))
        return (float(lo), float(hi))
    axes = [np.linspace(box.lo[i], box.hi[i], resolution) for i in range(system.n)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, system.n)
    _, _, good_mask = integrate_batch(system.field, mesh, horizon, dt, box, target)
    return axes, good_mask.reshape((resolution,) * system.n)


# ----------------------------------------------------------------------
# data-driven envelope oracles (1D)

def interval_of_1d_set(target: SemialgebraicSet, box: Box,
                       resolution: int = 4001) -> tuple[float, float]:
    """Extract the interval a 1D semialgebraic target cuts out of the box."""
    if target.arity != 1 or box.arity != 1:
        raise ValueError("requires one-dimensional target and box")
    xs = np.linspace(box.lo[0], box.hi[0], resolution)
    mask = target.contains_many(xs[:, None])
    if not mask.any():
        raise ValueError("target set is empty on the box grid")
    idx = np.flatnonzero(mask)
    lo, hi = xs[idx[0]], xs[idx[-1]]
    h = xs[1] - xs[0]

    def member(x):
        return bool(target.contains([x]))

    if idx[0] > 0:
        lo = _bisect_boundary(member, lo, lo - h, tol=1e-6)
    if idx[-1] < resolution - 1:
        hi = _bisect_boundary(member, hi, hi + h, tol=1e-6)
    return (float(lo), float(hi))


def best_case_roa_1d(dataset: Dataset, config, dt: float | None = None,
                     tol: float = BISECT_TOL,
                     resolution: int = 400) -> tuple[float, float]:
    """Largest interval reachable into the target under SOME consistent field.

    From the right of the target the most favorable choice is the lower
    envelope l(x) = max_i (y_i - M |x - x_i|); from the left it is the
    upper envelope.  Both are 1-sided extremal selections that are
    themselves M-Lipschitz and interpolate the data, so the bisected
    endpoints are attained by an actual admissible field.

    A start counts as good only if its trajectory stays in the box AND
    lands in the target, and the outermost good start is located by a
    grid scan before bisection refines it within one cell.  The scan
    matters: with a wide target and a short horizon the data can force
    enough drift that the outer shell of the target itself is not good,
    so seeding the bisection at the target edge would be unsound.
    """
    if dataset.n != 1:
        raise ValueError("best-case oracle is one-dimensional")
    horizon, box = config.T, config.X
    if dt is None:
        dt = DEFAULT_DT_FRACTION * horizon
    target = config.X_T

    def lower_field(x):
        return lower_envelope(dataset, x[..., 0])[..., None]

    def upper_field(x):
        return upper_envelope(dataset, x[..., 0])[..., None]

    def good_right(x0: float) -> bool:
        return integrate(lower_field, [x0], horizon, dt, box, target).final_in_target

    def good_left(x0: float) -> bool:
        return integrate(upper_field, [x0], horizon, dt, box, target).final_in_target

    xs = np.linspace(box.lo[0], box.hi[0], resolution)
    _, _, right_mask = integrate_batch(lower_field, xs, horizon, dt, box, target)
    _, _, left_mask = integrate_batch(upper_field, xs, horizon, dt, box, target)
    if not (right_mask.any() and left_mask.any()):
        raise RuntimeError("no good initial state found on the scan grid")
    h = xs[1] - xs[0]
    right_seed = xs[np.flatnonzero(right_mask)[-1]]
    right = box.hi[0] if right_mask[-1] else _bisect_boundary(
        good_right, right_seed, min(box.hi[0], right_seed + 2 * h), tol)
    left_seed = xs[np.flatnonzero(left_mask)[0]]
    left = box.lo[0] if left_mask[0] else _bisect_boundary(
        good_left, left_seed, max(box.lo[0], left_seed - 2 * h), tol)
    return (float(left), float(right))


@dataclass(frozen=True)
class WorstCaseTube:
    """Reach tube [lower(t), upper(t)] under every consistent field."""

    times: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    stayed_in_box: bool


def worst_case_reach_1d(dataset: Dataset, x0: float, horizon: float,
                        dt: float | None = None,
                        box: Box | None = None) -> WorstCaseTube:
    """Tube of ALL states reachable from x0 under consistent fields.

    The upper edge follows the upper envelope, the lower edge the lower
    envelope; both are admissible fields, so the tube edges are attained.
    Integration freezes once either edge leaves the box.
    """
    if dataset.n != 1:
        raise ValueError("worst-case oracle is one-dimensional")
    if dt is None:
        dt = DEFAULT_DT_FRACTION * horizon
    steps = max(1, int(round(horizon / dt)))
    h = horizon / steps
    times = np.linspace(0.0, horizon, steps + 1)
    lo_traj = np.empty(steps + 1)
    hi_traj = np.empty(steps + 1)
    lo_traj[0] = hi_traj[0] = float(x0)

    def lower_field(x):
        return lower_envelope(dataset, x[..., 0])[..., None]

    def upper_field(x):
        return upper_envelope(dataset, x[..., 0])[..., None]

    stayed = True if box is None else box.contains([x0])
    lo_x = np.array([float(x0)])
    hi_x = np.array([float(x0)])
    for k in range(steps):
        if stayed:
            lo_x = _rk4_step(lower_field, lo_x, h)
            hi_x = _rk4_step(upper_field, hi_x, h)
            if not (np.isfinite(lo_x).all() and np.isfinite(hi_x).all()):
                raise FloatingPointError("non-finite tube state")
            if box is not None and not (box.contains(lo_x) and box.contains(hi_x)):
                stayed = False
        lo_traj[k + 1] = lo_x[0]
        hi_traj[k + 1] = hi_x[0]
    return WorstCaseTube(times, lo_traj, hi_traj, bool(stayed))


def worst_case_good(dataset: Dataset, x0: float, config,
                    dt: float | None = None) -> bool:
    """True iff EVERY consistent field drives x0 into the target by time T.

    Requires the whole tube to stay in the box and the final tube to land
    inside the target interval.
    """
    tube = worst_case_reach_1d(dataset, x0, config.T, dt, box=config.X)
    if not tube.stayed_in_box:
        return False
    t_lo, t_hi = interval_of_1d_set(config.X_T, config.X)
    return bool(t_lo <= tube.lower[-1] and tube.upper[-1] <= t_hi)


# ----------------------------------------------------------------------
# dataset construction

def dataset_from_system(system: BuiltinSystem, points: np.ndarray | None = None,
                        n_samples: int | None = None, seed: int | None = None,
                        box: Box | None = None) -> Dataset:
    """Sample a dataset from a built-in field.

    Either pass explicit states `points` (N, n) or a count `n_samples`
    drawn uniformly (seeded) from `box`, defaulting to the system domain.
    """
    if (points is None) == (n_samples is None):
        raise ValueError("pass exactly one of points or n_samples")
    if points is None:
        if seed is None:
            raise ValueError("random sampling needs a seed for reproducibility")
        rng = np.random.default_rng(seed)
        box = box or system.domain
        points = box.sample(rng, n_samples)
    xs = np.atleast_2d(np.asarray(points, dtype=float))
    if xs.shape[1] != system.n:
        raise ValueError(f"points must have shape (N, {system.n})")
    ys = system.field(xs)
    return Dataset(n=system.n, M=system.lipschitz_bound, xs=xs, ys=ys)


def toy_dataset(extra_positions: Sequence[float] = ()) -> Dataset:
    """The three-point 1D benchmark dataset, optionally with symmetric
    extra samples at +-p taken from the toy field."""
    pts = [-1.0, 0.0, 1.0]
    for p in extra_positions:
        pts.extend([-abs(p), abs(p)])
    return dataset_from_system(TOY1D, points=np.array(sorted(set(pts)))[:, None])
