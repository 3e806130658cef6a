"""Independent checks of solved certificates.

Residual checks resample every membership region (time x box x velocity
graph, box, target, complement branches, faces) and measure how far the
certificate polynomials dip below zero there, reported relative to the
coefficient scale of each constrained expression.  Containment checks
compare level sets against the integration oracles.  Nothing here reuses
the compiler's algebra beyond polynomial evaluation, so a systematic
compilation bug would show up as a residual, not cancel out.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    Dataset,
    FeasibleSampleError,
    SemialgebraicSet,
    ball_center,
    lower_envelope,
    sample_F,
    upper_envelope,
)
from .oracle import integrate_batch, interval_of_1d_set, toy_dataset
from .poly import Box, Polynomial, lie_derivative
from .problems import (
    MODE_INNER,
    MODE_OUTER,
    Certificate,
    ProblemConfig,
    _effective,
    level_set,
    solve_roa,
)

DEFAULT_SAMPLES = 10_000
RESIDUAL_TOL = 1e-6
CONTAINMENT_TOL = 1e-3


@dataclass(frozen=True)
class ConstraintResidual:
    name: str
    max_violation: float
    scale: float  # l1 norm of the constrained expression's coefficients
    num_samples: int
    worst_point: tuple[float, ...] | None

    def within(self, tol: float = RESIDUAL_TOL) -> bool:
        return self.max_violation <= tol * (1.0 + self.scale)


@dataclass(frozen=True)
class ResidualReport:
    entries: tuple[ConstraintResidual, ...]
    num_samples: int
    seed: int

    def passes(self, tol: float = RESIDUAL_TOL) -> bool:
        return all(entry.within(tol) for entry in self.entries)

    def to_json_dict(self) -> dict:
        return {
            "num_samples": self.num_samples,
            "seed": self.seed,
            "passes": self.passes(),
            "entries": [
                {
                    "name": e.name,
                    "max_violation": e.max_violation,
                    "scale": e.scale,
                    "num_samples": e.num_samples,
                    "worst_point": list(e.worst_point) if e.worst_point else None,
                    "within_tolerance": e.within(),
                }
                for e in self.entries
            ],
        }


def _residual_entry(name: str, poly: Polynomial, points: np.ndarray
                    ) -> ConstraintResidual:
    """Violation of poly >= 0 over sample points."""
    if points.shape[0] == 0:
        return ConstraintResidual(name, 0.0, poly.coeff_l1(), 0, None)
    vals = poly.evaluate_many(points)
    worst = int(np.argmin(vals))
    return ConstraintResidual(
        name=name,
        max_violation=float(max(0.0, -vals[worst])),
        scale=poly.coeff_l1(),
        num_samples=points.shape[0],
        worst_point=tuple(float(c) for c in points[worst]),
    )


def _sample_velocities(dataset: Dataset, xs: np.ndarray,
                       rng: np.random.Generator) -> np.ndarray:
    ys = np.empty_like(xs)
    for k in range(xs.shape[0]):
        try:
            ys[k] = sample_F(dataset, xs[k], rng)
        except FeasibleSampleError:
            ys[k] = ball_center(dataset, xs[k])
    return ys


def residual_report(certificate: Certificate, config: ProblemConfig,
                    dataset: Dataset, num_samples: int = DEFAULT_SAMPLES,
                    seed: int = 0) -> ResidualReport:
    """Monte Carlo residuals of every membership the certificate claims.

    Sampling mirrors the build: the time interval and velocity graph are
    taken after any time normalization, so the checked inequalities are
    exactly the compiled ones.
    """
    if certificate.n != config.n:
        raise ValueError("certificate and config dimension mismatch")
    horizon, dataset = _effective(config, dataset)
    n = config.n
    rng = np.random.default_rng(seed)
    xs = config.X.sample(rng, num_samples)
    ts = rng.uniform(0.0, horizon, size=num_samples)
    ys = _sample_velocities(dataset, xs, rng)
    txy = np.concatenate([ts[:, None], xs, ys], axis=1)

    v, w = certificate.v, certificate.w
    lie = lie_derivative(v, n)
    v0 = v.eval_partial({0: 0.0})
    v_final = v.eval_partial({0: horizon})

    entries = [
        _residual_entry("flow", -lie, txy),
        _residual_entry("initial", w - v0 - 1.0, xs),
        _residual_entry("positivity", w, xs),
    ]
    if certificate.mode == MODE_OUTER:
        target_mask = config.X_T.contains_many(xs)
        entries.append(_residual_entry("terminal", v_final, xs[target_mask]))
    else:
        for j, g in enumerate(config.X_T.inequalities):
            branch_mask = g.evaluate_many(xs) <= 0.0
            entries.append(
                _residual_entry(f"terminal:branch{j}", v_final, xs[branch_mask])
            )
        per_face = max(1, num_samples // max(1, 2 * n))
        face_idx = 0
        for i in range(n):
            for bound in (config.X.lo[i], config.X.hi[i]):
                fx = config.X.sample(rng, per_face)
                fx[:, i] = bound
                ft = rng.uniform(0.0, horizon, size=per_face)
                entries.append(
                    _residual_entry(
                        f"boundary:face{face_idx}", v,
                        np.concatenate([ft[:, None], fx], axis=1),
                    )
                )
                face_idx += 1
    return ResidualReport(tuple(entries), num_samples, seed)


# ----------------------------------------------------------------------
# containment against oracles

def containment_check(certificate: Certificate, oracle_region,
                      grid: int = 2001, tol: float = CONTAINMENT_TOL) -> dict:
    """Outer certificates must cover the oracle region: w >= 1 - tol on it.

    oracle_region is an (lo, hi) interval for n = 1 or an explicit array
    of member points for higher dimension.
    """
    if certificate.mode != MODE_OUTER:
        raise ValueError("containment_check applies to outer certificates")
    if certificate.n == 1 and isinstance(oracle_region, tuple):
        lo, hi = oracle_region
        points = np.linspace(lo, hi, grid)[:, None]
    else:
        points = np.asarray(oracle_region, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
    vals = certificate.w.evaluate_many(points)
    worst = int(np.argmin(vals))
    ok = bool(vals[worst] >= 1.0 - tol)
    return {
        "ok": ok,
        "min_w": float(vals[worst]),
        "worst_point": [float(c) for c in points[worst]],
        "num_points": int(points.shape[0]),
        "tolerance": tol,
    }


def inner_containment_check(certificate: Certificate, dataset: Dataset,
                            config: ProblemConfig, grid_step: float = 1e-3,
                            dt: float | None = None) -> dict:
    """Every point of the inner region must be worst-case good.

    Scans {w <= 1} on a grid over the box and integrates the envelope
    tube from each member; the check is vacuously true when the region
    is empty.
    """
    if certificate.mode != MODE_INNER or certificate.n != 1:
        raise ValueError("inner containment check needs a 1D inner certificate")
    lo, hi = config.X.lo[0], config.X.hi[0]
    count = int(round((hi - lo) / grid_step)) + 1
    xs = np.linspace(lo, hi, count)
    members = xs[certificate.w.evaluate_many(xs[:, None]) <= 1.0]
    if members.size == 0:
        return {"ok": True, "num_members": 0, "bad_points": []}
    if dt is None:
        dt = 1e-3 * config.T
    t_lo, t_hi = interval_of_1d_set(config.X_T, config.X)

    def lower_field(x):
        return lower_envelope(dataset, x[..., 0])[..., None]

    def upper_field(x):
        return upper_envelope(dataset, x[..., 0])[..., None]

    pts = members[:, None]
    lo_final, lo_alive, _ = integrate_batch(lower_field, pts, config.T, dt, config.X)
    hi_final, hi_alive, _ = integrate_batch(upper_field, pts, config.T, dt, config.X)
    good = (
        lo_alive & hi_alive
        & (lo_final[:, 0] >= t_lo) & (hi_final[:, 0] <= t_hi)
    )
    bad = members[~good]
    return {
        "ok": bool(good.all()),
        "num_members": int(members.size),
        "bad_points": [float(b) for b in bad[:10]],
    }


def sweep_data_position(p_values, config: ProblemConfig) -> list[dict]:
    """Solve the outer toy problem with data at +-p added to the base set.

    Returns one row per p with the solver status, objective, and the
    right endpoint of the certified interval; richer data can only
    shrink both.
    """
    rows = []
    for p in p_values:
        dataset = toy_dataset([float(p)])
        cert, result, _, _ = solve_roa(config, dataset)
        intervals = level_set(cert, config.X)
        endpoint = max((iv[1] for iv in intervals), default=float("nan"))
        rows.append(
            {
                "p": float(p),
                "status": cert.status,
                "objective": cert.objective,
                "endpoint": float(endpoint),
                "num_intervals": len(intervals),
            }
        )
    return rows
