"""Shared fixtures: canonical datasets, configurations, and cached solves.

The regression solves are session scoped because several test modules
inspect the same certificates; solving once keeps the suite fast and
makes determinism checks meaningful.
"""
from __future__ import annotations

import pytest

from roacert import (
    Box,
    ProblemConfig,
    SemialgebraicSet,
    SolveOptions,
    level_set,
    solve_roa,
    toy_dataset,
)

TOY_BOX = Box((-1.0,), (1.0,))
TIGHT_TARGET = SemialgebraicSet.from_box(Box((-0.25,), (0.25,)))
WIDE_TARGET = SemialgebraicSet.from_box(Box((-0.9,), (0.9,)))


def toy_config(degree: int = 8, mode: str = "outer", horizon: float = 1.0,
               target: SemialgebraicSet = TIGHT_TARGET,
               **kwargs) -> ProblemConfig:
    return ProblemConfig(
        n=1,
        T=horizon,
        degree=degree,
        X=TOY_BOX,
        X_T=target,
        mode=mode,
        solver=kwargs.pop("solver", SolveOptions()),
        **kwargs,
    )


def wide_inner_config(degree: int = 8) -> ProblemConfig:
    """Short-horizon instance with a wide target; the inner program is
    informative here (the strict sublevel set is large and checkable)."""
    return toy_config(degree=degree, mode="inner", horizon=0.2,
                      target=WIDE_TARGET)


def outer_interval(cert, box: Box = TOY_BOX) -> tuple[float, float]:
    intervals = level_set(cert, box)
    assert len(intervals) == 1, f"expected one interval, got {intervals}"
    return intervals[0]


@pytest.fixture(scope="session")
def d1():
    return toy_dataset()


@pytest.fixture(scope="session")
def d2():
    return toy_dataset([0.3])


@pytest.fixture(scope="session")
def toy_solutions(d1, d2):
    """Solve the small regression instances once.

    Keys map to (config, dataset, certificate, result, problem, handles).
    """
    cases = {
        "d1-4": (toy_config(4), d1),
        "d1-6": (toy_config(6), d1),
        "d1-8": (toy_config(8), d1),
        "d2-8": (toy_config(8), d2),
        "wide-outer-8": (toy_config(8, horizon=0.2, target=WIDE_TARGET), d1),
        "wide-inner-8": (wide_inner_config(8), d1),
    }
    out = {}
    for key, (config, dataset) in cases.items():
        cert, result, problem, handles = solve_roa(config, dataset)
        out[key] = (config, dataset, cert, result, problem, handles)
    return out
