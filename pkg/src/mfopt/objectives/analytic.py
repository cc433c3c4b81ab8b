"""Two analytic multi-fidelity test problems on the interval [0, 10].

Problem 1 is continuous at both fidelities:

    F1(x) = -(x+1)^2 * sin(2x+2)/5 + 1 + x/3      (high)
    f1(x) = F1(x)/2 + x/4 + 2                      (low)

Problem 2 shares F1 but drops by 15 at x = 7.5 on the high-fidelity level
while its low-fidelity proxy stays continuous (and offset):

    F2(x) = F1(x)            if x < 7.5
            F1(x) - 15       if x >= 7.5           (high)
    f2(x) = F1(x)/2 + x/4 - 5                      (low)

Both are deterministic and noiseless.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..mean_models import f1_base

__all__ = [
    "PROBLEM_IDS",
    "AnalyticProblem",
    "eval_analytic",
    "problem_truth",
    "problem_optimum",
]

PROBLEM_IDS = ("problem1", "problem2")
DOMAIN = (0.0, 10.0)
DISCONTINUITY_X = 7.5
DISCONTINUITY_DROP = 15.0


@dataclass(frozen=True)
class AnalyticProblem:
    id: str
    domain: tuple[float, float] = DOMAIN

    def __post_init__(self) -> None:
        if self.id not in PROBLEM_IDS:
            raise ValueError(f"id must be one of {PROBLEM_IDS}, got {self.id!r}")


def _high(problem_id: str, x: np.ndarray) -> np.ndarray:
    base = f1_base(x)
    if problem_id == "problem1":
        return base
    return np.where(x < DISCONTINUITY_X, base, base - DISCONTINUITY_DROP)


def _low(problem_id: str, x: np.ndarray) -> np.ndarray:
    base = f1_base(x)
    offset = 2.0 if problem_id == "problem1" else -5.0
    return base / 2.0 + x / 4.0 + offset


def eval_analytic(
    problem: AnalyticProblem | str, x: float | np.ndarray, f: int
) -> float | np.ndarray:
    """High- (f = 1) or low- (f = 0) fidelity value at x in [0, 10].
    Accepts a scalar (returns float) or an array (returns elementwise)."""
    pid = problem.id if isinstance(problem, AnalyticProblem) else problem
    if pid not in PROBLEM_IDS:
        raise ValueError(f"unknown problem {pid!r}")
    lo, hi = DOMAIN
    xs = np.asarray(x, dtype=float)
    if np.any(xs < lo) or np.any(xs > hi):
        raise ValueError(f"x = {x} outside domain [{lo}, {hi}]")
    if f not in (0, 1):
        raise ValueError(f"fidelity label must be 0 or 1, got {f!r}")
    val = _high(pid, xs) if f == 1 else _low(pid, xs)
    return float(val) if np.isscalar(x) or xs.ndim == 0 else val


def problem_truth(
    problem_id: str, resolution: float = 1e-3
) -> tuple[np.ndarray, np.ndarray]:
    """Dense high-fidelity curve on a uniform grid of the given spacing."""
    lo, hi = DOMAIN
    n = int(round((hi - lo) / resolution)) + 1
    grid = np.linspace(lo, hi, n)
    return grid, _high(problem_id, grid)


def problem_optimum(problem_id: str, resolution: float = 1e-3) -> tuple[float, float]:
    """Brute-force grid maximum (location, value) of the high-fidelity curve."""
    grid, vals = problem_truth(problem_id, resolution)
    i = int(np.argmax(vals))
    return float(grid[i]), float(vals[i])
