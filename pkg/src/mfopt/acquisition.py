"""Cost-aware multi-fidelity Expected Improvement.

The high-fidelity score is closed-form EI divided by the cost ratio C; the
low-fidelity score is the absolute gap between the high- and low-fidelity
EI curves (the expected further improvement a cheap evaluation could
reveal). Selection takes the argmax over both curves jointly, breaking ties
in favor of the low fidelity and then the smallest location, and falls back
to a random unexplored low-fidelity point when every score is zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .mfgp import PosteriorPrediction

__all__ = [
    "AcquisitionConfig",
    "AcquisitionValues",
    "Selection",
    "expected_improvement",
    "mf_acquisition",
    "select_next",
]


@dataclass(frozen=True)
class AcquisitionConfig:
    """xi >= 0 is the exploration margin (default 0.01), cost_ratio C > 0
    discounts high-fidelity EI, and tweak in (0, 1] records the adjustment
    Delta when C is derived from runtimes as (T_H / t_l) * Delta."""

    cost_ratio: float = 1.0
    xi: float = 0.01
    tweak: float = 1.0

    def __post_init__(self) -> None:
        if self.xi < 0:
            raise ValueError(f"xi must be >= 0, got {self.xi}")
        if not self.cost_ratio > 0:
            raise ValueError(f"cost_ratio must be > 0, got {self.cost_ratio}")
        if not 0.0 < self.tweak <= 1.0:
            raise ValueError(f"tweak must be in (0, 1], got {self.tweak}")

    @classmethod
    def from_runtimes(
        cls, high_runtime: float, low_runtime: float, tweak: float = 1.0,
        xi: float = 0.01,
    ) -> "AcquisitionConfig":
        return cls(
            cost_ratio=(high_runtime / low_runtime) * tweak, xi=xi, tweak=tweak
        )

    def to_dict(self) -> dict:
        return {"cost_ratio": self.cost_ratio, "xi": self.xi, "tweak": self.tweak}

    @classmethod
    def from_dict(cls, d: dict) -> "AcquisitionConfig":
        return cls(**d)


def expected_improvement(
    mu: np.ndarray | float,
    sigma: np.ndarray | float,
    y_best: float,
    xi: float = 0.01,
) -> np.ndarray | float:
    """Closed-form EI: (mu - y_best - xi) * Phi(Z) + sigma * phi(Z).

    Z = (mu - y_best - xi) / sigma; the value is 0 exactly where sigma = 0.
    Accepts scalars or aligned arrays. Negative sigma is an error.
    """
    mu_a = np.asarray(mu, dtype=float)
    sig_a = np.asarray(sigma, dtype=float)
    if np.any(sig_a < 0):
        raise ValueError("sigma must be >= 0")
    imp = mu_a - y_best - xi
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sig_a > 0, imp / np.where(sig_a > 0, sig_a, 1.0), 0.0)
    ei = np.where(sig_a > 0, imp * norm.cdf(z) + sig_a * norm.pdf(z), 0.0)
    ei = np.maximum(ei, 0.0)
    return ei if ei.ndim else float(ei)


@dataclass(frozen=True)
class AcquisitionValues:
    """Per-grid-point scores u(x, 1) and u(x, 0) plus candidate eligibility.

    Eligibility masks mark grid points still proposable at each fidelity
    (already-sampled locations are excluded by the campaign).
    """

    grid: np.ndarray
    u_high: np.ndarray
    u_low: np.ndarray
    eligible_high: np.ndarray = field(default=None)  # type: ignore[assignment]
    eligible_low: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        g = np.asarray(self.grid)
        n = g.shape[0]
        for name in ("u_high", "u_low"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (n,):
                raise ValueError(f"{name} must have shape ({n},)")
            object.__setattr__(self, name, v)
        for name in ("eligible_high", "eligible_low"):
            m = getattr(self, name)
            m = np.ones(n, dtype=bool) if m is None else np.asarray(m, dtype=bool)
            if m.shape != (n,):
                raise ValueError(f"{name} must have shape ({n},)")
            object.__setattr__(self, name, m)

    def with_eligibility(
        self, eligible_high: np.ndarray, eligible_low: np.ndarray
    ) -> "AcquisitionValues":
        return AcquisitionValues(
            grid=self.grid,
            u_high=self.u_high,
            u_low=self.u_low,
            eligible_high=eligible_high,
            eligible_low=eligible_low,
        )


def mf_acquisition(
    pred: PosteriorPrediction,
    y_best: float,
    cfg: AcquisitionConfig,
) -> AcquisitionValues:
    """u(x, 1) = EI_hf(x) / C and u(x, 0) = |EI_hf(x) - EI_lf(x)|.

    y_best must be the running maximum over all sampled outputs at both
    fidelities. Both returned curves are nonnegative.
    """
    ei_hf = expected_improvement(pred.mu_hf, np.sqrt(pred.var_hf), y_best, cfg.xi)
    ei_lf = expected_improvement(pred.mu_lf, np.sqrt(pred.var_lf), y_best, cfg.xi)
    return AcquisitionValues(
        grid=pred.grid,
        u_high=np.asarray(ei_hf) / cfg.cost_ratio,
        u_low=np.abs(np.asarray(ei_hf) - np.asarray(ei_lf)),
    )


@dataclass(frozen=True)
class Selection:
    """Chosen location and fidelity; fallback marks a zero-acquisition draw."""

    x: np.ndarray
    f: int
    value: float
    index: int
    fallback: bool = False


def select_next(
    acq: AcquisitionValues,
    tie_rule: str = "prefer_low_then_smallest_x",
    rng: np.random.Generator | None = None,
) -> Selection:
    """Argmax over both curves among eligible candidates.

    Exact ties break by tie_rule (the default prefers f = 0, then the
    smallest grid index, i.e. the smallest location on a sorted grid). When
    every eligible value is zero the selection falls back to a uniform
    random unexplored point at f = 0 and is flagged; an rng is required
    then. No eligible candidate at all is an error.
    """
    if tie_rule != "prefer_low_then_smallest_x":
        raise ValueError(f"unknown tie rule {tie_rule!r}")
    grid = np.asarray(acq.grid)
    u_high = np.where(acq.eligible_high, acq.u_high, -np.inf)
    u_low = np.where(acq.eligible_low, acq.u_low, -np.inf)
    best = max(float(u_high.max(initial=-np.inf)), float(u_low.max(initial=-np.inf)))
    if not np.isfinite(best):
        raise ValueError("no eligible candidate to select from")

    if best <= 0.0:
        # Zero acquisition everywhere: fall back to a random unexplored
        # point, preferring the cheap fidelity when it has candidates.
        if rng is None:
            raise ValueError("zero-acquisition fallback requires an rng")
        for f_fb, mask in ((0, acq.eligible_low), (1, acq.eligible_high)):
            idx_pool = np.flatnonzero(mask)
            if idx_pool.size:
                idx = int(rng.choice(idx_pool))
                return Selection(
                    x=np.atleast_1d(grid[idx]), f=f_fb, value=0.0,
                    index=idx, fallback=True,
                )
        raise ValueError("no eligible candidate to select from")

    low_hits = np.flatnonzero(u_low == best)
    if low_hits.size:
        idx = int(low_hits[0])
        return Selection(
            x=np.atleast_1d(grid[idx]), f=0, value=best, index=idx
        )
    high_hits = np.flatnonzero(u_high == best)
    idx = int(high_hits[0])
    return Selection(x=np.atleast_1d(grid[idx]), f=1, value=best, index=idx)
