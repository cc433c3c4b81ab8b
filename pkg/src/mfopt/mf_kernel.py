"""Composite multi-fidelity covariance.

A single GP covers (input, fidelity-label) pairs through a product kernel:
an RBF or Matern-5/2 spatial correlation over the inputs times an
exponential correlation over the binary fidelity labels,

    cov((xi, fi), (xj, fj)) = sigma2 * R(xi, xj) * exp(-delta * |fi - fj|).

The Matern form sums per-dimension scaled distances separately in its linear
and quadratic terms rather than using a Euclidean norm. In one dimension it
coincides with the standard Matern-5/2 profile and is positive semidefinite;
in two or more dimensions the summed form is not guaranteed PSD, so
multi-dimensional use should prefer the RBF family or rely on the diagonal
jitter. Everything in this module is a pure function of its arguments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "JITTER",
    "FidelityPoint",
    "KernelHyperParams",
    "spatial_rbf",
    "spatial_matern52",
    "fidelity_kernel",
    "mf_covariance",
    "covariance_matrix",
    "covariance_matrix_from_arrays",
    "cross_covariance_from_arrays",
]

# Fixed diagonal jitter applied by covariance_matrix(include_noise=True).
JITTER = 1.0e-6

_SQRT5 = float(np.sqrt(5.0))

SPATIAL_FAMILIES = ("rbf", "matern52")


@dataclass(frozen=True)
class FidelityPoint:
    """One location in the joint (input, fidelity) space.

    x is a 1-D array of input coordinates; f is 0 (low fidelity) or
    1 (high fidelity), exactly.
    """

    x: np.ndarray
    f: int

    def __post_init__(self) -> None:
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        if x.ndim != 1:
            raise ValueError(f"x must be a vector, got shape {x.shape}")
        object.__setattr__(self, "x", x)
        if self.f not in (0, 1):
            raise ValueError(f"fidelity label must be 0 or 1, got {self.f!r}")
        object.__setattr__(self, "f", int(self.f))

    @property
    def dim(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class KernelHyperParams:
    """Hyperparameters of the product kernel.

    sigma2 > 0 is the overall variance, length_scales holds one theta_m > 0
    per input dimension, delta > 0 is the fidelity-gap parameter, and
    noise2 >= 0 is the observation noise variance shared by both fidelities.
    """

    sigma2: float
    length_scales: np.ndarray
    delta: float
    noise2: float = 0.0
    spatial_family: str = "rbf"

    def __post_init__(self) -> None:
        ls = np.atleast_1d(np.asarray(self.length_scales, dtype=float))
        object.__setattr__(self, "length_scales", ls)
        object.__setattr__(self, "sigma2", float(self.sigma2))
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "noise2", float(self.noise2))
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be > 0, got {self.sigma2}")
        if ls.ndim != 1 or not np.all(ls > 0):
            raise ValueError("every length scale must be > 0")
        if not self.delta > 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")
        if self.noise2 < 0:
            raise ValueError(f"noise2 must be >= 0, got {self.noise2}")
        if self.spatial_family not in SPATIAL_FAMILIES:
            raise ValueError(
                f"spatial_family must be one of {SPATIAL_FAMILIES}, "
                f"got {self.spatial_family!r}"
            )

    @property
    def dim(self) -> int:
        return self.length_scales.shape[0]


def _check_spatial_args(
    xi: np.ndarray, xj: np.ndarray, theta: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    xj = np.atleast_1d(np.asarray(xj, dtype=float))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if not (xi.shape == xj.shape == theta.shape):
        raise ValueError(
            f"xi, xj, theta must share length, got {xi.shape}, {xj.shape}, "
            f"{theta.shape}"
        )
    if not np.all(theta > 0):
        raise ValueError("length scales must be > 0")
    return xi, xj, theta


def spatial_rbf(xi: np.ndarray, xj: np.ndarray, theta: np.ndarray) -> float:
    """Radial-basis correlation exp(-0.5 * sum_m (dx_m / theta_m)^2)."""
    xi, xj, theta = _check_spatial_args(xi, xj, theta)
    z = (xi - xj) / theta
    return float(np.exp(-0.5 * np.dot(z, z)))


def spatial_matern52(xi: np.ndarray, xj: np.ndarray, theta: np.ndarray) -> float:
    """Matern-5/2 correlation with per-dimension summed scaled distances.

    Returns exp(-sqrt(5)*s1) * (1 + sqrt(5)*s1 + (5/3)*s2) where
    s1 = sum_m |dx_m|/theta_m and s2 = sum_m (dx_m/theta_m)^2. The two sums
    are taken separately (s2 is not s1 squared except in one dimension).
    """
    xi, xj, theta = _check_spatial_args(xi, xj, theta)
    a = np.abs(xi - xj) / theta
    s1 = float(np.sum(a))
    s2 = float(np.sum(a * a))
    return float(np.exp(-_SQRT5 * s1) * (1.0 + _SQRT5 * s1 + (5.0 / 3.0) * s2))


def fidelity_kernel(fi: int, fj: int, delta: float) -> float:
    """Fidelity-space correlation exp(-delta * |fi - fj|).

    Equals 1 for same-fidelity pairs and is symmetric in (fi, fj).
    """
    if fi not in (0, 1) or fj not in (0, 1):
        raise ValueError(f"fidelity labels must be 0 or 1, got {fi!r}, {fj!r}")
    if not delta > 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    return float(np.exp(-delta * abs(fi - fj)))


_SPATIAL_FUNCS = {"rbf": spatial_rbf, "matern52": spatial_matern52}


def mf_covariance(pi: FidelityPoint, pj: FidelityPoint, hp: KernelHyperParams) -> float:
    """Covariance sigma2 * R(xi, xj) * K_F(fi, fj) between two points."""
    if pi.dim != pj.dim:
        raise ValueError(f"points differ in dimension: {pi.dim} vs {pj.dim}")
    spatial = _SPATIAL_FUNCS[hp.spatial_family]
    r = spatial(pi.x, pj.x, hp.length_scales)
    kf = fidelity_kernel(pi.f, pj.f, hp.delta)
    return hp.sigma2 * r * kf


def _spatial_correlation_matrix(
    xa: np.ndarray, xb: np.ndarray, theta: np.ndarray, family: str
) -> np.ndarray:
    # xa: (n, d), xb: (m, d) -> (n, m)
    diff = xa[:, None, :] - xb[None, :, :]
    if family == "rbf":
        z2 = np.sum((diff / theta) ** 2, axis=-1)
        return np.exp(-0.5 * z2)
    if family == "matern52":
        a = np.abs(diff) / theta
        s1 = np.sum(a, axis=-1)
        s2 = np.sum(a * a, axis=-1)
        return np.exp(-_SQRT5 * s1) * (1.0 + _SQRT5 * s1 + (5.0 / 3.0) * s2)
    raise ValueError(f"unknown spatial family {family!r}")


def covariance_matrix_from_arrays(
    x: np.ndarray,
    f: np.ndarray,
    hp: KernelHyperParams,
    include_noise: bool = False,
) -> np.ndarray:
    """Vectorized n-by-n covariance over stacked inputs x (n, d), labels f (n,)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    f = np.asarray(f, dtype=float)
    if x.shape[0] == 0:
        raise ValueError("point list must be nonempty")
    if x.shape[1] != hp.dim:
        raise ValueError(
            f"points have dimension {x.shape[1]} but hyperparameters cover {hp.dim}"
        )
    r = _spatial_correlation_matrix(x, x, hp.length_scales, hp.spatial_family)
    kf = np.exp(-hp.delta * np.abs(f[:, None] - f[None, :]))
    k = hp.sigma2 * r * kf
    if include_noise:
        k = k + (hp.noise2 + JITTER) * np.eye(x.shape[0])
    return k


def cross_covariance_from_arrays(
    xa: np.ndarray,
    fa: np.ndarray,
    xb: np.ndarray,
    fb: np.ndarray,
    hp: KernelHyperParams,
) -> np.ndarray:
    """Cross covariance between two stacked point sets, shape (len a, len b)."""
    xa = np.asarray(xa, dtype=float)
    xb = np.asarray(xb, dtype=float)
    if xa.ndim == 1:
        xa = xa[:, None]
    if xb.ndim == 1:
        xb = xb[:, None]
    fa = np.asarray(fa, dtype=float)
    fb = np.asarray(fb, dtype=float)
    r = _spatial_correlation_matrix(xa, xb, hp.length_scales, hp.spatial_family)
    kf = np.exp(-hp.delta * np.abs(fa[:, None] - fb[None, :]))
    return hp.sigma2 * r * kf


def covariance_matrix(
    points: list[FidelityPoint],
    hp: KernelHyperParams,
    include_noise: bool = False,
) -> np.ndarray:
    """Assemble the symmetric covariance matrix over a list of points.

    With include_noise, noise2 plus the fixed jitter is added to the
    diagonal, after which the matrix admits a Cholesky factorization.
    """
    if len(points) == 0:
        raise ValueError("point list must be nonempty")
    x = np.stack([p.x for p in points])
    f = np.array([p.f for p in points], dtype=float)
    return covariance_matrix_from_arrays(x, f, hp, include_noise=include_noise)
