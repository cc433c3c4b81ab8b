"""Structured probabilistic mean functions for the multi-fidelity GP prior.

Three kinds are available: a zero mean (the plain data-driven model), a
piecewise constant-offset model that encodes a known discontinuity

    M(x) = f(x) - a  if x < c,   f(x) - b  if x >= c,

with the base f(x) selectable between the first test function's closed form
and a plain quadratic, and a Gaussian peak a * exp(-(x - b)^2 / (2 c^2))
encoding a single-peak transition. The three parameters (a, b, c) carry
prior distributions and are sampled jointly with the kernel hyperparameters
during inference. Structured means are one-dimensional; only the zero mean
accepts higher-dimensional inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PriorDistribution",
    "MeanModelSpec",
    "ShiftedScaledMean",
    "f1_base",
    "eval_mean",
    "sample_mean_params",
    "zero_mean",
    "piecewise_offset_mean",
    "gaussian_peak_mean",
]

MEAN_KINDS = ("zero", "piecewise_offset", "gaussian_peak")
BASE_FORMS = ("f1", "quadratic")
PRIOR_FAMILIES = ("normal", "uniform", "halfnormal", "pointmass")
PARAM_NAMES = ("a", "b", "c")


@dataclass(frozen=True)
class PriorDistribution:
    """A named prior: normal(mu, sd), uniform(lo, hi), halfnormal(scale),
    or pointmass(value) for a parameter pinned to a single value."""

    family: str
    mu: float = 0.0
    sd: float = 1.0
    lo: float = 0.0
    hi: float = 1.0
    scale: float = 1.0
    value: float = 0.0

    def __post_init__(self) -> None:
        if self.family not in PRIOR_FAMILIES:
            raise ValueError(
                f"family must be one of {PRIOR_FAMILIES}, got {self.family!r}"
            )
        if self.family == "normal" and not self.sd > 0:
            raise ValueError(f"normal sd must be > 0, got {self.sd}")
        if self.family == "uniform" and not self.lo < self.hi:
            raise ValueError(
                f"uniform requires lo < hi, got [{self.lo}, {self.hi}]"
            )
        if self.family == "halfnormal" and not self.scale > 0:
            raise ValueError(f"halfnormal scale must be > 0, got {self.scale}")

    # --- sampling -------------------------------------------------------

    def sample(self, rng: np.random.Generator) -> float:
        if self.family == "normal":
            return float(rng.normal(self.mu, self.sd))
        if self.family == "uniform":
            return float(rng.uniform(self.lo, self.hi))
        if self.family == "halfnormal":
            return float(abs(rng.normal(0.0, self.scale)))
        return float(self.value)

    # --- density --------------------------------------------------------

    def log_pdf(self, v: float) -> float:
        """Log density at v; -inf outside the support. Point masses return 0
        at the pinned value (they are never part of a sampled vector)."""
        if self.family == "normal":
            z = (v - self.mu) / self.sd
            return -0.5 * z * z - np.log(self.sd) - 0.5 * np.log(2.0 * np.pi)
        if self.family == "uniform":
            if self.lo <= v <= self.hi:
                return -np.log(self.hi - self.lo)
            return -np.inf
        if self.family == "halfnormal":
            if v < 0:
                return -np.inf
            z = v / self.scale
            return (
                0.5 * np.log(2.0 / np.pi) - np.log(self.scale) - 0.5 * z * z
            )
        return 0.0 if v == self.value else -np.inf

    # --- unconstrained transform ----------------------------------------
    # Bounded supports are sampled through a bijection u -> v so the MCMC
    # walks an unconstrained space; log_jacobian is log|dv/du|.

    def to_unconstrained(self, v: float) -> float:
        if self.family == "uniform":
            p = (v - self.lo) / (self.hi - self.lo)
            p = min(max(p, 1e-12), 1.0 - 1e-12)
            return float(np.log(p) - np.log1p(-p))
        if self.family == "halfnormal":
            return float(np.log(max(v, 1e-300)))
        return float(v)

    def from_unconstrained(self, u: float) -> float:
        if self.family == "uniform":
            p = 1.0 / (1.0 + np.exp(-u))
            return float(self.lo + (self.hi - self.lo) * p)
        if self.family == "halfnormal":
            return float(np.exp(u))
        return float(u)

    def log_jacobian(self, u: float) -> float:
        if self.family == "uniform":
            # d/du [lo + (hi-lo)*sigmoid(u)] = (hi-lo)*sigmoid(u)*(1-sigmoid(u))
            return float(
                np.log(self.hi - self.lo) - u - 2.0 * np.log1p(np.exp(-u))
            )
        if self.family == "halfnormal":
            return float(u)
        return 0.0

    @property
    def is_fixed(self) -> bool:
        return self.family == "pointmass"

    def to_dict(self) -> dict:
        d: dict = {"family": self.family}
        if self.family == "normal":
            d.update(mu=self.mu, sd=self.sd)
        elif self.family == "uniform":
            d.update(lo=self.lo, hi=self.hi)
        elif self.family == "halfnormal":
            d.update(scale=self.scale)
        else:
            d.update(value=self.value)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PriorDistribution":
        return cls(**d)


def normal(mu: float, sd: float) -> PriorDistribution:
    return PriorDistribution("normal", mu=mu, sd=sd)


def uniform(lo: float, hi: float) -> PriorDistribution:
    return PriorDistribution("uniform", lo=lo, hi=hi)


def halfnormal(scale: float) -> PriorDistribution:
    return PriorDistribution("halfnormal", scale=scale)


def pointmass(value: float) -> PriorDistribution:
    return PriorDistribution("pointmass", value=value)


def f1_base(x: np.ndarray | float) -> np.ndarray | float:
    """Closed form of the first test function's high-fidelity curve:
    -(x+1)^2 * sin(2x+2)/5 + 1 + x/3."""
    x = np.asarray(x, dtype=float)
    out = -((x + 1.0) ** 2) * np.sin(2.0 * x + 2.0) / 5.0 + 1.0 + x / 3.0
    return out if out.ndim else float(out)


def _quadratic_base(x: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=float) ** 2


_BASES = {"f1": f1_base, "quadratic": _quadratic_base}


@dataclass(frozen=True)
class MeanModelSpec:
    """Choice of mean function plus the priors of its (a, b, c) parameters.

    kind "zero" carries no parameters; the structured kinds carry exactly
    the three priors keyed "a", "b", "c". base_form selects f(x) for the
    piecewise model and is ignored otherwise.
    """

    kind: str
    base_form: str = "f1"
    param_priors: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in MEAN_KINDS:
            raise ValueError(f"kind must be one of {MEAN_KINDS}, got {self.kind!r}")
        if self.kind == "zero":
            if self.param_priors:
                raise ValueError("zero mean carries no parameters")
            return
        if self.base_form not in BASE_FORMS:
            raise ValueError(
                f"base_form must be one of {BASE_FORMS}, got {self.base_form!r}"
            )
        if set(self.param_priors.keys()) != set(PARAM_NAMES):
            raise ValueError(
                f"{self.kind} requires exactly priors for {PARAM_NAMES}, "
                f"got {sorted(self.param_priors.keys())}"
            )

    @property
    def n_params(self) -> int:
        return 0 if self.kind == "zero" else 3

    def priors_in_order(self) -> list[PriorDistribution]:
        return [self.param_priors[name] for name in PARAM_NAMES[: self.n_params]]

    def values(self, params: tuple, x: np.ndarray) -> np.ndarray:
        """Vectorized mean over stacked inputs x of shape (n,) or (n, d)."""
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            n = x.shape[0] if x.ndim else 1
            return np.zeros(n)
        if x.ndim > 1 and x.shape[1] != 1:
            raise ValueError(
                f"structured means are defined for 1-D inputs only, got d={x.shape[1]}"
            )
        xs = x.reshape(-1)
        a, b, c = (float(v) for v in params)
        if self.kind == "piecewise_offset":
            base = _BASES[self.base_form](xs)
            return np.where(xs < c, base - a, base - b)
        # gaussian_peak
        if c == 0.0:
            raise ValueError("gaussian_peak requires c != 0")
        return a * np.exp(-((xs - b) ** 2) / (2.0 * c * c))

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.kind != "zero":
            d["base_form"] = self.base_form
            d["param_priors"] = {
                name: prior.to_dict() for name, prior in self.param_priors.items()
            }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MeanModelSpec":
        priors = {
            name: PriorDistribution.from_dict(p)
            for name, p in d.get("param_priors", {}).items()
        }
        return cls(
            kind=d["kind"],
            base_form=d.get("base_form", "f1"),
            param_priors=priors,
        )


class ShiftedScaledMean:
    """Affine view of a mean model for use on standardized data.

    Evaluates the wrapped spec in original coordinates
    x_orig = x_lo + x_range * x and returns (m(x_orig) - y_shift) / y_scale,
    so parameter priors stay in original units while the GP sees
    standardized residuals. Delegates the spec surface (priors, kind,
    parameter count) unchanged.
    """

    def __init__(
        self,
        spec: MeanModelSpec,
        x_lo: float,
        x_range: float,
        y_shift: float,
        y_scale: float,
    ) -> None:
        if x_range <= 0 or y_scale <= 0:
            raise ValueError("x_range and y_scale must be positive")
        self.spec = spec
        self.x_lo = float(x_lo)
        self.x_range = float(x_range)
        self.y_shift = float(y_shift)
        self.y_scale = float(y_scale)

    @property
    def kind(self) -> str:
        return self.spec.kind

    @property
    def n_params(self) -> int:
        return self.spec.n_params

    @property
    def param_priors(self) -> dict:
        return self.spec.param_priors

    def priors_in_order(self) -> list[PriorDistribution]:
        return self.spec.priors_in_order()

    def values(self, params: tuple, x: np.ndarray) -> np.ndarray:
        if self.spec.kind == "zero":
            return self.spec.values(params, x)
        x_orig = self.x_lo + self.x_range * np.asarray(x, dtype=float)
        return (self.spec.values(params, x_orig) - self.y_shift) / self.y_scale


def eval_mean(spec: MeanModelSpec, params: tuple, x: float) -> float:
    """Mean value at a single scalar input."""
    return float(spec.values(params, np.array([x]))[0])


def sample_mean_params(spec: MeanModelSpec, rng: np.random.Generator) -> tuple:
    """Draw (a, b, c) independently from the declared priors; empty for zero."""
    if spec.kind == "zero":
        return ()
    return tuple(prior.sample(rng) for prior in spec.priors_in_order())


def zero_mean() -> MeanModelSpec:
    return MeanModelSpec(kind="zero")


def piecewise_offset_mean(
    base_form: str = "f1",
    a: PriorDistribution | None = None,
    b: PriorDistribution | None = None,
    c: PriorDistribution | None = None,
) -> MeanModelSpec:
    """Discontinuity mean with the documented default priors
    a ~ N(0, 1), b ~ N(15, 2), c ~ Unif[5, 10]."""
    return MeanModelSpec(
        kind="piecewise_offset",
        base_form=base_form,
        param_priors={
            "a": a or normal(0.0, 1.0),
            "b": b or normal(15.0, 2.0),
            "c": c or uniform(5.0, 10.0),
        },
    )


def gaussian_peak_mean(
    a: PriorDistribution | None = None,
    b: PriorDistribution | None = None,
    c: PriorDistribution | None = None,
) -> MeanModelSpec:
    """Single-peak mean with the documented default priors
    a ~ halfN(0.5), b ~ halfN(1.17), c ~ halfN(2)."""
    return MeanModelSpec(
        kind="gaussian_peak",
        param_priors={
            "a": a or halfnormal(0.5),
            "b": b or halfnormal(1.17),
            "c": c or halfnormal(2.0),
        },
    )
