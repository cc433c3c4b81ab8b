"""Multi-fidelity Gaussian-process inference.

Given observations at mixed fidelity levels, this module computes the exact
Gaussian log marginal likelihood under the product kernel, samples kernel
hyperparameters (and structured-mean parameters, when present) from their
posterior with a componentwise adaptive random-walk Metropolis chain, and
produces posterior-predictive means and variances at both fidelity levels on
a query grid, averaged over the retained draws by the law of total variance.

The predictive variance is that of the latent (noise-free) function; the
observation noise enters the training covariance only. All randomness flows
through an explicit numpy Generator, so identical inputs and rng state give
bit-identical draws and predictions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .mf_kernel import (
    JITTER,
    FidelityPoint,
    KernelHyperParams,
    covariance_matrix_from_arrays,
    cross_covariance_from_arrays,
)
from .mean_models import MeanModelSpec, PriorDistribution, uniform, halfnormal

__all__ = [
    "Dataset",
    "HyperPriors",
    "McmcConfig",
    "DrawRecord",
    "PosteriorDraws",
    "PosteriorPrediction",
    "FactorizationError",
    "McmcError",
    "log_marginal_likelihood",
    "fit_mcmc",
    "predict",
    "default_hyper_priors",
]


class FactorizationError(ValueError):
    """Covariance factorization failed even with the diagonal jitter."""


class McmcError(RuntimeError):
    """The chain failed to produce any accepted proposal."""


@dataclass(frozen=True)
class Dataset:
    """Multi-fidelity training data: points and one output per point."""

    points: tuple[FidelityPoint, ...]
    outputs: np.ndarray

    def __post_init__(self) -> None:
        pts = tuple(self.points)
        y = np.atleast_1d(np.asarray(self.outputs, dtype=float))
        if len(pts) == 0:
            raise ValueError("dataset must contain at least one point")
        if len(pts) != y.shape[0]:
            raise ValueError(
                f"{len(pts)} points but {y.shape[0]} outputs"
            )
        d = pts[0].dim
        if any(p.dim != d for p in pts):
            raise ValueError("all points must share one input dimension")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "outputs", y)

    @classmethod
    def from_arrays(cls, x: np.ndarray, f: np.ndarray, y: np.ndarray) -> "Dataset":
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        pts = tuple(FidelityPoint(x=row, f=int(fi)) for row, fi in zip(x, f))
        return cls(points=pts, outputs=np.asarray(y, dtype=float))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points[0].dim

    @property
    def x_matrix(self) -> np.ndarray:
        return np.stack([p.x for p in self.points])

    @property
    def f_vector(self) -> np.ndarray:
        return np.array([p.f for p in self.points], dtype=float)

    @property
    def fidelity_counts(self) -> tuple[int, int]:
        f = self.f_vector
        return int(np.sum(f == 0)), int(np.sum(f == 1))

    def append(self, point: FidelityPoint, y: float) -> "Dataset":
        return Dataset(
            points=self.points + (point,),
            outputs=np.append(self.outputs, float(y)),
        )


@dataclass(frozen=True)
class HyperPriors:
    """Priors over the kernel hyperparameters.

    Defaults follow the documented campaign configuration: Unif(0.01, 1) on
    sigma2, each length scale, and delta; HalfNormal(0.03) on noise2. A
    single length-scale prior broadcasts over all input dimensions.
    """

    sigma2: PriorDistribution = field(default_factory=lambda: uniform(0.01, 1.0))
    length_scales: tuple[PriorDistribution, ...] = field(
        default_factory=lambda: (uniform(0.01, 1.0),)
    )
    delta: PriorDistribution = field(default_factory=lambda: uniform(0.01, 1.0))
    noise2: PriorDistribution = field(default_factory=lambda: halfnormal(0.03))

    def __post_init__(self) -> None:
        object.__setattr__(self, "length_scales", tuple(self.length_scales))

    def theta_priors(self, dim: int) -> list[PriorDistribution]:
        if len(self.length_scales) == dim:
            return list(self.length_scales)
        if len(self.length_scales) == 1:
            return [self.length_scales[0]] * dim
        raise ValueError(
            f"{len(self.length_scales)} length-scale priors for dimension {dim}"
        )

    def to_dict(self) -> dict:
        return {
            "sigma2": self.sigma2.to_dict(),
            "length_scales": [p.to_dict() for p in self.length_scales],
            "delta": self.delta.to_dict(),
            "noise2": self.noise2.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HyperPriors":
        return cls(
            sigma2=PriorDistribution.from_dict(d["sigma2"]),
            length_scales=tuple(
                PriorDistribution.from_dict(p) for p in d["length_scales"]
            ),
            delta=PriorDistribution.from_dict(d["delta"]),
            noise2=PriorDistribution.from_dict(d["noise2"]),
        )


def default_hyper_priors() -> HyperPriors:
    return HyperPriors()


@dataclass(frozen=True)
class McmcConfig:
    """Chain settings: warmup sweeps discarded, retained draws, chain count.

    Step sizes adapt toward target_accept during warmup only, every
    adapt_window sweeps.
    """

    warmup: int = 500
    draws: int = 500
    chains: int = 1
    target_accept: float = 0.4
    init_step: float = 0.5
    adapt_window: int = 25

    def __post_init__(self) -> None:
        if self.warmup < 0 or self.draws < 1 or self.chains < 1:
            raise ValueError("warmup >= 0, draws >= 1, chains >= 1 required")

    def to_dict(self) -> dict:
        return {
            "warmup": self.warmup,
            "draws": self.draws,
            "chains": self.chains,
            "target_accept": self.target_accept,
            "init_step": self.init_step,
            "adapt_window": self.adapt_window,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "McmcConfig":
        return cls(**d)


@dataclass(frozen=True)
class DrawRecord:
    """One retained posterior draw."""

    hp: KernelHyperParams
    mean_params: tuple


@dataclass(frozen=True)
class PosteriorDraws:
    """Retained draws plus per-chain acceptance diagnostics."""

    draws: tuple[DrawRecord, ...]
    diagnostics: dict

    def __post_init__(self) -> None:
        object.__setattr__(self, "draws", tuple(self.draws))
        if len(self.draws) < 1:
            raise ValueError("at least one draw required")

    def __len__(self) -> int:
        return len(self.draws)

    def to_dict(self) -> dict:
        return {
            "draws": [
                {
                    "sigma2": rec.hp.sigma2,
                    "length_scales": rec.hp.length_scales.tolist(),
                    "delta": rec.hp.delta,
                    "noise2": rec.hp.noise2,
                    "spatial_family": rec.hp.spatial_family,
                    "mean_params": list(rec.mean_params),
                }
                for rec in self.draws
            ],
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PosteriorDraws":
        recs = tuple(
            DrawRecord(
                hp=KernelHyperParams(
                    sigma2=r["sigma2"],
                    length_scales=np.array(r["length_scales"]),
                    delta=r["delta"],
                    noise2=r["noise2"],
                    spatial_family=r["spatial_family"],
                ),
                mean_params=tuple(r["mean_params"]),
            )
            for r in d["draws"]
        )
        return cls(draws=recs, diagnostics=d["diagnostics"])


@dataclass(frozen=True)
class PosteriorPrediction:
    """Aggregated posterior mean and variance per grid point and fidelity."""

    grid: np.ndarray
    mu_hf: np.ndarray
    var_hf: np.ndarray
    mu_lf: np.ndarray
    var_lf: np.ndarray

    def __post_init__(self) -> None:
        n = np.asarray(self.grid).shape[0]
        for name in ("mu_hf", "var_hf", "mu_lf", "var_lf"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape[0] != n:
                raise ValueError(f"{name} length {v.shape[0]} != grid length {n}")
            object.__setattr__(self, name, v)
        if np.any(self.var_hf < 0) or np.any(self.var_lf < 0):
            raise ValueError("variances must be nonnegative")


def _mean_values(
    mean, params: tuple, x: np.ndarray, f: np.ndarray | None = None
) -> np.ndarray:
    """Structured-mean value per row. The mean model encodes knowledge of
    the high-fidelity function, so low-fidelity rows keep the zero mean."""
    if mean is None:
        return np.zeros(np.asarray(x).shape[0])
    vals = np.asarray(mean.values(params, x), dtype=float)
    if f is not None:
        vals = np.where(np.asarray(f) == 1, vals, 0.0)
    return vals


def log_marginal_likelihood(
    data: Dataset,
    hp: KernelHyperParams,
    mean: MeanModelSpec | None = None,
    mean_params: tuple = (),
) -> float:
    """Gaussian log marginal likelihood of (y - m(X)) under the noisy kernel,
    where m applies to high-fidelity rows and is zero elsewhere.

    Deterministic in its inputs. Raises FactorizationError (naming the
    hyperparameters) if the jittered covariance cannot be factorized.
    """
    x, f, y = data.x_matrix, data.f_vector, data.outputs
    resid = y - _mean_values(mean, mean_params, x, f)
    k = covariance_matrix_from_arrays(x, f, hp, include_noise=True)
    try:
        cho = cho_factor(k, lower=True)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(
            f"covariance factorization failed for {hp}"
        ) from exc
    alpha = cho_solve(cho, resid)
    log_det = 2.0 * float(np.sum(np.log(np.diag(cho[0]))))
    n = len(data)
    return float(
        -0.5 * float(resid @ alpha) - 0.5 * log_det - 0.5 * n * np.log(2.0 * np.pi)
    )


# --------------------------------------------------------------------------
# MCMC over the joint (hyperparameters, mean parameters) posterior
# --------------------------------------------------------------------------


class _ParamSpace:
    """Flattened view of the free (non-pointmass) parameters.

    Order: sigma2, theta_0..theta_{d-1}, delta, noise2, then mean a, b, c.
    Point-mass parameters stay pinned and never enter the sampled vector.
    """

    def __init__(
        self, priors: HyperPriors, mean: MeanModelSpec | None, dim: int,
        spatial_family: str,
    ) -> None:
        self.spatial_family = spatial_family
        self.dim = dim
        names = ["sigma2"] + [f"theta_{m}" for m in range(dim)] + ["delta", "noise2"]
        plist = [priors.sigma2] + priors.theta_priors(dim) + [priors.delta, priors.noise2]
        self.n_mean = mean.n_params if mean is not None else 0
        if self.n_mean:
            names += ["mean_a", "mean_b", "mean_c"]
            plist += mean.priors_in_order()
        self.names = names
        self.priors = plist
        self.free_idx = [i for i, p in enumerate(plist) if not p.is_fixed]
        self.pinned = {
            i: p.value for i, p in enumerate(plist) if p.is_fixed
        }

    def constrained(self, u_free: np.ndarray) -> np.ndarray:
        """Full constrained vector from the free unconstrained coordinates."""
        v = np.empty(len(self.priors))
        for slot, i in enumerate(self.free_idx):
            v[i] = self.priors[i].from_unconstrained(u_free[slot])
        for i, val in self.pinned.items():
            v[i] = val
        return v

    def initial_unconstrained(self, rng: np.random.Generator) -> np.ndarray:
        u = np.empty(len(self.free_idx))
        for slot, i in enumerate(self.free_idx):
            u[slot] = self.priors[i].to_unconstrained(self.priors[i].sample(rng))
        return u

    def log_prior(self, v: np.ndarray, u_free: np.ndarray) -> float:
        lp = 0.0
        for slot, i in enumerate(self.free_idx):
            lp += self.priors[i].log_pdf(v[i])
            lp += self.priors[i].log_jacobian(u_free[slot])
        return lp

    def split(self, v: np.ndarray) -> tuple[KernelHyperParams, tuple]:
        d = self.dim
        hp = KernelHyperParams(
            sigma2=v[0],
            length_scales=v[1 : 1 + d],
            delta=v[1 + d],
            noise2=v[2 + d],
            spatial_family=self.spatial_family,
        )
        mean_params = tuple(v[3 + d :]) if self.n_mean else ()
        return hp, mean_params


class _LmlWorkspace:
    """Precomputed pairwise distances so repeated likelihood evaluations
    reduce to elementwise array work."""

    def __init__(self, data: Dataset) -> None:
        x, f = data.x_matrix, data.f_vector
        self.abs_diff = np.abs(x[:, None, :] - x[None, :, :])  # (n, n, d)
        self.fid_gap = np.abs(f[:, None] - f[None, :])  # (n, n)
        self.x = x
        self.f = f
        self.y = data.outputs
        self.n = x.shape[0]
        self.eye = np.eye(self.n)

    def log_marginal(
        self, hp: KernelHyperParams, mean, mean_params: tuple
    ) -> float:
        a = self.abs_diff / hp.length_scales
        if hp.spatial_family == "rbf":
            r = np.exp(-0.5 * np.sum(a * a, axis=-1))
        else:
            s1 = np.sum(a, axis=-1)
            s2 = np.sum(a * a, axis=-1)
            sqrt5 = np.sqrt(5.0)
            r = np.exp(-sqrt5 * s1) * (1.0 + sqrt5 * s1 + (5.0 / 3.0) * s2)
        k = hp.sigma2 * r * np.exp(-hp.delta * self.fid_gap)
        k += (hp.noise2 + JITTER) * self.eye
        resid = self.y - _mean_values(mean, mean_params, self.x, self.f)
        if not (np.all(np.isfinite(resid)) and np.all(np.isfinite(k))):
            return -np.inf
        try:
            cho = cho_factor(k, lower=True)
        except np.linalg.LinAlgError:
            return -np.inf
        alpha = cho_solve(cho, resid)
        log_det = 2.0 * float(np.sum(np.log(np.diag(cho[0]))))
        return float(
            -0.5 * float(resid @ alpha)
            - 0.5 * log_det
            - 0.5 * self.n * np.log(2.0 * np.pi)
        )


def _run_chain(
    space: _ParamSpace,
    ws: _LmlWorkspace,
    mean,
    cfg: McmcConfig,
    rng: np.random.Generator,
) -> tuple[list[DrawRecord], dict]:
    n_free = len(space.free_idx)

    def log_post(u_free: np.ndarray) -> float:
        v = space.constrained(u_free)
        lp = space.log_prior(v, u_free)
        if not np.isfinite(lp):
            return -np.inf
        hp, mean_params = space.split(v)
        return lp + ws.log_marginal(hp, mean, mean_params)

    if n_free == 0:
        # Fully pinned: the posterior is the point itself.
        v = space.constrained(np.empty(0))
        hp, mean_params = space.split(v)
        recs = [DrawRecord(hp=hp, mean_params=mean_params)] * cfg.draws
        return recs, {"acceptance_rates": {}, "overall_acceptance": 1.0}

    u = space.initial_unconstrained(rng)
    lp = log_post(u)
    tries = 0
    while not np.isfinite(lp) and tries < 50:
        u = space.initial_unconstrained(rng)
        lp = log_post(u)
        tries += 1
    if not np.isfinite(lp):
        raise McmcError("could not find a finite-posterior starting point")

    steps = np.full(n_free, cfg.init_step)
    accepted = np.zeros(n_free, dtype=int)
    window_acc = np.zeros(n_free, dtype=int)
    proposed = np.zeros(n_free, dtype=int)
    recs: list[DrawRecord] = []
    adapt_round = 0

    total = cfg.warmup + cfg.draws
    for sweep in range(total):
        warm = sweep < cfg.warmup
        for slot in range(n_free):
            u_prop = u.copy()
            u_prop[slot] += steps[slot] * rng.standard_normal()
            lp_prop = log_post(u_prop)
            proposed[slot] += 1
            if np.log(rng.uniform()) < lp_prop - lp:
                u, lp = u_prop, lp_prop
                accepted[slot] += 1
                if warm:
                    window_acc[slot] += 1
        if warm and (sweep + 1) % cfg.adapt_window == 0:
            adapt_round += 1
            rate = window_acc / cfg.adapt_window
            steps *= np.exp((rate - cfg.target_accept) / np.sqrt(adapt_round))
            window_acc[:] = 0
        if not warm:
            v = space.constrained(u)
            hp, mean_params = space.split(v)
            recs.append(DrawRecord(hp=hp, mean_params=mean_params))

    if int(accepted.sum()) == 0:
        raise McmcError(
            "every proposal was rejected; acceptance diagnostics: "
            + str({n: 0.0 for n in (space.names[i] for i in space.free_idx)})
        )
    rates = {
        space.names[space.free_idx[slot]]: float(accepted[slot] / proposed[slot])
        for slot in range(n_free)
    }
    diagnostics = {
        "acceptance_rates": rates,
        "overall_acceptance": float(accepted.sum() / proposed.sum()),
    }
    return recs, diagnostics


def fit_mcmc(
    data: Dataset,
    priors: HyperPriors,
    mean: MeanModelSpec | None = None,
    mcmc_config: McmcConfig | None = None,
    rng: np.random.Generator | None = None,
    spatial_family: str = "rbf",
) -> PosteriorDraws:
    """Sample the posterior over kernel (and mean) parameters by MCMC.

    Componentwise random-walk Metropolis in unconstrained space; warmup
    sweeps are discarded and step sizes adapt only during warmup, so the
    retained chain is a valid Metropolis sampler. Reproducible given rng.
    """
    cfg = mcmc_config or McmcConfig()
    rng = rng if rng is not None else np.random.default_rng()
    space = _ParamSpace(priors, mean, data.dim, spatial_family)
    ws = _LmlWorkspace(data)
    all_recs: list[DrawRecord] = []
    chain_diags: list[dict] = []
    for _ in range(cfg.chains):
        recs, diag = _run_chain(space, ws, mean, cfg, rng)
        all_recs.extend(recs)
        chain_diags.append(diag)
    diagnostics = dict(chain_diags[0])
    diagnostics["chains"] = chain_diags
    return PosteriorDraws(draws=tuple(all_recs), diagnostics=diagnostics)


# --------------------------------------------------------------------------
# Posterior prediction
# --------------------------------------------------------------------------


def _conditional(
    ws_x: np.ndarray,
    ws_f: np.ndarray,
    y: np.ndarray,
    rec: DrawRecord,
    mean,
    grid: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Exact GP conditional mean/variance at (grid, f=1) and (grid, f=0)."""
    hp, params = rec.hp, rec.mean_params
    k = covariance_matrix_from_arrays(ws_x, ws_f, hp, include_noise=True)
    try:
        cho = cho_factor(k, lower=True)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(
            f"covariance factorization failed for {hp}"
        ) from exc
    resid = y - _mean_values(mean, params, ws_x, ws_f)
    alpha = cho_solve(cho, resid)
    out = []
    g = grid.shape[0]
    for f_star in (1.0, 0.0):
        m_grid = _mean_values(mean, params, grid, np.full(g, f_star))
        k_star = cross_covariance_from_arrays(
            grid, np.full(g, f_star), ws_x, ws_f, hp
        )
        mu = m_grid + k_star @ alpha
        w = cho_solve(cho, k_star.T)
        var = hp.sigma2 - np.sum(k_star * w.T, axis=1)
        out.append((mu, np.maximum(var, 0.0)))
    (mu_hf, var_hf), (mu_lf, var_lf) = out
    return mu_hf, var_hf, mu_lf, var_lf


def predict(
    data: Dataset,
    draws: PosteriorDraws,
    mean: MeanModelSpec | None = None,
    grid: np.ndarray | None = None,
) -> PosteriorPrediction:
    """Posterior means/variances on the grid at both fidelities.

    Per draw the exact conditional is computed with the mean model added
    back at the high-fidelity level; draws aggregate by the law of total
    variance (mean of variances plus the population variance of the means).
    """
    if grid is None or np.asarray(grid).shape[0] == 0:
        raise ValueError("grid must be nonempty")
    grid = np.asarray(grid, dtype=float)
    grid2d = grid[:, None] if grid.ndim == 1 else grid
    x, f, y = data.x_matrix, data.f_vector, data.outputs

    s = len(draws)
    g = grid2d.shape[0]
    mus_h = np.empty((s, g))
    vars_h = np.empty((s, g))
    mus_l = np.empty((s, g))
    vars_l = np.empty((s, g))
    for i, rec in enumerate(draws.draws):
        mus_h[i], vars_h[i], mus_l[i], vars_l[i] = _conditional(
            x, f, y, rec, mean, grid2d
        )

    def aggregate(mus: np.ndarray, vs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mu = mus.mean(axis=0)
        var = vs.mean(axis=0) + np.maximum(
            (mus * mus).mean(axis=0) - mu * mu, 0.0
        )
        return mu, var

    mu_hf, var_hf = aggregate(mus_h, vars_h)
    mu_lf, var_lf = aggregate(mus_l, vars_l)
    return PosteriorPrediction(
        grid=grid, mu_hf=mu_hf, var_hf=var_hf, mu_lf=mu_lf, var_lf=var_lf
    )
