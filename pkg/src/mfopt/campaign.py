"""The optimization loop: seeded initialization, fit/predict/acquire/
evaluate/augment steps, stall detection, mid-run policy changes, the
single-fidelity baseline mode, scripted interactive runs, MSE scoring
against ground truth, and the versioned JSON persistence format.

Determinism: every random draw comes from a generator derived as
SeedSequence([rng_seed, purpose, index]), where index is the iteration
or evaluation counter. A restored campaign therefore continues exactly
where the original would have, without serializing generator state.

Data standardization happens here, per refit: inputs min-max scaled to
[0, 1] over the current domain and outputs z-scored, so the bounded
hyperparameter priors act on a common scale across objectives. A
structured mean is wrapped in the matching affine view; its parameter
priors stay in original units. Predictions are mapped back before the
acquisition sees them.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import SCHEMA_VERSION
from .acquisition import AcquisitionConfig, mf_acquisition, select_next
from .mean_models import MeanModelSpec, ShiftedScaledMean, zero_mean
from .mf_kernel import SPATIAL_FAMILIES, FidelityPoint
from .mfgp import (
    Dataset,
    FactorizationError,
    HyperPriors,
    McmcConfig,
    McmcError,
    PosteriorPrediction,
    default_hyper_priors,
    fit_mcmc,
    predict,
)
from .objectives import (
    PROBLEM_IDS,
    IsingConfig,
    eval_analytic,
    scan_heat_capacity,
    simulate_heat_capacity,
)

__all__ = [
    "CampaignError",
    "PolicyRejected",
    "SchemaVersionError",
    "ObjectiveSpec",
    "InitFidelityRule",
    "SurrogateConfig",
    "CampaignConfig",
    "PolicyChange",
    "PolicyRecord",
    "IterationRecord",
    "CampaignState",
    "ScriptedPolicy",
    "build_grid",
    "derived_rng",
    "evaluate_objective",
    "initialize",
    "step",
    "check_stall",
    "should_prompt",
    "apply_policy_change",
    "run_noninteractive",
    "run_single_fidelity_baseline",
    "run_scripted",
    "replay_campaign",
    "compute_mse",
    "ground_truth_for",
    "config_after_changes",
    "state_to_dict",
    "state_from_dict",
    "save_campaign",
    "load_campaign",
    "observations_csv",
    "histories_equal",
]

MODE_NONINTERACTIVE = "non_interactive"
MODE_INTERACTIVE = "interactive"
MODE_BASELINE = "single_fidelity_baseline"
MODES = (MODE_NONINTERACTIVE, MODE_INTERACTIVE, MODE_BASELINE)

STATUS_RUNNING = "running"
STATUS_AWAITING_POLICY = "awaiting_policy"
STATUS_CONVERGED = "converged"
STATUS_STOPPED = "stopped"
STATUSES = (STATUS_RUNNING, STATUS_AWAITING_POLICY, STATUS_CONVERGED, STATUS_STOPPED)

POLICY_KINDS = (
    "parameter_space",
    "surrogate",
    "cost_ratio",
    "convergence",
    "force_final_high_fidelity",
    "stop",
    "no_change",
)

# Grid candidates this close to a sampled location (same fidelity) are
# never re-proposed.
PROXIMITY_TOL = 1.0e-9

# Stream purposes for SeedSequence([seed, purpose, index]).
PURPOSE_INIT = 0
PURPOSE_MCMC = 1
PURPOSE_OBJECTIVE = 2
PURPOSE_FALLBACK = 3


class CampaignError(RuntimeError):
    """A campaign operation violated its precondition or failed."""


class PolicyRejected(ValueError):
    """A policy change failed validation and was not applied."""


class SchemaVersionError(ValueError):
    """A persisted document's schema version cannot be loaded."""


def derived_rng(seed: int, purpose: int, index: int) -> np.random.Generator:
    """The campaign's only source of randomness."""
    return np.random.default_rng(np.random.SeedSequence([seed, purpose, index]))


# ---------------------------------------------------------------------------
# Configuration types


@dataclass(frozen=True)
class ObjectiveSpec:
    """Which built-in objective a campaign optimizes.

    problem1 / problem2 are the analytic pair on [0, 10]. "ising" maps x
    to the coupling J and needs one lattice config per fidelity; their
    rng_seed fields are ignored (per-evaluation seeds come from the
    campaign stream).
    """

    objective_id: str
    ising_low: IsingConfig | None = None
    ising_high: IsingConfig | None = None

    def __post_init__(self) -> None:
        if self.objective_id in PROBLEM_IDS:
            if self.ising_low is not None or self.ising_high is not None:
                raise ValueError(
                    f"{self.objective_id} takes no lattice configs"
                )
        elif self.objective_id == "ising":
            if self.ising_low is None or self.ising_high is None:
                raise ValueError(
                    "ising objective requires ising_low and ising_high configs"
                )
        else:
            raise ValueError(f"unknown objective_id {self.objective_id!r}")

    def to_dict(self) -> dict:
        return {
            "objective_id": self.objective_id,
            "ising_low": None if self.ising_low is None else self.ising_low.to_dict(),
            "ising_high": None
            if self.ising_high is None
            else self.ising_high.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ObjectiveSpec":
        return cls(
            objective_id=d["objective_id"],
            ising_low=None
            if d.get("ising_low") is None
            else IsingConfig.from_dict(d["ising_low"]),
            ising_high=None
            if d.get("ising_high") is None
            else IsingConfig.from_dict(d["ising_high"]),
        )


@dataclass(frozen=True)
class InitFidelityRule:
    """How initialization assigns fidelities: an independent fair coin per
    sample, or fixed low/high counts (e.g. 7/3, 6/4)."""

    kind: str = "coin"
    n_low: int | None = None
    n_high: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("coin", "fixed"):
            raise ValueError("init_fidelity_rule kind must be 'coin' or 'fixed'")
        if self.kind == "fixed":
            if self.n_low is None or self.n_high is None:
                raise ValueError("fixed rule requires n_low and n_high")
            if self.n_low < 0 or self.n_high < 0:
                raise ValueError("fixed rule counts must be nonnegative")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n_low": self.n_low, "n_high": self.n_high}

    @classmethod
    def from_dict(cls, d: dict) -> "InitFidelityRule":
        return cls(kind=d["kind"], n_low=d.get("n_low"), n_high=d.get("n_high"))


@dataclass(frozen=True)
class SurrogateConfig:
    """Kernel family, mean model, and inference settings for the MFGP."""

    spatial_family: str = "rbf"
    mean: MeanModelSpec = field(default_factory=zero_mean)
    hyper_priors: HyperPriors = field(default_factory=default_hyper_priors)
    mcmc: McmcConfig = field(default_factory=McmcConfig)

    def __post_init__(self) -> None:
        if self.spatial_family not in SPATIAL_FAMILIES:
            raise ValueError(f"spatial_family must be one of {SPATIAL_FAMILIES}")

    def to_dict(self) -> dict:
        return {
            "spatial_family": self.spatial_family,
            "mean": self.mean.to_dict(),
            "hyper_priors": self.hyper_priors.to_dict(),
            "mcmc": self.mcmc.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SurrogateConfig":
        return cls(
            spatial_family=d["spatial_family"],
            mean=MeanModelSpec.from_dict(d["mean"]),
            hyper_priors=HyperPriors.from_dict(d["hyper_priors"]),
            mcmc=McmcConfig.from_dict(d["mcmc"]),
        )


@dataclass(frozen=True)
class CampaignConfig:
    """Everything a run needs; (config, rng_seed) fixes the trajectory.

    max_iterations of 0 is allowed and means initialization only (the
    stated floor of 1 would make that documented behavior unreachable).
    """

    objective: ObjectiveSpec
    domain: tuple[tuple[float, float], ...]
    init_count: int
    max_iterations: int
    grid_resolution: int = 201
    init_fidelity_rule: InitFidelityRule = field(default_factory=InitFidelityRule)
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)
    stall_window: int = 5
    rng_seed: int = 0
    mode: str = MODE_NONINTERACTIVE

    def __post_init__(self) -> None:
        dom = tuple(
            (float(lo), float(hi)) for lo, hi in self.domain
        )
        object.__setattr__(self, "domain", dom)
        if len(dom) < 1:
            raise ValueError("domain must have at least one dimension")
        for lo, hi in dom:
            if not lo < hi:
                raise ValueError(f"domain interval [{lo}, {hi}] is empty")
        if self.init_count < 2:
            raise ValueError(f"init_count must be >= 2, got {self.init_count}")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if self.stall_window < 1:
            raise ValueError("stall_window must be >= 1")
        if self.grid_resolution < 2:
            raise ValueError("grid_resolution must be >= 2")
        if self.rng_seed < 0:
            raise ValueError("rng_seed must be a nonnegative integer")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        rule = self.init_fidelity_rule
        if rule.kind == "fixed" and rule.n_low + rule.n_high != self.init_count:
            raise ValueError(
                f"fixed fidelity counts {rule.n_low}+{rule.n_high} "
                f"!= init_count {self.init_count}"
            )

    def to_dict(self) -> dict:
        return {
            "objective": self.objective.to_dict(),
            "domain": [[lo, hi] for lo, hi in self.domain],
            "init_count": self.init_count,
            "max_iterations": self.max_iterations,
            "grid_resolution": self.grid_resolution,
            "init_fidelity_rule": self.init_fidelity_rule.to_dict(),
            "acquisition": self.acquisition.to_dict(),
            "surrogate": self.surrogate.to_dict(),
            "stall_window": self.stall_window,
            "rng_seed": self.rng_seed,
            "mode": self.mode,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CampaignConfig":
        return cls(
            objective=ObjectiveSpec.from_dict(d["objective"]),
            domain=tuple((lo, hi) for lo, hi in d["domain"]),
            init_count=d["init_count"],
            max_iterations=d["max_iterations"],
            grid_resolution=d.get("grid_resolution", 201),
            init_fidelity_rule=InitFidelityRule.from_dict(d["init_fidelity_rule"]),
            acquisition=AcquisitionConfig.from_dict(d["acquisition"]),
            surrogate=SurrogateConfig.from_dict(d["surrogate"]),
            stall_window=d.get("stall_window", 5),
            rng_seed=d["rng_seed"],
            mode=d.get("mode", MODE_NONINTERACTIVE),
        )


# ---------------------------------------------------------------------------
# Policy changes


@dataclass(frozen=True)
class PolicyChange:
    """One operator decision: mutate a config field, force the final
    high-fidelity evaluation, stop, or explicitly change nothing."""

    kind: str
    new_bounds: tuple[tuple[float, float], ...] | None = None
    new_mean: MeanModelSpec | None = None
    new_spatial_family: str | None = None
    new_cost_ratio: float | None = None
    new_max_iterations: int | None = None
    issued_at: int = 0
    issuer: str = "human"

    def __post_init__(self) -> None:
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"kind must be one of {POLICY_KINDS}")
        if self.issuer not in ("human", "scripted"):
            raise ValueError("issuer must be 'human' or 'scripted'")
        if self.kind == "parameter_space":
            if not self.new_bounds:
                raise ValueError("parameter_space change requires new_bounds")
            nb = tuple((float(lo), float(hi)) for lo, hi in self.new_bounds)
            object.__setattr__(self, "new_bounds", nb)
            for lo, hi in nb:
                if not lo < hi:
                    raise ValueError(f"interval [{lo}, {hi}] is empty")
        elif self.kind == "surrogate":
            if self.new_mean is None and self.new_spatial_family is None:
                raise ValueError(
                    "surrogate change requires new_mean or new_spatial_family"
                )
            if (
                self.new_spatial_family is not None
                and self.new_spatial_family not in SPATIAL_FAMILIES
            ):
                raise ValueError(
                    f"new_spatial_family must be one of {SPATIAL_FAMILIES}"
                )
        elif self.kind == "cost_ratio":
            if self.new_cost_ratio is None or not self.new_cost_ratio > 0:
                raise ValueError("cost_ratio change requires new_cost_ratio > 0")
        elif self.kind == "convergence":
            if self.new_max_iterations is None or self.new_max_iterations < 0:
                raise ValueError(
                    "convergence change requires a nonnegative new_max_iterations"
                )

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "new_bounds": None
            if self.new_bounds is None
            else [[lo, hi] for lo, hi in self.new_bounds],
            "new_mean": None if self.new_mean is None else self.new_mean.to_dict(),
            "new_spatial_family": self.new_spatial_family,
            "new_cost_ratio": self.new_cost_ratio,
            "new_max_iterations": self.new_max_iterations,
            "issued_at": self.issued_at,
            "issuer": self.issuer,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyChange":
        return cls(
            kind=d["kind"],
            new_bounds=None
            if d.get("new_bounds") is None
            else tuple((lo, hi) for lo, hi in d["new_bounds"]),
            new_mean=None
            if d.get("new_mean") is None
            else MeanModelSpec.from_dict(d["new_mean"]),
            new_spatial_family=d.get("new_spatial_family"),
            new_cost_ratio=d.get("new_cost_ratio"),
            new_max_iterations=d.get("new_max_iterations"),
            issued_at=d.get("issued_at", 0),
            issuer=d.get("issuer", "human"),
        )


@dataclass(frozen=True)
class PolicyRecord:
    """Audit-log entry: the change plus the iteration it took effect at."""

    change: PolicyChange
    applied_at: int

    def to_dict(self) -> dict:
        return {"change": self.change.to_dict(), "applied_at": self.applied_at}

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyRecord":
        return cls(
            change=PolicyChange.from_dict(d["change"]), applied_at=d["applied_at"]
        )


@dataclass(frozen=True)
class IterationRecord:
    """One completed step. wall_time_s is informational and excluded from
    replay comparisons."""

    iteration: int
    x: tuple[float, ...]
    fidelity: int
    y: float
    acquisition_value: float
    fallback: bool
    best_y: float
    wall_time_s: float

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "x": list(self.x),
            "fidelity": self.fidelity,
            "y": self.y,
            "acquisition_value": self.acquisition_value,
            "fallback": self.fallback,
            "best_y": self.best_y,
            "wall_time_s": self.wall_time_s,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IterationRecord":
        return cls(
            iteration=d["iteration"],
            x=tuple(float(v) for v in d["x"]),
            fidelity=int(d["fidelity"]),
            y=float(d["y"]),
            acquisition_value=float(d["acquisition_value"]),
            fallback=bool(d["fallback"]),
            best_y=float(d["best_y"]),
            wall_time_s=float(d["wall_time_s"]),
        )


@dataclass
class CampaignState:
    """Mutable run state. config is the live (possibly policy-mutated)
    config; initial_config is what initialize saw, so the policy_log fully
    explains any difference between the two."""

    config: CampaignConfig
    initial_config: CampaignConfig
    dataset: Dataset
    iteration: int = 0
    best_x: tuple[float, ...] = ()
    best_f: int = 1
    best_y: float = float("-inf")
    history: list[IterationRecord] = field(default_factory=list)
    policy_log: list[PolicyRecord] = field(default_factory=list)
    status: str = STATUS_RUNNING
    eval_count: int = 0
    force_final_high_fidelity: bool = False
    last_prompt_iteration: int | None = None
    diagnostic: str | None = None
    # Transient, for snapshots only; rebuilt by the next step after restore.
    last_prediction: PosteriorPrediction | None = field(
        default=None, repr=False, compare=False
    )
    last_acquisition: object | None = field(default=None, repr=False, compare=False)


# ---------------------------------------------------------------------------
# Objective evaluation and candidate grid


def evaluate_objective(
    spec: ObjectiveSpec, x: np.ndarray, f: int, rng: np.random.Generator
) -> float:
    """One observation of the objective at location x, fidelity f."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if f not in (0, 1):
        raise ValueError(f"fidelity must be 0 or 1, got {f}")
    if spec.objective_id in PROBLEM_IDS:
        return float(eval_analytic(spec.objective_id, float(x[0]), f))
    template = spec.ising_high if f == 1 else spec.ising_low
    cfg = replace(
        template,
        j_coupling=float(x[0]),
        rng_seed=int(rng.integers(0, 2**31 - 1)),
    )
    return float(simulate_heat_capacity(cfg))


def build_grid(cfg: CampaignConfig) -> np.ndarray:
    """Uniform candidate grid over the current domain, shape (g, d)."""
    if len(cfg.domain) != 1:
        raise ValueError(
            "candidate grids are built for 1-D parameter spaces only"
        )
    lo, hi = cfg.domain[0]
    return np.linspace(lo, hi, cfg.grid_resolution)[:, None]


def _eligibility(
    grid: np.ndarray, dataset: Dataset
) -> tuple[np.ndarray, np.ndarray]:
    """Masks of grid points not within PROXIMITY_TOL of a same-fidelity
    observation."""
    g = grid.shape[0]
    eligible_high = np.ones(g, dtype=bool)
    eligible_low = np.ones(g, dtype=bool)
    if len(dataset) == 0:
        return eligible_high, eligible_low
    obs_x = dataset.x_matrix
    obs_f = dataset.f_vector
    for row, fv in zip(obs_x, obs_f):
        hit = np.max(np.abs(grid - row[None, :]), axis=1) <= PROXIMITY_TOL
        if fv == 1:
            eligible_high[hit] = False
        else:
            eligible_low[hit] = False
    return eligible_high, eligible_low


# ---------------------------------------------------------------------------
# Core operations


def initialize(cfg: CampaignConfig) -> CampaignState:
    """Sample init_count locations uniformly, assign fidelities per the
    rule (always high fidelity in baseline mode), evaluate, set best."""
    build_grid(cfg)  # validates dimensionality up front
    rng = derived_rng(cfg.rng_seed, PURPOSE_INIT, 0)
    j = cfg.init_count
    d = len(cfg.domain)
    lo = np.array([b[0] for b in cfg.domain])
    hi = np.array([b[1] for b in cfg.domain])
    x = rng.uniform(lo, hi, size=(j, d))
    rule = cfg.init_fidelity_rule
    if cfg.mode == MODE_BASELINE:
        f = np.ones(j, dtype=int)
    elif rule.kind == "coin":
        f = rng.integers(0, 2, size=j)
    else:
        f = rng.permutation(
            np.array([0] * rule.n_low + [1] * rule.n_high, dtype=int)
        )
    ys = np.empty(j)
    for i in range(j):
        ys[i] = evaluate_objective(
            cfg.objective, x[i], int(f[i]), derived_rng(cfg.rng_seed, PURPOSE_OBJECTIVE, i)
        )
    best = int(np.argmax(ys))
    return CampaignState(
        config=cfg,
        initial_config=cfg,
        dataset=Dataset.from_arrays(x, f, ys),
        best_x=tuple(float(v) for v in x[best]),
        best_f=int(f[best]),
        best_y=float(ys[best]),
        eval_count=j,
    )


def step(state: CampaignState) -> CampaignState:
    """One fit -> predict -> acquire -> evaluate -> augment iteration."""
    if state.status != STATUS_RUNNING:
        raise CampaignError(f"cannot step a campaign with status {state.status!r}")
    cfg = state.config
    if state.iteration >= cfg.max_iterations:
        raise CampaignError(
            f"iteration budget exhausted (k = {state.iteration}, M = "
            f"{cfg.max_iterations})"
        )
    t0 = time.perf_counter()
    k = state.iteration
    grid = build_grid(cfg)

    pred, err = _fit_predict(state, grid, k)
    if pred is None:
        if cfg.mode == MODE_INTERACTIVE:
            state.status = STATUS_AWAITING_POLICY
            state.diagnostic = err
            return state
        raise CampaignError(err)

    acq_cfg = cfg.acquisition
    if cfg.mode == MODE_BASELINE:
        acq_cfg = replace(acq_cfg, cost_ratio=1.0)
    acq = mf_acquisition(pred, y_best=state.best_y, cfg=acq_cfg)
    eligible_high, eligible_low = _eligibility(grid, state.dataset)
    if cfg.mode == MODE_BASELINE or state.force_final_high_fidelity:
        eligible_low[:] = False
    acq = acq.with_eligibility(eligible_high, eligible_low)
    sel = select_next(acq, rng=derived_rng(cfg.rng_seed, PURPOSE_FALLBACK, k))

    y_new = evaluate_objective(
        cfg.objective,
        sel.x,
        sel.f,
        derived_rng(cfg.rng_seed, PURPOSE_OBJECTIVE, state.eval_count),
    )
    state.dataset = state.dataset.append(
        FidelityPoint(x=np.asarray(sel.x, dtype=float), f=sel.f), y_new
    )
    state.eval_count += 1
    state.iteration = k + 1
    if y_new > state.best_y:
        state.best_y = float(y_new)
        state.best_x = tuple(float(v) for v in np.atleast_1d(sel.x))
        state.best_f = int(sel.f)
    state.history.append(
        IterationRecord(
            iteration=state.iteration,
            x=tuple(float(v) for v in np.atleast_1d(sel.x)),
            fidelity=int(sel.f),
            y=float(y_new),
            acquisition_value=float(sel.value),
            fallback=bool(sel.fallback),
            best_y=state.best_y,
            wall_time_s=time.perf_counter() - t0,
        )
    )
    state.last_prediction = pred
    state.last_acquisition = acq
    if state.force_final_high_fidelity:
        state.force_final_high_fidelity = False
        state.status = STATUS_STOPPED
    elif state.iteration >= cfg.max_iterations:
        state.status = STATUS_CONVERGED
    return state


def _fit_predict(
    state: CampaignState, grid: np.ndarray, mcmc_index: int
) -> tuple[PosteriorPrediction | None, str | None]:
    """Standardize, fit the MFGP by MCMC, predict on the grid, map back to
    original units. Returns (prediction, None) or (None, diagnostic)."""
    cfg = state.config
    x = state.dataset.x_matrix
    f = state.dataset.f_vector
    y = state.dataset.outputs
    lo = np.array([b[0] for b in cfg.domain])
    rng_x = np.array([b[1] - b[0] for b in cfg.domain])
    y_shift = float(np.mean(y))
    y_scale = float(np.std(y))
    if y_scale < 1.0e-12:
        y_scale = 1.0
    data_std = Dataset.from_arrays((x - lo) / rng_x, f, (y - y_shift) / y_scale)
    mean = None
    if cfg.surrogate.mean.kind != "zero":
        # 1-D campaigns only, so the scalar affine view is enough.
        mean = ShiftedScaledMean(
            cfg.surrogate.mean, float(lo[0]), float(rng_x[0]), y_shift, y_scale
        )
    try:
        draws = fit_mcmc(
            data_std,
            cfg.surrogate.hyper_priors,
            mean=mean,
            mcmc_config=cfg.surrogate.mcmc,
            rng=derived_rng(cfg.rng_seed, PURPOSE_MCMC, mcmc_index),
            spatial_family=cfg.surrogate.spatial_family,
        )
        pred_std = predict(data_std, draws, mean=mean, grid=(grid - lo) / rng_x)
    except (FactorizationError, McmcError) as exc:
        return None, f"surrogate fit failed: {exc}"
    return (
        PosteriorPrediction(
            grid=grid,
            mu_hf=pred_std.mu_hf * y_scale + y_shift,
            var_hf=pred_std.var_hf * y_scale * y_scale,
            mu_lf=pred_std.mu_lf * y_scale + y_shift,
            var_lf=pred_std.var_lf * y_scale * y_scale,
        ),
        None,
    )


def check_stall(state: CampaignState) -> bool:
    """True iff the last stall_window completed iterations produced no
    output exceeding the best recorded before that window."""
    w = state.config.stall_window
    k = len(state.history)
    if k < w:
        return False
    if k > w:
        prior_best = state.history[k - w - 1].best_y
    else:
        j = state.initial_config.init_count
        prior_best = float(np.max(state.dataset.outputs[:j]))
    recent_max = max(r.y for r in state.history[k - w :])
    return recent_max <= prior_best


def should_prompt(state: CampaignState) -> bool:
    """Stall prompt cadence: fire on stall, then not again until another
    stall_window iterations have completed since the last prompt."""
    if state.status != STATUS_RUNNING:
        return False
    if not check_stall(state):
        return False
    if state.last_prompt_iteration is None:
        return True
    return state.iteration - state.last_prompt_iteration >= state.config.stall_window


def apply_policy_change(state: CampaignState, change: PolicyChange) -> CampaignState:
    """Validate and apply one policy change, append it to the audit log."""
    if state.status not in (STATUS_RUNNING, STATUS_AWAITING_POLICY):
        raise PolicyRejected(
            f"cannot change policy in terminal status {state.status!r}"
        )
    cfg = state.config
    kind = change.kind
    if kind == "parameter_space":
        if len(change.new_bounds) != len(cfg.domain):
            raise PolicyRejected(
                f"new bounds have {len(change.new_bounds)} dimensions, "
                f"domain has {len(cfg.domain)}"
            )
        cfg = replace(cfg, domain=change.new_bounds)
    elif kind == "surrogate":
        sur = cfg.surrogate
        if change.new_mean is not None:
            sur = replace(sur, mean=change.new_mean)
        if change.new_spatial_family is not None:
            sur = replace(sur, spatial_family=change.new_spatial_family)
        cfg = replace(cfg, surrogate=sur)
    elif kind == "cost_ratio":
        cfg = replace(
            cfg, acquisition=replace(cfg.acquisition, cost_ratio=change.new_cost_ratio)
        )
    elif kind == "convergence":
        if change.new_max_iterations <= state.iteration:
            raise PolicyRejected(
                f"M_new = {change.new_max_iterations} must exceed the current "
                f"iteration k = {state.iteration}"
            )
        cfg = replace(cfg, max_iterations=change.new_max_iterations)
    elif kind == "force_final_high_fidelity":
        state.force_final_high_fidelity = True
    # "stop" and "no_change" touch no config field.
    state.config = cfg
    state.policy_log.append(PolicyRecord(change=change, applied_at=state.iteration))
    if kind == "stop":
        state.status = STATUS_STOPPED
    elif state.status == STATUS_AWAITING_POLICY:
        state.status = STATUS_RUNNING
        state.diagnostic = None
    return state


def config_after_changes(
    initial: CampaignConfig, policy_log: list[PolicyRecord]
) -> CampaignConfig:
    """Replay only the config effects of the audit log; the result must
    equal the live config (policy audit completeness)."""
    cfg = initial
    for rec in policy_log:
        ch = rec.change
        if ch.kind == "parameter_space":
            cfg = replace(cfg, domain=ch.new_bounds)
        elif ch.kind == "surrogate":
            sur = cfg.surrogate
            if ch.new_mean is not None:
                sur = replace(sur, mean=ch.new_mean)
            if ch.new_spatial_family is not None:
                sur = replace(sur, spatial_family=ch.new_spatial_family)
            cfg = replace(cfg, surrogate=sur)
        elif ch.kind == "cost_ratio":
            cfg = replace(
                cfg, acquisition=replace(cfg.acquisition, cost_ratio=ch.new_cost_ratio)
            )
        elif ch.kind == "convergence":
            cfg = replace(cfg, max_iterations=ch.new_max_iterations)
    return cfg


# ---------------------------------------------------------------------------
# Run drivers


def _run_to_completion(state: CampaignState) -> CampaignState:
    while (
        state.status == STATUS_RUNNING
        and state.iteration < state.config.max_iterations
    ):
        step(state)
    if state.status == STATUS_RUNNING:
        state.status = STATUS_CONVERGED
    return state


def run_noninteractive(cfg: CampaignConfig) -> CampaignState:
    """Initialize, then step until the budget is reached."""
    if cfg.mode != MODE_NONINTERACTIVE:
        raise ValueError(f"run_noninteractive requires mode {MODE_NONINTERACTIVE!r}")
    return _run_to_completion(initialize(cfg))


def run_single_fidelity_baseline(cfg: CampaignConfig) -> CampaignState:
    """High-fidelity-only BO: every observation at f = 1, plain EI (the
    cost ratio is forced to 1 for selection)."""
    if cfg.mode != MODE_BASELINE:
        raise ValueError(
            f"run_single_fidelity_baseline requires mode {MODE_BASELINE!r}"
        )
    return _run_to_completion(initialize(cfg))


@dataclass
class ScriptedPolicy:
    """Headless stand-in for the human operator.

    on_prompt[i] answers the i-th stall prompt (an empty tuple means "no
    change"); prompts beyond the list are answered with no change.
    at_iteration maps an iteration count to changes applied at that step
    boundary, unprompted.
    """

    on_prompt: tuple[tuple[PolicyChange, ...], ...] = ()
    at_iteration: dict[int, tuple[PolicyChange, ...]] = field(default_factory=dict)


def run_scripted(cfg: CampaignConfig, script: ScriptedPolicy) -> CampaignState:
    """Interactive loop with scripted answers; trajectory is identical to
    the same decisions arriving over the service API."""
    if cfg.mode != MODE_INTERACTIVE:
        raise ValueError(f"run_scripted requires mode {MODE_INTERACTIVE!r}")
    state = initialize(cfg)
    prompt_idx = 0
    while True:
        for change in script.at_iteration.get(state.iteration, ()):
            if state.status in (STATUS_RUNNING, STATUS_AWAITING_POLICY):
                apply_policy_change(state, change)
        if (
            state.status != STATUS_RUNNING
            or state.iteration >= state.config.max_iterations
        ):
            break
        step(state)
        if should_prompt(state):
            state.last_prompt_iteration = state.iteration
            if prompt_idx < len(script.on_prompt):
                for change in script.on_prompt[prompt_idx]:
                    apply_policy_change(state, change)
            prompt_idx += 1
        elif state.status == STATUS_AWAITING_POLICY:
            # Fit failure mid-script: answer with the next scripted batch
            # or give up (a headless run cannot wait for a human).
            if prompt_idx < len(script.on_prompt):
                for change in script.on_prompt[prompt_idx]:
                    apply_policy_change(state, change)
                prompt_idx += 1
            else:
                break
    if state.status == STATUS_RUNNING:
        state.status = STATUS_CONVERGED
    return state


def replay_campaign(doc: dict) -> CampaignState:
    """Re-run a persisted campaign from its initial config, re-applying
    the logged policy changes at their recorded iterations."""
    original = state_from_dict(doc)
    by_iteration: dict[int, list[PolicyChange]] = {}
    for rec in original.policy_log:
        by_iteration.setdefault(rec.applied_at, []).append(rec.change)
    state = initialize(original.initial_config)
    while True:
        for change in by_iteration.pop(state.iteration, []):
            apply_policy_change(state, change)
        if (
            state.status != STATUS_RUNNING
            or state.iteration >= state.config.max_iterations
        ):
            break
        step(state)
    if state.status == STATUS_RUNNING:
        state.status = STATUS_CONVERGED
    return state


# ---------------------------------------------------------------------------
# Evaluation against ground truth


def compute_mse(
    state: CampaignState,
    ground_truth: tuple[np.ndarray, np.ndarray],
    interpolate: bool = False,
) -> tuple[float, np.ndarray]:
    """Squared error between the posterior high-fidelity mean (final fit
    on all data) and ground truth per grid point; MSE is their mean."""
    truth_grid = np.asarray(ground_truth[0], dtype=float).reshape(-1)
    truth_vals = np.asarray(ground_truth[1], dtype=float).reshape(-1)
    if truth_grid.shape != truth_vals.shape:
        raise ValueError("ground-truth grid and values differ in length")
    grid = build_grid(state.config)
    gx = grid[:, 0]
    if truth_grid.shape[0] == gx.shape[0] and np.allclose(
        truth_grid, gx, rtol=0.0, atol=1.0e-12
    ):
        vals = truth_vals
    elif interpolate:
        vals = np.interp(gx, truth_grid, truth_vals)
    else:
        raise ValueError(
            "ground-truth grid does not match the prediction grid; "
            "pass interpolate=True to resample it"
        )
    pred, err = _fit_predict(state, grid, state.iteration)
    if pred is None:
        raise CampaignError(err)
    per_point_se = (pred.mu_hf - vals) ** 2
    return float(np.mean(per_point_se)), per_point_se


def ground_truth_for(
    spec: ObjectiveSpec,
    grid: np.ndarray,
    seeds: tuple[int, ...] = (0, 1, 2),
    cache_dir: str | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Ground truth on the given grid: the exact high-fidelity function
    for analytic problems; a seed-averaged dense high-fidelity J-scan for
    Ising, cached to disk when cache_dir is given."""
    gx = np.asarray(grid, dtype=float).reshape(-1)
    if spec.objective_id in PROBLEM_IDS:
        return gx, np.asarray(eval_analytic(spec.objective_id, gx, 1), dtype=float)
    template = spec.ising_high
    key_doc = {
        "cfg": replace(template, rng_seed=0, j_coupling=1.0).to_dict(),
        "grid": [float(gx[0]), float(gx[-1]), int(gx.shape[0])],
        "seeds": [int(s) for s in seeds],
    }
    cache_path = None
    if cache_dir is not None:
        import os

        os.makedirs(cache_dir, exist_ok=True)
        digest = hashlib.sha1(
            json.dumps(key_doc, sort_keys=True).encode()
        ).hexdigest()[:16]
        cache_path = os.path.join(cache_dir, f"ising_truth_{digest}.npz")
        if os.path.exists(cache_path):
            loaded = np.load(cache_path)
            return loaded["grid"], loaded["values"]
    values = scan_heat_capacity(template, gx, [int(s) for s in seeds]).mean(axis=1)
    if cache_path is not None:
        np.savez(cache_path, grid=gx, values=values)
    return gx, values


# ---------------------------------------------------------------------------
# Persistence


def state_to_dict(state: CampaignState) -> dict:
    x = state.dataset.x_matrix
    f = state.dataset.f_vector
    y = state.dataset.outputs
    observations = [
        [*(float(v) for v in x[i]), int(f[i]), float(y[i])] for i in range(len(y))
    ]
    return {
        "schema_version": SCHEMA_VERSION,
        "seed": state.config.rng_seed,
        "config": state.config.to_dict(),
        "initial_config": state.initial_config.to_dict(),
        "observations": observations,
        "history": [r.to_dict() for r in state.history],
        "policy_log": [r.to_dict() for r in state.policy_log],
        "iteration": state.iteration,
        "eval_count": state.eval_count,
        "best": {
            "x": list(state.best_x),
            "fidelity": state.best_f,
            "y": state.best_y,
        },
        "status": state.status,
        "force_final_high_fidelity": state.force_final_high_fidelity,
        "last_prompt_iteration": state.last_prompt_iteration,
        "diagnostic": state.diagnostic,
    }


def state_from_dict(doc: dict) -> CampaignState:
    version = doc.get("schema_version")
    if version is None:
        raise SchemaVersionError("document has no schema_version field")
    if not isinstance(version, int) or version > SCHEMA_VERSION:
        raise SchemaVersionError(
            f"document schema_version {version!r} is newer than the supported "
            f"version {SCHEMA_VERSION}"
        )
    config = CampaignConfig.from_dict(doc["config"])
    initial = CampaignConfig.from_dict(doc["initial_config"])
    obs = doc["observations"]
    d = len(config.domain)
    x = np.array([row[:d] for row in obs], dtype=float).reshape(len(obs), d)
    f = np.array([int(row[d]) for row in obs])
    y = np.array([float(row[d + 1]) for row in obs])
    best = doc["best"]
    return CampaignState(
        config=config,
        initial_config=initial,
        dataset=Dataset.from_arrays(x, f, y),
        iteration=int(doc["iteration"]),
        best_x=tuple(float(v) for v in best["x"]),
        best_f=int(best["fidelity"]),
        best_y=float(best["y"]),
        history=[IterationRecord.from_dict(r) for r in doc["history"]],
        policy_log=[PolicyRecord.from_dict(r) for r in doc["policy_log"]],
        status=doc["status"],
        eval_count=int(doc["eval_count"]),
        force_final_high_fidelity=bool(doc["force_final_high_fidelity"]),
        last_prompt_iteration=doc.get("last_prompt_iteration"),
        diagnostic=doc.get("diagnostic"),
    )


def save_campaign(state: CampaignState, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(state_to_dict(state), fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_campaign(path: str) -> CampaignState:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaVersionError(f"corrupt campaign document: {exc}") from exc
    return state_from_dict(doc)


def observations_csv(state: CampaignState) -> str:
    """CSV of the observation log: x columns, fidelity, y."""
    d = len(state.config.domain)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow([f"x{i}" for i in range(d)] + ["fidelity", "y"])
    x = state.dataset.x_matrix
    f = state.dataset.f_vector
    y = state.dataset.outputs
    for i in range(len(y)):
        writer.writerow(
            [repr(float(v)) for v in x[i]] + [int(f[i]), repr(float(y[i]))]
        )
    return buf.getvalue()


def histories_equal(
    a: list[IterationRecord], b: list[IterationRecord]
) -> bool:
    """Replay equality: every field except wall_time_s must match."""
    if len(a) != len(b):
        return False
    for ra, rb in zip(a, b):
        if (
            ra.iteration != rb.iteration
            or ra.x != rb.x
            or ra.fidelity != rb.fidelity
            or ra.y != rb.y
            or ra.acquisition_value != rb.acquisition_value
            or ra.fallback != rb.fallback
            or ra.best_y != rb.best_y
        ):
            return False
    return True
