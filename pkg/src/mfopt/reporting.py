"""Batch comparison driver: seeded multi-run sweeps of labeled campaign
configs, MSE aggregation against ground truth, and report emission.

The JSON report is a pure function of the plan: runs are sorted by
(label, seed), keys are sorted, and wall times go to a separate timings
document so re-running a plan reproduces the report byte for byte.
"""

from __future__ import annotations

import csv
import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import SCHEMA_VERSION
from .campaign import (
    MODE_BASELINE,
    MODE_INTERACTIVE,
    CampaignConfig,
    CampaignState,
    PolicyChange,
    ScriptedPolicy,
    build_grid,
    compute_mse,
    ground_truth_for,
    run_noninteractive,
    run_scripted,
    run_single_fidelity_baseline,
)
from .mean_models import MeanModelSpec

__all__ = [
    "PlanEntry",
    "ComparisonPlan",
    "run_comparison",
    "structured_switch_preset",
    "script_to_dict",
    "script_from_dict",
    "report_json_bytes",
]

# Ising ground-truth scans are cached on disk; serialize them so parallel
# workers do not race on the same cache file.
_truth_lock = threading.Lock()


def script_to_dict(script: ScriptedPolicy) -> dict:
    return {
        "on_prompt": [
            [c.to_dict() for c in batch] for batch in script.on_prompt
        ],
        "at_iteration": {
            str(k): [c.to_dict() for c in batch]
            for k, batch in sorted(script.at_iteration.items())
        },
    }


def script_from_dict(d: dict) -> ScriptedPolicy:
    return ScriptedPolicy(
        on_prompt=tuple(
            tuple(PolicyChange.from_dict(c) for c in batch)
            for batch in d.get("on_prompt", [])
        ),
        at_iteration={
            int(k): tuple(PolicyChange.from_dict(c) for c in batch)
            for k, batch in d.get("at_iteration", {}).items()
        },
    )


def structured_switch_preset(
    mean: MeanModelSpec,
    new_cost_ratio: float | None = None,
    force_final_at: int | None = None,
) -> ScriptedPolicy:
    """Reusable interactive script: switch the surrogate to the given
    structured mean at the first stall prompt, optionally retune the cost
    ratio at the second, and force one last high-fidelity evaluation at
    the given iteration."""
    batches: list[tuple[PolicyChange, ...]] = [
        (PolicyChange("surrogate", new_mean=mean, issuer="scripted"),)
    ]
    if new_cost_ratio is not None:
        batches.append(
            (
                PolicyChange(
                    "cost_ratio", new_cost_ratio=new_cost_ratio, issuer="scripted"
                ),
            )
        )
    at: dict[int, tuple[PolicyChange, ...]] = {}
    if force_final_at is not None:
        at[force_final_at] = (
            PolicyChange("force_final_high_fidelity", issuer="scripted"),
        )
    return ScriptedPolicy(on_prompt=tuple(batches), at_iteration=at)


@dataclass(frozen=True)
class PlanEntry:
    label: str
    config: CampaignConfig
    seeds: tuple[int, ...]
    script: ScriptedPolicy | None = None

    def __post_init__(self) -> None:
        if not self.seeds:
            raise ValueError(f"entry {self.label!r} has no seeds")
        if self.script is not None and self.config.mode != MODE_INTERACTIVE:
            raise ValueError(
                f"entry {self.label!r} has a script but mode {self.config.mode!r}"
            )


@dataclass(frozen=True)
class ComparisonPlan:
    entries: tuple[PlanEntry, ...]
    baseline_label: str | None = None
    truth_seeds: tuple[int, ...] = (0, 1, 2)
    cache_dir: str | None = None

    def __post_init__(self) -> None:
        labels = [e.label for e in self.entries]
        if len(set(labels)) != len(labels):
            raise ValueError("plan labels must be unique")
        if self.baseline_label is not None and self.baseline_label not in labels:
            raise ValueError(
                f"baseline_label {self.baseline_label!r} is not a plan label"
            )

    @classmethod
    def from_dict(cls, d: dict) -> "ComparisonPlan":
        entries = tuple(
            PlanEntry(
                label=r["label"],
                config=CampaignConfig.from_dict(r["config"]),
                seeds=tuple(int(s) for s in r["seeds"]),
                script=None
                if r.get("script") is None
                else script_from_dict(r["script"]),
            )
            for r in d["runs"]
        )
        return cls(
            entries=entries,
            baseline_label=d.get("baseline_label"),
            truth_seeds=tuple(int(s) for s in d.get("truth_seeds", (0, 1, 2))),
            cache_dir=d.get("cache_dir"),
        )

    def to_dict(self) -> dict:
        return {
            "baseline_label": self.baseline_label,
            "truth_seeds": list(self.truth_seeds),
            "cache_dir": self.cache_dir,
            "runs": [
                {
                    "label": e.label,
                    "seeds": list(e.seeds),
                    "config": e.config.to_dict(),
                    "script": None
                    if e.script is None
                    else script_to_dict(e.script),
                }
                for e in self.entries
            ],
        }


def _run_campaign(cfg: CampaignConfig, script: ScriptedPolicy | None) -> CampaignState:
    if cfg.mode == MODE_BASELINE:
        return run_single_fidelity_baseline(cfg)
    if cfg.mode == MODE_INTERACTIVE:
        return run_scripted(cfg, script or ScriptedPolicy())
    return run_noninteractive(cfg)


def _one_run(
    entry: PlanEntry, seed: int, plan: ComparisonPlan
) -> tuple[dict, float, np.ndarray, np.ndarray]:
    t0 = time.perf_counter()
    cfg = replace(entry.config, rng_seed=seed)
    state = _run_campaign(cfg, entry.script)
    grid = build_grid(state.config)[:, 0]
    with _truth_lock:
        truth = ground_truth_for(
            state.config.objective,
            grid,
            seeds=plan.truth_seeds,
            cache_dir=plan.cache_dir,
        )
    mse, per_point_se = compute_mse(state, truth)
    n_low, n_high = state.dataset.fidelity_counts
    row = {
        "label": entry.label,
        "seed": seed,
        "mse": mse,
        "n_low": n_low,
        "n_high": n_high,
        "iterations": state.iteration,
        "best_x": list(state.best_x),
        "best_y": state.best_y,
        "status": state.status,
        "fallback_count": sum(1 for r in state.history if r.fallback),
        "policy_kinds": [r.change.kind for r in state.policy_log],
    }
    return row, time.perf_counter() - t0, grid, per_point_se


def run_comparison(
    plan: ComparisonPlan,
    out_dir: str | None = None,
    workers: int = 1,
) -> tuple[dict, dict]:
    """Execute the plan; returns (report, timings). When out_dir is set,
    per-run squared-error maps are written to out_dir/se_maps/."""
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    tasks = [(entry, seed) for entry in plan.entries for seed in entry.seeds]
    results: dict[tuple[str, int], tuple[dict, float, np.ndarray, np.ndarray]] = {}
    if workers == 1:
        for entry, seed in tasks:
            results[(entry.label, seed)] = _one_run(entry, seed, plan)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {
                (entry.label, seed): pool.submit(_one_run, entry, seed, plan)
                for entry, seed in tasks
            }
            for key, fut in futures.items():
                results[key] = fut.result()

    ordered = sorted(results.keys())
    runs = [results[k][0] for k in ordered]

    by_label: dict[str, list[float]] = {}
    for row in runs:
        by_label.setdefault(row["label"], []).append(row["mse"])
    baseline_mean = None
    if plan.baseline_label is not None:
        baseline_mean = float(np.mean(by_label[plan.baseline_label]))
    aggregate = {}
    for label in sorted(by_label):
        mses = by_label[label]
        agg = {
            "n_runs": len(mses),
            "median_mse": float(np.median(mses)),
            "mean_mse": float(np.mean(mses)),
        }
        if baseline_mean is not None:
            # Improvement is relative to the mean MSE of the single-fidelity
            # baseline; negative means worse than baseline.
            agg["improvement_pct"] = float(
                100.0 * (baseline_mean - agg["median_mse"]) / baseline_mean
            )
        aggregate[label] = agg

    report = {
        "schema_version": SCHEMA_VERSION,
        "baseline_label": plan.baseline_label,
        "truth_seeds": list(plan.truth_seeds),
        "labels": sorted(by_label),
        "runs": runs,
        "aggregate": aggregate,
    }
    timings = {
        "runs": {
            f"{label}:{seed}": results[(label, seed)][1]
            for label, seed in ordered
        },
        "total_s": float(sum(results[k][1] for k in ordered)),
        "workers": workers,
    }

    if out_dir is not None:
        se_dir = os.path.join(out_dir, "se_maps")
        os.makedirs(se_dir, exist_ok=True)
        for label, seed in ordered:
            _, _, grid, per_point_se = results[(label, seed)]
            path = os.path.join(se_dir, f"{label}_seed{seed}.csv")
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["x", "squared_error"])
                for xv, sev in zip(grid, per_point_se):
                    writer.writerow([repr(float(xv)), repr(float(sev))])
    return report, timings


def report_json_bytes(report: dict) -> bytes:
    """Canonical byte encoding of a report (sorted keys, fixed layout)."""
    return (json.dumps(report, sort_keys=True, indent=2) + "\n").encode()
