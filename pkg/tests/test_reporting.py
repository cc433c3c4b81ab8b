"""Tests for the comparison driver: plan serialization, report content,
determinism of the report bytes, and the squared-error sidecar files."""

import json

import numpy as np
import pytest

from mfopt.campaign import (
    MODE_BASELINE,
    MODE_INTERACTIVE,
    MODE_NONINTERACTIVE,
    CampaignConfig,
    ObjectiveSpec,
    PolicyChange,
    ScriptedPolicy,
    SurrogateConfig,
    run_noninteractive,
)
from mfopt.mean_models import piecewise_offset_mean
from mfopt.mfgp import McmcConfig
from mfopt.reporting import (
    ComparisonPlan,
    PlanEntry,
    report_json_bytes,
    run_comparison,
    script_from_dict,
    script_to_dict,
    structured_switch_preset,
)

FAST_MCMC = McmcConfig(warmup=30, draws=30)


def small_config(**kw):
    defaults = dict(
        objective=ObjectiveSpec(objective_id="problem1"),
        domain=((0.0, 10.0),),
        init_count=4,
        max_iterations=2,
        grid_resolution=41,
        rng_seed=0,
        surrogate=SurrogateConfig(mcmc=FAST_MCMC),
        mode=MODE_NONINTERACTIVE,
    )
    defaults.update(kw)
    return CampaignConfig(**defaults)


def small_plan(**kw):
    defaults = dict(
        entries=(
            PlanEntry(label="mfbo", config=small_config(), seeds=(0, 1)),
            PlanEntry(
                label="baseline",
                config=small_config(mode=MODE_BASELINE),
                seeds=(0, 1),
            ),
        ),
        baseline_label="baseline",
    )
    defaults.update(kw)
    return ComparisonPlan(**defaults)


class TestPlanValidation:
    def test_duplicate_labels_rejected(self):
        with pytest.raises(ValueError, match="unique"):
            ComparisonPlan(
                entries=(
                    PlanEntry("a", small_config(), (0,)),
                    PlanEntry("a", small_config(), (1,)),
                )
            )

    def test_baseline_must_be_a_label(self):
        with pytest.raises(ValueError, match="baseline_label"):
            ComparisonPlan(
                entries=(PlanEntry("a", small_config(), (0,)),),
                baseline_label="b",
            )

    def test_empty_seeds_rejected(self):
        with pytest.raises(ValueError, match="seeds"):
            PlanEntry("a", small_config(), ())

    def test_script_requires_interactive_mode(self):
        script = ScriptedPolicy(on_prompt=((PolicyChange(kind="no_change"),),))
        with pytest.raises(ValueError, match="mode"):
            PlanEntry("a", small_config(), (0,), script=script)
        PlanEntry("a", small_config(mode=MODE_INTERACTIVE), (0,), script=script)

    def test_plan_round_trip(self):
        script = structured_switch_preset(
            piecewise_offset_mean(), new_cost_ratio=4.0, force_final_at=2
        )
        plan = ComparisonPlan(
            entries=(
                PlanEntry(
                    "scripted",
                    small_config(mode=MODE_INTERACTIVE),
                    (3, 4),
                    script=script,
                ),
            ),
            truth_seeds=(7,),
            cache_dir="/tmp/cache",
        )
        doc = plan.to_dict()
        restored = ComparisonPlan.from_dict(json.loads(json.dumps(doc)))
        assert restored == plan

    def test_script_round_trip(self):
        script = structured_switch_preset(
            piecewise_offset_mean(), new_cost_ratio=2.5, force_final_at=5
        )
        restored = script_from_dict(script_to_dict(script))
        assert restored == script
        assert len(restored.on_prompt) == 2
        assert restored.on_prompt[0][0].kind == "surrogate"
        assert restored.on_prompt[1][0].new_cost_ratio == 2.5
        assert restored.at_iteration[5][0].kind == "force_final_high_fidelity"
        assert all(
            c.issuer == "scripted"
            for batch in restored.on_prompt
            for c in batch
        )

    def test_preset_without_optional_parts(self):
        script = structured_switch_preset(piecewise_offset_mean())
        assert len(script.on_prompt) == 1
        assert script.at_iteration == {}


class TestRunComparison:
    def test_report_rows_have_expected_fields(self):
        plan = ComparisonPlan(
            entries=(PlanEntry("mfbo", small_config(), seeds=(5,)),)
        )
        report, timings = run_comparison(plan)
        assert report["labels"] == ["mfbo"]
        (row,) = report["runs"]
        assert row["label"] == "mfbo"
        assert row["seed"] == 5
        assert row["mse"] >= 0.0
        assert row["iterations"] == 2
        assert row["status"] == "converged"
        assert row["n_low"] + row["n_high"] == 4 + 2
        assert isinstance(row["best_x"], list) and len(row["best_x"]) == 1
        assert row["fallback_count"] >= 0
        assert row["policy_kinds"] == []
        assert timings["workers"] == 1
        assert timings["total_s"] > 0

    def test_fidelity_tallies_match_independent_rerun(self):
        cfg = small_config(rng_seed=5)
        plan = ComparisonPlan(
            entries=(PlanEntry("mfbo", small_config(), seeds=(5,)),)
        )
        report, _ = run_comparison(plan)
        (row,) = report["runs"]
        state = run_noninteractive(cfg)
        n_low = sum(1 for p in state.dataset.points if p.f == 0)
        n_high = sum(1 for p in state.dataset.points if p.f == 1)
        assert (row["n_low"], row["n_high"]) == (n_low, n_high)
        assert row["best_y"] == state.best_y

    def test_improvement_pct_formula(self):
        report, _ = run_comparison(small_plan())
        agg = report["aggregate"]
        base_mean = float(np.mean([r["mse"] for r in report["runs"] if r["label"] == "baseline"]))
        assert agg["baseline"]["mean_mse"] == pytest.approx(base_mean, rel=1e-12)
        for label in ("mfbo", "baseline"):
            med = float(
                np.median([r["mse"] for r in report["runs"] if r["label"] == label])
            )
            assert agg[label]["median_mse"] == pytest.approx(med, rel=1e-12)
            expect = 100.0 * (base_mean - med) / base_mean
            assert agg[label]["improvement_pct"] == pytest.approx(expect, rel=1e-12)

    def test_no_baseline_no_improvement_key(self):
        plan = ComparisonPlan(
            entries=(PlanEntry("mfbo", small_config(), seeds=(0,)),)
        )
        report, _ = run_comparison(plan)
        assert "improvement_pct" not in report["aggregate"]["mfbo"]

    def test_report_bytes_reproducible_and_worker_invariant(self):
        plan = small_plan()
        r1, t1 = run_comparison(plan, workers=1)
        r2, t2 = run_comparison(plan, workers=2)
        assert report_json_bytes(r1) == report_json_bytes(r2)
        # Wall times vary run to run; they live only in the timings doc.
        assert "total_s" not in json.dumps(r1)
        assert set(t1["runs"]) == {"baseline:0", "baseline:1", "mfbo:0", "mfbo:1"}
        assert t2["workers"] == 2

    def test_se_maps_written(self, tmp_path):
        plan = ComparisonPlan(
            entries=(PlanEntry("mfbo", small_config(), seeds=(0,)),)
        )
        report, _ = run_comparison(plan, out_dir=str(tmp_path))
        path = tmp_path / "se_maps" / "mfbo_seed0.csv"
        assert path.exists()
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "x,squared_error"
        assert len(lines) == 1 + 41
        ses = [float(line.split(",")[1]) for line in lines[1:]]
        assert all(se >= 0.0 for se in ses)
        (row,) = report["runs"]
        assert row["mse"] == pytest.approx(float(np.mean(ses)), rel=1e-9)

    def test_invalid_worker_count(self):
        with pytest.raises(ValueError, match="workers"):
            run_comparison(small_plan(), workers=0)

    def test_scripted_entry_records_policy_kinds(self):
        script = ScriptedPolicy(
            at_iteration={1: (PolicyChange(kind="cost_ratio", new_cost_ratio=2.0),)}
        )
        plan = ComparisonPlan(
            entries=(
                PlanEntry(
                    "scripted",
                    small_config(mode=MODE_INTERACTIVE, max_iterations=2),
                    seeds=(0,),
                    script=script,
                ),
            )
        )
        report, _ = run_comparison(plan)
        (row,) = report["runs"]
        assert row["policy_kinds"] == ["cost_ratio"]
