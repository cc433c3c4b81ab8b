"""Scripted interactive campaign on the discontinuous test problem: start
data-driven, switch to the structured surrogate at the first stall prompt,
retune the cost ratio at the second, then force a last high-fidelity
evaluation. Prints the iteration trace and the policy audit trail, saves
the campaign, and checks that a replay reproduces it.

    python scripts/run_interactive_demo.py --out demo_campaign.json --seed 0
"""

import argparse

from mfopt.acquisition import AcquisitionConfig
from mfopt.campaign import (
    MODE_INTERACTIVE,
    CampaignConfig,
    InitFidelityRule,
    ObjectiveSpec,
    SurrogateConfig,
    config_after_changes,
    histories_equal,
    replay_campaign,
    run_scripted,
    save_campaign,
    state_to_dict,
)
from mfopt.mean_models import piecewise_offset_mean
from mfopt.mfgp import McmcConfig
from mfopt.reporting import structured_switch_preset


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="demo_campaign.json")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--iterations", type=int, default=18)
    parser.add_argument("--mcmc", type=int, default=200)
    args = parser.parse_args()

    cfg = CampaignConfig(
        objective=ObjectiveSpec(objective_id="problem2"),
        domain=((0.0, 10.0),),
        init_count=10,
        init_fidelity_rule=InitFidelityRule(kind="fixed", n_low=7, n_high=3),
        max_iterations=args.iterations,
        stall_window=5,
        acquisition=AcquisitionConfig(cost_ratio=2.0),
        surrogate=SurrogateConfig(
            mcmc=McmcConfig(warmup=args.mcmc, draws=args.mcmc)
        ),
        rng_seed=args.seed,
        mode=MODE_INTERACTIVE,
    )
    script = structured_switch_preset(
        piecewise_offset_mean(),
        new_cost_ratio=1.0,
        force_final_at=args.iterations - 2,
    )

    state = run_scripted(cfg, script)
    print(f"{'iter':>4} {'x':>7} {'fid':>3} {'y':>8} {'best':>8}")
    for rec in state.history:
        print(
            f"{rec.iteration:>4} {rec.x[0]:>7.3f} {rec.fidelity:>3} "
            f"{rec.y:>8.3f} {rec.best_y:>8.3f}"
        )
    print(f"status {state.status}, best y = {state.best_y:.4f} "
          f"at x = {state.best_x[0]:.4f}")

    print("\npolicy audit trail:")
    for rec in state.policy_log:
        ch = rec.change
        detail = {
            "surrogate": lambda: f"mean -> {ch.new_mean.kind}"
            if ch.new_mean is not None
            else f"spatial family -> {ch.new_spatial_family}",
            "cost_ratio": lambda: f"cost ratio -> {ch.new_cost_ratio}",
            "convergence": lambda: f"max iterations -> {ch.new_max_iterations}",
            "parameter_space": lambda: f"bounds -> {ch.new_bounds}",
        }.get(ch.kind, lambda: "")()
        print(f"  iteration {rec.applied_at}: {ch.kind} {detail}".rstrip())
    audit_ok = config_after_changes(state.initial_config, state.policy_log)
    print(f"audit reconstructs final config: {audit_ok == state.config}")

    save_campaign(state, args.out)
    replayed = replay_campaign(state_to_dict(state))
    same = histories_equal(state.history, replayed.history)
    print(f"replay reproduces the run: {same}")
    print(f"saved -> {args.out}")
    return 0 if same else 1


if __name__ == "__main__":
    raise SystemExit(main())
