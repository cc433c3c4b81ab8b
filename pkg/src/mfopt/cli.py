"""Command-line entry points.

  mfopt run      non-interactive campaign from a config file
  mfopt baseline single-fidelity (high only) BO from a config file
  mfopt scan     heat-capacity J-scan of an ising objective
  mfopt serve    start the HTTP session service
  mfopt replay   re-run a persisted campaign and diff histories
  mfopt compare  execute a multi-run comparison plan
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .campaign import (
    MODE_BASELINE,
    MODE_NONINTERACTIVE,
    CampaignConfig,
    ObjectiveSpec,
    histories_equal,
    observations_csv,
    replay_campaign,
    run_noninteractive,
    run_single_fidelity_baseline,
    save_campaign,
    state_from_dict,
)
from .objectives import scan_heat_capacity
from .reporting import ComparisonPlan, report_json_bytes, run_comparison


def _load_json(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _print_summary(state) -> None:
    n_low, n_high = state.dataset.fidelity_counts
    print(
        f"status={state.status} iterations={state.iteration} "
        f"evaluations={len(state.dataset)} (low={n_low}, high={n_high})"
    )
    print(f"best y={state.best_y:.6g} at x={list(state.best_x)} f={state.best_f}")


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = replace(
        CampaignConfig.from_dict(_load_json(args.config)), mode=MODE_NONINTERACTIVE
    )
    state = run_noninteractive(cfg)
    save_campaign(state, args.out)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(observations_csv(state))
    _print_summary(state)
    return 0


def _cmd_baseline(args: argparse.Namespace) -> int:
    cfg = replace(
        CampaignConfig.from_dict(_load_json(args.config)), mode=MODE_BASELINE
    )
    state = run_single_fidelity_baseline(cfg)
    save_campaign(state, args.out)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(observations_csv(state))
    _print_summary(state)
    return 0


def _cmd_scan(args: argparse.Namespace) -> int:
    doc = _load_json(args.config)
    spec = ObjectiveSpec.from_dict(doc.get("objective", doc))
    if spec.objective_id != "ising":
        print(
            f"scan requires an ising objective, got {spec.objective_id!r}",
            file=sys.stderr,
        )
        return 2
    n_points = int(round((args.j_max - args.j_min) / args.j_step)) + 1
    j_values = np.array([args.j_min + args.j_step * i for i in range(n_points)])
    seeds = [int(s) for s in args.seeds.split(",")]
    fidelities = {"low": [0], "high": [1], "both": [0, 1]}[args.fidelity]
    rows = []
    for f in fidelities:
        template = spec.ising_high if f == 1 else spec.ising_low
        values = scan_heat_capacity(template, j_values, seeds)
        for a, j in enumerate(j_values):
            for b, seed in enumerate(seeds):
                rows.append((float(j), f, float(values[a, b]), seed))
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["j", "fidelity", "h_c", "seed"])
        for j, f, h_c, seed in rows:
            writer.writerow([repr(j), f, repr(h_c), seed])
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .server import create_app

    app = create_app(data_dir=args.data_dir, static_dir=args.static_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    doc = _load_json(args.state)
    original = state_from_dict(doc)
    replayed = replay_campaign(doc)
    if args.out:
        save_campaign(replayed, args.out)
    if histories_equal(original.history, replayed.history):
        print(f"histories identical ({len(original.history)} iterations)")
        return 0
    print("histories differ:")
    n = max(len(original.history), len(replayed.history))
    for i in range(n):
        a = original.history[i].to_dict() if i < len(original.history) else None
        b = replayed.history[i].to_dict() if i < len(replayed.history) else None
        if a is not None:
            a.pop("wall_time_s")
        if b is not None:
            b.pop("wall_time_s")
        if a != b:
            print(f"  iteration {i + 1}: stored={a} replayed={b}")
    return 1


def _cmd_compare(args: argparse.Namespace) -> int:
    plan = ComparisonPlan.from_dict(_load_json(args.plan))
    out_dir = os.path.dirname(os.path.abspath(args.out))
    report, timings = run_comparison(plan, out_dir=out_dir, workers=args.workers)
    with open(args.out, "wb") as fh:
        fh.write(report_json_bytes(report))
    timings_path = os.path.splitext(args.out)[0] + ".timings.json"
    with open(timings_path, "w") as fh:
        json.dump(timings, fh, sort_keys=True, indent=2)
        fh.write("\n")
    for label in report["labels"]:
        agg = report["aggregate"][label]
        line = (
            f"{label}: median MSE {agg['median_mse']:.6g} "
            f"(n={agg['n_runs']})"
        )
        if "improvement_pct" in agg:
            line += f" improvement {agg['improvement_pct']:+.1f}%"
        print(line)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mfopt",
        description="Interactive multi-fidelity Bayesian optimization engine",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a non-interactive campaign")
    p.add_argument("--config", required=True, help="campaign config JSON")
    p.add_argument("--out", required=True, help="final state JSON path")
    p.add_argument("--csv", help="also write the observation CSV here")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("baseline", help="run the single-fidelity baseline")
    p.add_argument("--config", required=True, help="campaign config JSON")
    p.add_argument("--out", required=True, help="final state JSON path")
    p.add_argument("--csv", help="also write the observation CSV here")
    p.set_defaults(fn=_cmd_baseline)

    p = sub.add_parser("scan", help="heat-capacity J-scan of an ising objective")
    p.add_argument(
        "--config", required=True, help="objective (or campaign) config JSON"
    )
    p.add_argument("--j-min", type=float, default=0.5)
    p.add_argument("--j-max", type=float, default=2.0)
    p.add_argument("--j-step", type=float, default=0.05)
    p.add_argument("--seeds", default="0,1,2", help="comma-separated seeds")
    p.add_argument(
        "--fidelity", choices=("low", "high", "both"), default="both"
    )
    p.add_argument("--out", required=True, help="CSV output path")
    p.set_defaults(fn=_cmd_scan)

    p = sub.add_parser("serve", help="start the HTTP session service")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--data-dir", help="session persistence directory")
    p.add_argument("--static-dir", help="serve this directory as the web UI")
    p.set_defaults(fn=_cmd_serve)

    p = sub.add_parser("replay", help="re-run a persisted campaign and diff")
    p.add_argument("--state", required=True, help="campaign state JSON")
    p.add_argument("--out", help="write the replayed state here")
    p.set_defaults(fn=_cmd_replay)

    p = sub.add_parser("compare", help="execute a comparison plan")
    p.add_argument("--plan", required=True, help="plan JSON")
    p.add_argument("--out", required=True, help="report JSON output path")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=_cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
