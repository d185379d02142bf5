#!/usr/bin/env python3
"""Quadrotor drag case: robust baseline vs budgeted dual control.

Writes per-run logs under out/quad_case1/<method>_<seed>/ and prints a
small comparison table.
"""

import argparse

from dualgate.bench import builtin_scenario, compute_baseline_cost, run_scenario


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--out", default="out/quad_case1")
    ap.add_argument("--budget-pct", type=float, default=110.0)
    args = ap.parse_args()

    cfg = builtin_scenario("quad_case1")
    cfg["budget_pct"] = args.budget_pct
    baseline = compute_baseline_cost(cfg)
    print(f"baseline mission cost: {baseline:.2f}")

    rows = []
    base_summary, _ = run_scenario(cfg, seed=0, overrides={"method": "robust_baseline"},
                                   out_dir=f"{args.out}/baseline", baseline_cost=baseline)
    rows.append(base_summary)
    for seed in [int(s) for s in args.seeds.split(",")]:
        summary, _ = run_scenario(cfg, seed=seed, out_dir=f"{args.out}/dual_{seed}",
                                  baseline_cost=baseline)
        rows.append(summary)

    print(f"{'method':<18} {'seed':>4} {'cost%':>7} {'reduction%':>12} {'budget%':>8}")
    for r in rows:
        red = ",".join(f"{x:.1f}" for x in r.uncertainty_reduction_pct)
        bud = f"{r.budget_consumed_pct:.1f}" if r.budget_consumed_pct is not None else "-"
        print(f"{r.method:<18} {r.seed:>4} {r.cost_pct_of_baseline:>7.1f} {red:>12} {bud:>8}")


if __name__ == "__main__":
    main()
