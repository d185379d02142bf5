#!/usr/bin/env python3
"""Racing benchmark: run one method over seeds, or the full method table."""

import argparse

from dualgate.bench import RACE_METHODS, sweep


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--methods", default="fallback,nominal,dual_gatekeeper",
                    help=f"comma list from {RACE_METHODS}")
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--out", default="out/racing")
    args = ap.parse_args()

    rows = sweep("racing", [int(s) for s in args.seeds.split(",")],
                 args.methods.split(","), out_dir=args.out)
    print(f"{'method':<16} {'seed':>4} {'mu_plan':>8} {'safe':>5} {'laps':>28}")
    for r in rows:
        laps = ",".join(f"{x:.1f}" for x in r.lap_times) or "-"
        mu = f"{r.mu_planned:.2f}" if r.mu_planned is not None else "-"
        print(f"{r.method:<16} {r.seed:>4} {mu:>8} {str(r.safe_run):>5} {laps:>28}")


if __name__ == "__main__":
    main()
