"""Mean energy against one system parameter for the three baselines.

Presets reproduce the usual figure axes (task size L, RIS elements M, users K,
time slot T, RIS position ris_x, CSI error radius eps); any other value list
can be given with --values. Example:
    python scripts/sweep.py M --seeds 30 --out sweep_M.csv
"""

import argparse
import math
from dataclasses import replace

from securemec.experiments import BASELINES, ScenarioConfig, mean_energy, sweep, write_records

PRESETS = {
    "L": [1e5, 2e5, 3e5, 4e5, 5e5],
    "M": [0, 5, 10, 15, 20, 25, 30],
    "K": [1, 2, 3, 4, 5],
    "T": [0.08, 0.1, 0.15, 0.2, 0.25],
    "ris_x": [5, 20, 35, 50, 65],
    "eps": [0.0, 0.01, 0.02, 0.05, 0.1],
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("axis", choices=sorted(PRESETS))
    ap.add_argument("--values", help="comma separated values (default: preset)")
    ap.add_argument("--seeds", type=int, default=30)
    ap.add_argument("--mode", choices=("perfect", "robust"), default="perfect")
    ap.add_argument("--baselines", default=",".join(BASELINES))
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    values = [float(v) for v in args.values.split(",")] if args.values else PRESETS[args.axis]
    baselines = [b for b in args.baselines.split(",") if b]
    cfg = ScenarioConfig(mode=args.mode, seeds=args.seeds, workers=args.workers)
    if args.axis == "eps":
        # both radii move together; eps_e is the swept axis, eps_g follows it
        recs = []
        for v in values:
            part = sweep(replace(cfg, eps_g=v, mode="robust"), "eps_e", [v], baselines=baselines)
            recs += part
    else:
        recs = sweep(cfg, args.axis, values, baselines=baselines)
    write_records(recs, args.out or f"sweep_{args.axis}.csv")
    print(f"{args.axis:>8s} " + " ".join(f"{b:>14s}" for b in baselines))
    for v in values:
        means = [mean_energy(recs, b, float(v)) for b in baselines]
        print(f"{v:8g} " + " ".join(f"{m:14.6g}" if not math.isnan(m) else f"{'-':>14s}"
                                     for m in means))
    failed = sum(r.failed for r in recs)
    if failed:
        print(f"{failed} runs failed")


if __name__ == "__main__":
    main()
