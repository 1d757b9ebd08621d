"""Energy per BCD iteration for both algorithms on the default scenario.

Writes one row per (seed, algorithm, iteration) and prints the iteration
counts. Example: python scripts/convergence.py --seeds 5 --out convergence.csv
"""

import argparse
import csv

from securemec.experiments import ScenarioConfig, run_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--out", default="convergence.csv")
    args = ap.parse_args()
    rows = []
    for mode in ("perfect", "robust"):
        cfg = ScenarioConfig(mode=mode)
        for seed in range(args.seeds):
            rec = run_scenario(cfg, seed)
            print(f"{mode:8s} seed {seed:3d}: {rec.iterations:2d} iterations, "
                  f"E = {rec.E_total:.6g} J{'' if rec.converged else ' (not converged)'}")
            rows += [(seed, mode, it, E) for it, E in enumerate(rec.trace)]
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "mode", "iteration", "E_total_J"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
