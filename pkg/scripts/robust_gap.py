"""Extra energy paid for robustness: perfect CSI against bounded-error CSI.

Runs both algorithms on the same seeds, once with the configured error radii
and once with zero radii (where the robust design should match the perfect
one), and prints the per-seed ratios and the mean gap.
"""

import argparse

import numpy as np

from securemec.experiments import ScenarioConfig, run_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--eps", type=float, default=0.01)
    args = ap.parse_args()
    cases = {
        "perfect": ScenarioConfig(),
        f"robust eps={args.eps:g}": ScenarioConfig(mode="robust", eps_e=args.eps, eps_g=args.eps),
        "robust eps=0": ScenarioConfig(mode="robust", eps_e=0.0, eps_g=0.0),
    }
    E = {name: [] for name in cases}
    for seed in range(args.seeds):
        for name, cfg in cases.items():
            E[name].append(run_scenario(cfg, seed).E_total)
        ratios = [E[name][-1] / E["perfect"][-1] for name in list(cases)[1:]]
        print(f"seed {seed:3d}: perfect {E['perfect'][-1]:.6g} J, ratios "
              + ", ".join(f"{r:.4f}" for r in ratios))
    base = np.mean(E["perfect"])
    for name, vals in E.items():
        print(f"{name:>18s}: mean E = {np.mean(vals):.6g} J ({100 * (np.mean(vals) / base - 1):+.2f}%)")


if __name__ == "__main__":
    main()
