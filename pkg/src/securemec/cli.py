"""Command line entry point: run, sweep and compare.

Exit codes: 0 success, 2 config error, 3 run failure (any record carries an
error). Log verbosity comes from the SECUREMEC_LOG environment variable.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from typing import Optional, Sequence

from .experiments import (AXES, BASELINES, MODES, ConfigError, ScenarioConfig, compare_baselines,
                          configure_logging, load_config, mean_energy, run_scenario, sweep,
                          write_records, write_trace)

EXIT_OK, EXIT_CONFIG, EXIT_RUN = 0, 2, 3


def _csv_list(text: str) -> list:
    return [v.strip() for v in text.split(",") if v.strip()]


def _values(text: str) -> list:
    out = []
    for i, v in enumerate(_csv_list(text)):
        try:
            out.append(float(v))
        except ValueError:
            raise ConfigError(f"values[{i}]", f"must be a number, got {v!r}") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="securemec",
                                 description="Secure RIS-assisted NOMA offloading experiments")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON scenario file (defaults when omitted)")
        p.add_argument("--out", required=True, help="records file, .csv or .json")
        p.add_argument("--mode", choices=MODES, help="override the config mode")
        p.add_argument("--workers", type=int, help="worker processes")

    p = sub.add_parser("run", help="one seed, one baseline")
    common(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--baseline", choices=BASELINES, default="optimized")
    p.add_argument("--trace", help="write the per-iteration energy trace (JSON)")

    p = sub.add_parser("sweep", help="one axis over a list of values")
    common(p)
    p.add_argument("--axis", required=True, choices=AXES)
    p.add_argument("--values", required=True, help="comma separated values")
    p.add_argument("--seeds", type=int, help="number of seeds")
    p.add_argument("--baselines", help="comma separated baselines")

    p = sub.add_parser("compare", help="baselines on shared channels")
    common(p)
    p.add_argument("--seeds", type=int, help="number of seeds")
    p.add_argument("--baselines", default=",".join(BASELINES), help="comma separated baselines")
    return ap


def _load(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    kw = {}
    if args.mode:
        kw["mode"] = args.mode
    if args.workers is not None:
        kw["workers"] = args.workers
    if getattr(args, "seeds", None) is not None:
        kw["seeds"] = args.seeds
    if getattr(args, "baselines", None):
        kw["baselines"] = _csv_list(args.baselines)
    return replace(cfg, **kw) if kw else cfg


def _summary(records):
    key = lambda r: (r.baseline, "" if math.isnan(r.axis_value) else f"{r.axis}={r.axis_value:g}")
    for bl, val in sorted({key(r) for r in records}):
        sel = [r for r in records if key(r) == (bl, val)]
        ok = sum(not r.failed for r in sel)
        label = f"{bl} {val}".strip()
        print(f"{label}: mean E = {mean_energy(sel):.6g} J over {ok}/{len(sel)} runs")


def main(argv: Optional[Sequence[str]] = None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        if args.command == "run":
            records = [run_scenario(cfg, args.seed, args.baseline)]
            if args.trace:
                write_trace(records[0], args.trace)
        elif args.command == "sweep":
            records = sweep(cfg, args.axis, _values(args.values))
        else:
            records = compare_baselines(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        write_records(records, args.out)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUN
    _summary(records)
    failed = [r for r in records if r.failed]
    for r in failed:
        print(f"seed {r.seed} ({r.mode}, {r.baseline}) failed: {r.error}", file=sys.stderr)
    return EXIT_RUN if failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
