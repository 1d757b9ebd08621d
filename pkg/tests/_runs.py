"""Shared run cache and small scenario helpers for the test suite.

Runs are memoized per (config, seed, baseline) for the whole session so the
acceptance criteria share records. Setting SECUREMEC_TEST_CACHE to a
directory also persists them between sessions (off by default).
"""

import hashlib
import json
import os
import pickle

import numpy as np

from securemec import Geometry, RngStreams, SystemConfig, sample_channels, sample_geometry
from securemec.experiments import ScenarioConfig, run_scenario, with_axis

CRITERIA = {}   # criterion number -> (passed, detail)
_MEMO = {}


def report(n: int, ok: bool, detail: str):
    CRITERIA[n] = (bool(ok), detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


def _key(cfg: ScenarioConfig, seed: int, baseline: str) -> str:
    blob = json.dumps([cfg.to_dict(), seed, baseline], sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:24]


def run(cfg: ScenarioConfig, seed: int, baseline: str = "optimized"):
    key = _key(cfg, seed, baseline)
    if key in _MEMO:
        return _MEMO[key]
    disk = os.environ.get("SECUREMEC_TEST_CACHE")
    path = os.path.join(disk, key + ".pkl") if disk else None
    if path and os.path.exists(path):
        with open(path, "rb") as fh:
            rec = pickle.load(fh)
    else:
        rec = run_scenario(cfg, seed, baseline)
        if path:
            os.makedirs(disk, exist_ok=True)
            with open(path, "wb") as fh:
                pickle.dump(rec, fh)
    _MEMO[key] = rec
    return rec


def runs(cfg: ScenarioConfig, seeds, baseline: str = "optimized") -> list:
    return [run(cfg, s, baseline) for s in seeds]


def sweep_means(cfg: ScenarioConfig, axis: str, values, seeds, baseline: str = "optimized"):
    """Mean E_total per axis value plus the failed-run count."""
    means, failed = [], 0
    for v in values:
        recs = runs(with_axis(cfg, axis, v), seeds, baseline)
        failed += sum(r.failed for r in recs)
        means.append(float(np.mean([r.E_total for r in recs if not r.failed])))
    return means, failed


def channels(seed: int, **kw):
    """(SystemConfig, ChannelSet, RngStreams) of one seeded default-geometry draw."""
    cfg = SystemConfig(**kw)
    geo = Geometry()
    streams = RngStreams(seed)
    ch = sample_channels(cfg, geo, sample_geometry(cfg, geo, streams), streams)
    return cfg, ch, streams
