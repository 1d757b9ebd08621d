"""Scenario configs, seeded runs, baselines, sweeps and record persistence.

A scenario config is a flat JSON object; powers are given in dBm and the
reference path gain in dB, everything else in SI units. Unknown keys and
out-of-range values are rejected with the offending key in the message.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import bcd_perfect, bcd_robust
from .config import Geometry, SystemConfig, db_to_linear, dbm_to_watt
from .metrics import EveCsi, evaluate_solution
from .scenario import RngStreams, sample_channels, sample_geometry

log = logging.getLogger("securemec")

MODES = ("perfect", "robust")
BASELINES = ("optimized", "random-phase", "no-ris")
AXES = ("L", "M", "K", "T", "ris_x", "eps_e", "eps_g")
CSV_HEADER = ["seed", "mode", "baseline", "axis", "axis_value", "E_total_J", "E_local_J",
              "E_offload_J", "iterations", "converged", "min_margin", "wall_ms"]


class ConfigError(ValueError):
    """Invalid scenario config; ``key`` names the offending entry."""

    def __init__(self, key: str, msg: str):
        super().__init__(f"{key}: {msg}" if key else msg)
        self.key = key


@dataclass
class ScenarioConfig:
    # network and task
    K: int = 3
    M: int = 5
    N_a: int = 5
    N_e: int = 3
    B: float = 1e6
    T: float = 0.1
    L: float = 3e5
    C: float = 1000.0
    varsigma: float = 1e-28
    P_max_dbm: float = 20.0            # 0.1 W, non-paper default
    sigma_a2_dbm: float = -90.0
    sigma_e2_dbm: float = -90.0
    # geometry (metres) and path loss
    ap_x: float = 0.0
    ap_y: float = 0.0
    ris_x: float = 0.0
    ris_y: float = 10.0
    eve_x: float = 0.0
    eve_y: float = -10.0
    user_x: float = 70.0
    user_y: float = 0.0
    user_radius: float = 5.0
    alpha_ua: float = 4.0
    alpha_ue: float = 4.0
    alpha_ui: float = 2.0
    alpha_ia: float = 2.2
    alpha_ie: float = 2.5
    L0_db: float = -30.0
    # CSI error model
    eps_e: float = 0.01
    eps_g: float = 0.01
    csi_relative: bool = True
    # algorithms
    eps: float = 1e-3
    eps1: float = 1e-5
    max_iter: int = 50
    sca_inner: int = 30
    sca_inner_tol: float = 1e-5
    pcc_inner: int = 1
    solver_tol: float = 1e-7
    rand_count: int = 100
    lambda0: float = 10.0
    lambda_max: float = 1e3
    lambda_growth: float = 5.0
    eps_g_inflation: float = 1.05
    robust_lmi: str = "structured"
    # experiment
    mode: str = "perfect"
    baselines: list = field(default_factory=lambda: ["optimized"])
    axis: str = ""
    values: list = field(default_factory=list)
    seeds: int = 50
    first_seed: int = 0
    audit_samples: int = 1000
    workers: int = 1
    record_timing: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        def need(key, ok, what):
            if not ok:
                raise ConfigError(key, f"{what}, got {getattr(self, key)!r}")

        for key in ("K", "N_a", "N_e", "max_iter", "sca_inner", "pcc_inner", "rand_count", "seeds",
                    "workers"):
            need(key, isinstance(getattr(self, key), int) and getattr(self, key) >= 1,
                 "must be an integer >= 1")
        need("M", isinstance(self.M, int) and self.M >= 0, "must be an integer >= 0")
        need("first_seed", isinstance(self.first_seed, int) and self.first_seed >= 0,
             "must be an integer >= 0")
        need("audit_samples", isinstance(self.audit_samples, int) and self.audit_samples >= 0,
             "must be an integer >= 0")
        for key in ("B", "T", "C", "varsigma", "eps", "eps1", "sca_inner_tol", "solver_tol",
                    "lambda0", "lambda_max", "eps_g_inflation"):
            need(key, _num(getattr(self, key)) and getattr(self, key) > 0, "must be > 0")
        for key in ("L", "user_radius", "eps_e", "eps_g"):
            need(key, _num(getattr(self, key)) and getattr(self, key) >= 0, "must be >= 0")
        need("lambda_growth", _num(self.lambda_growth) and self.lambda_growth >= 1, "must be >= 1")
        for key in ("P_max_dbm", "sigma_a2_dbm", "sigma_e2_dbm", "L0_db", "ap_x", "ap_y", "ris_x",
                    "ris_y", "eve_x", "eve_y", "user_x", "user_y"):
            need(key, _num(getattr(self, key)), "must be a finite number")
        for key in ("alpha_ua", "alpha_ue", "alpha_ui", "alpha_ia", "alpha_ie"):
            need(key, _num(getattr(self, key)) and 1.0 <= getattr(self, key) <= 6.0,
                 "must lie in [1, 6]")
        for key in ("csi_relative", "record_timing"):
            need(key, isinstance(getattr(self, key), bool), "must be true or false")
        need("robust_lmi", self.robust_lmi in ("structured", "identity"),
             "must be 'structured' or 'identity'")
        need("mode", self.mode in MODES, f"must be one of {MODES}")
        need("baselines", isinstance(self.baselines, list) and len(self.baselines) > 0,
             "must be a non-empty list")
        for i, bl in enumerate(self.baselines):
            if bl not in BASELINES:
                raise ConfigError(f"baselines[{i}]", f"must be one of {BASELINES}, got {bl!r}")
        need("axis", self.axis == "" or self.axis in AXES, f"must be empty or one of {AXES}")
        need("values", isinstance(self.values, list), "must be a list")
        for i, v in enumerate(self.values):
            if not _num(v):
                raise ConfigError(f"values[{i}]", f"must be a finite number, got {v!r}")
        if self.axis:
            for i, v in enumerate(self.values):
                msg = axis_value_problem(self.axis, v)
                if msg:
                    raise ConfigError(f"values[{i}]", msg)

    # conversions ----------------------------------------------------------
    def system(self) -> SystemConfig:
        return SystemConfig(
            K=self.K, M=self.M, N_a=self.N_a, N_e=self.N_e, B=float(self.B), T=float(self.T),
            L=float(self.L), C=float(self.C), varsigma=float(self.varsigma),
            P_max=dbm_to_watt(self.P_max_dbm), sigma_a2=dbm_to_watt(self.sigma_a2_dbm),
            sigma_e2=dbm_to_watt(self.sigma_e2_dbm), eps=float(self.eps), eps1=float(self.eps1),
            max_iter=self.max_iter, sca_inner=self.sca_inner, pcc_inner=self.pcc_inner,
            sca_inner_tol=float(self.sca_inner_tol), solver_tol=float(self.solver_tol),
            rand_count=self.rand_count, lambda0=float(self.lambda0),
            lambda_max=float(self.lambda_max), lambda_growth=float(self.lambda_growth),
            eps_e=float(self.eps_e), eps_g=float(self.eps_g),
            eps_g_inflation=float(self.eps_g_inflation), robust_lmi=self.robust_lmi)

    def geometry(self) -> Geometry:
        return Geometry(ap_pos=(self.ap_x, self.ap_y), ris_pos=(self.ris_x, self.ris_y),
                        eve_pos=(self.eve_x, self.eve_y), user_center=(self.user_x, self.user_y),
                        user_radius=float(self.user_radius), alpha_ua=self.alpha_ua,
                        alpha_ue=self.alpha_ue, alpha_ui=self.alpha_ui, alpha_ia=self.alpha_ia,
                        alpha_ie=self.alpha_ie, L0=db_to_linear(self.L0_db))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        if not isinstance(data, dict):
            raise ConfigError("", "config must be a JSON object")
        known = {f.name: f for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown key")
        kw = {}
        for key, val in data.items():
            default = getattr(cls(), key) if key in ("baselines", "values") else known[key].default
            if isinstance(default, bool):
                if not isinstance(val, bool):
                    raise ConfigError(key, f"must be true or false, got {val!r}")
            elif isinstance(default, int):
                if isinstance(val, bool) or not (isinstance(val, int) or
                                                 (isinstance(val, float) and val.is_integer())):
                    raise ConfigError(key, f"must be an integer, got {val!r}")
                val = int(val)
            elif isinstance(default, float):
                if isinstance(val, bool) or not isinstance(val, (int, float)):
                    raise ConfigError(key, f"must be a number, got {val!r}")
                val = float(val)
            elif isinstance(default, str):
                if not isinstance(val, str):
                    raise ConfigError(key, f"must be a string, got {val!r}")
            elif isinstance(default, list):
                if isinstance(val, str):
                    val = [v.strip() for v in val.split(",") if v.strip()]
                if not isinstance(val, list):
                    raise ConfigError(key, f"must be a list, got {val!r}")
                val = list(val)
            kw[key] = val
        return cls(**kw)


def _num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def load_config(path: str) -> ScenarioConfig:
    """Parse, default and validate a JSON scenario file (an empty file gives the defaults)."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc.strerror}") from None
    if not text.strip():
        return ScenarioConfig()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"{path}: parse error at line {exc.lineno} column {exc.colno}: "
                              f"{exc.msg}") from None
    return ScenarioConfig.from_dict(data)


def save_config(cfg: ScenarioConfig, path: str):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def axis_value_problem(axis: str, v) -> str:
    """Empty string if v is a valid value of the swept quantity, else the reason."""
    if not _num(v):
        return f"must be a finite number, got {v!r}"
    if axis in ("M", "K") and not float(v).is_integer():
        return f"{axis} must be an integer, got {v!r}"
    lower = {"M": 0, "K": 1, "L": 0, "T": None, "eps_e": 0, "eps_g": 0}
    if axis == "T" and not v > 0:
        return f"T must be > 0, got {v!r}"
    if axis in lower and lower[axis] is not None and v < lower[axis]:
        return f"{axis} must be >= {lower[axis]}, got {v!r}"
    return ""


def with_axis(cfg: ScenarioConfig, axis: str, value) -> ScenarioConfig:
    """Copy of cfg with the swept quantity set to value."""
    if axis not in AXES:
        raise ConfigError("axis", f"must be one of {AXES}, got {axis!r}")
    msg = axis_value_problem(axis, value)
    if msg:
        raise ConfigError(axis, msg)
    value = int(value) if axis in ("M", "K") else float(value)
    return replace(cfg, **{axis: value})


# ----------------------------------------------------------------------------
# records


@dataclass
class RunRecord:
    seed: int
    mode: str
    baseline: str
    axis: str
    axis_value: float
    E_total: float
    E_local: float
    E_offload: float
    iterations: int
    converged: bool
    min_margin: float
    wall_ms: float
    l: list
    p: list
    error: str = ""
    digest: str = ""
    trace: list = field(default_factory=list)

    @property
    def failed(self) -> bool:
        return bool(self.error)


def _channels(cfg: ScenarioConfig, seed: int):
    sysc, geo = cfg.system(), cfg.geometry()
    streams = RngStreams(seed)
    pos = sample_geometry(sysc, geo, streams)
    return sysc, streams, sample_channels(sysc, geo, pos, streams)


def run_scenario(cfg: ScenarioConfig, seed: int, baseline: str = "optimized", axis: str = "",
                 axis_value: float = math.nan) -> RunRecord:
    """Sample the seed's channels, run the selected algorithm and audit the result.

    Solver failures come back as a record with ``error`` set. BLAS is pinned
    to one thread so records do not depend on the thread count.
    """
    if baseline not in BASELINES:
        raise ConfigError("baseline", f"must be one of {BASELINES}, got {baseline!r}")
    t0 = time.perf_counter()
    with threadpool_limits(limits=1):
        sysc, streams, channels = _channels(cfg, seed)
        digest = channels.digest()
        K = sysc.K
        try:
            run_ch = channels.without_ris() if baseline == "no-ris" else channels
            opts = bcd_perfect.BcdOptions(optimize_phases=(baseline == "optimized"))
            if cfg.mode == "perfect":
                sol, tr = bcd_perfect.run(sysc, run_ch, opts=opts, streams=streams)
                ev = evaluate_solution(sysc, run_ch, sol)
            else:
                csi = EveCsi.from_channels(run_ch, sysc.eps_e, sysc.eps_g,
                                           relative=cfg.csi_relative)
                sol, tr = bcd_robust.run_robust(sysc, run_ch, csi, opts=opts, streams=streams,
                                                audit_samples=cfg.audit_samples)
                ev = evaluate_solution(sysc, run_ch, sol, mode="robust", csi=csi)
        except (np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
            log.warning("seed %d (%s, %s) failed: %s", seed, cfg.mode, baseline, exc)
            wall = 1e3 * (time.perf_counter() - t0) if cfg.record_timing else 0.0
            return RunRecord(seed, cfg.mode, baseline, axis, axis_value, math.nan, math.nan,
                             math.nan, 0, False, math.nan, wall, [math.nan] * K, [math.nan] * K,
                             error=f"{type(exc).__name__}: {exc}", digest=digest)
    min_margin = ev.min_margin
    if tr.audit is not None:
        min_margin = min(min_margin, tr.audit)
    error = "" if ev.feasible else "final solution failed the feasibility audit"
    wall = 1e3 * (time.perf_counter() - t0) if cfg.record_timing else 0.0
    return RunRecord(seed, cfg.mode, baseline, axis, axis_value, ev.energy.E_total,
                     ev.energy.E_local, ev.energy.E_offload, tr.iterations, tr.converged,
                     min_margin, wall, [float(v) for v in sol.l], [float(v) for v in sol.p],
                     error=error, digest=digest, trace=[float(v) for v in tr.E])


def _task(args):
    cfg_dict, seed, baseline, axis, value = args
    cfg = ScenarioConfig.from_dict(cfg_dict)
    if axis:
        cfg = with_axis(cfg, axis, value)
    return run_scenario(cfg, seed, baseline, axis, value)


def run_tasks(cfg: ScenarioConfig, tasks: Sequence[tuple], workers: Optional[int] = None):
    """Run (seed, baseline, axis, value) tasks, in worker processes if workers > 1.

    Results come back in task order whatever the worker count.
    """
    workers = workers or cfg.workers
    args = [(cfg.to_dict(),) + tuple(t) for t in tasks]
    if workers <= 1 or len(args) <= 1:
        return [_task(a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_task, args))


def seed_list(cfg: ScenarioConfig, seeds=None) -> list:
    if seeds is None:
        seeds = cfg.seeds
    if isinstance(seeds, int):
        return list(range(cfg.first_seed, cfg.first_seed + seeds))
    return [int(s) for s in seeds]


def compare_baselines(cfg: ScenarioConfig, seeds=None, baselines=None,
                      workers: Optional[int] = None) -> list:
    """One record per (seed, baseline); all baselines of a seed share its channels."""
    baselines = list(baselines or cfg.baselines)
    for bl in baselines:
        if bl not in BASELINES:
            raise ConfigError("baselines", f"unknown baseline {bl!r}")
    tasks = [(s, bl, "", math.nan) for s in seed_list(cfg, seeds) for bl in baselines]
    return run_tasks(cfg, tasks, workers)


def sweep(cfg: ScenarioConfig, axis: str, values, seeds=None, baselines=None,
          workers: Optional[int] = None) -> list:
    """One record per (value, seed, baseline). Seeds are shared across values."""
    if axis not in AXES:
        raise ConfigError("axis", f"must be one of {AXES}, got {axis!r}")
    values = list(values)
    if not values:
        raise ConfigError("values", "need at least one value")
    for v in values:
        with_axis(cfg, axis, v)
    baselines = list(baselines or cfg.baselines)
    tasks = [(s, bl, axis, v) for v in values for s in seed_list(cfg, seeds) for bl in baselines]
    return run_tasks(cfg, tasks, workers)


def mean_energy(records: Sequence[RunRecord], baseline: Optional[str] = None,
                axis_value: Optional[float] = None, mode: Optional[str] = None) -> float:
    """Mean E_total over matching successful records (nan if none)."""
    sel = [r.E_total for r in records
           if (baseline is None or r.baseline == baseline)
           and (axis_value is None or r.axis_value == axis_value)
           and (mode is None or r.mode == mode) and not r.failed]
    return float(np.mean(sel)) if sel else math.nan


# ----------------------------------------------------------------------------
# persistence


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    if math.isnan(v):
        return "nan"
    return f"{v:.9g}"


def _round9(v: float) -> float:
    return float(f"{float(v):.9g}")


def _row(rec: RunRecord) -> list:
    return [rec.seed, rec.mode, rec.baseline, rec.axis, rec.axis_value, rec.E_total, rec.E_local,
            rec.E_offload, rec.iterations, rec.converged, rec.min_margin, rec.wall_ms]


def write_records(records: Sequence[RunRecord], path: str, fmt: Optional[str] = None):
    """CSV (fixed header, 9 significant digits) or JSON with the same fields and rounding."""
    fmt = fmt or ("json" if str(path).endswith(".json") else "csv")
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown record format {fmt!r}")
    K = max((len(r.l) for r in records), default=0)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            if fmt == "csv":
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(CSV_HEADER + [f"l_{k + 1}" for k in range(K)] +
                           [f"p_{k + 1}" for k in range(K)])
                for r in records:
                    pad = [""] * (K - len(r.l))
                    w.writerow([_fmt(v) for v in _row(r)] + [_fmt(v) for v in r.l] + pad +
                               [_fmt(v) for v in r.p] + pad)
            else:
                out = []
                for r in records:
                    d = dict(zip(CSV_HEADER, _row(r)))
                    for key in ("axis_value", "E_total_J", "E_local_J", "E_offload_J",
                                "min_margin", "wall_ms"):
                        d[key] = _json_float(d[key])
                    d["l"] = [_json_float(v) for v in r.l]
                    d["p"] = [_json_float(v) for v in r.p]
                    d["error"] = r.error
                    out.append(d)
                json.dump(out, fh, indent=1)
                fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write records to {path}: {exc.strerror}") from None


def _json_float(v):
    v = float(v)
    return None if math.isnan(v) else _round9(v)


def _parse(v: str) -> float:
    return math.nan if v in ("", "nan") else float(v)


def read_records(path: str) -> list:
    """Inverse of write_records (CSV or JSON, chosen by suffix)."""
    out = []
    with open(path, encoding="utf-8") as fh:
        if str(path).endswith(".json"):
            for d in json.load(fh):
                nanf = lambda v: math.nan if v is None else float(v)
                out.append(RunRecord(int(d["seed"]), d["mode"], d["baseline"], d["axis"],
                                     nanf(d["axis_value"]), nanf(d["E_total_J"]),
                                     nanf(d["E_local_J"]), nanf(d["E_offload_J"]),
                                     int(d["iterations"]), bool(d["converged"]),
                                     nanf(d["min_margin"]), nanf(d["wall_ms"]),
                                     [nanf(v) for v in d["l"]], [nanf(v) for v in d["p"]],
                                     error=d.get("error", "")))
            return out
        rows = list(csv.reader(fh))
    head = rows[0]
    if head[:len(CSV_HEADER)] != CSV_HEADER:
        raise ValueError(f"{path}: unexpected CSV header")
    K = (len(head) - len(CSV_HEADER)) // 2
    for row in rows[1:]:
        base = len(CSV_HEADER)
        l = [_parse(v) for v in row[base:base + K] if v != ""]
        p = [_parse(v) for v in row[base + K:base + 2 * K] if v != ""]
        out.append(RunRecord(int(row[0]), row[1], row[2], row[3], _parse(row[4]), _parse(row[5]),
                             _parse(row[6]), _parse(row[7]), int(row[8]), row[9] == "true",
                             _parse(row[10]), _parse(row[11]), l, p))
    return out


def write_trace(record: RunRecord, path: str):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"seed": record.seed, "mode": record.mode, "baseline": record.baseline,
                   "E": record.trace, "iterations": record.iterations,
                   "converged": record.converged}, fh, indent=1)
        fh.write("\n")


def configure_logging():
    level = os.environ.get("SECUREMEC_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
