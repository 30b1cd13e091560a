"""Run configuration, stepsize sweeps and experiment suites."""

from __future__ import annotations

import csv
import io
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import jsonschema
import numpy as np

from .compressors import CompressorSpec, Kind
from .engines import EngineConfig, Method, RunTrace, run
from .problems import NoiseModel, QuadraticProblem
from .schedules import TimeSchedule, TimeSource, sqrt_i, sqrt_i_over_d_pow

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


_TIME_SPEC = {
    "anyOf": [
        {"type": "number", "minimum": 0},
        {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        {"type": "string"},
    ]
}
_COMPRESSOR = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": [k.value for k in Kind]},
        "k": {"type": "integer", "minimum": 1},
    },
}
_OPT_NUMBER = {"type": ["number", "null"]}

RUN_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "problem", "method", "schedule"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "seed": {"type": "integer", "minimum": 0},
        "output": {"type": ["string", "null"]},
        "problem": {
            "type": "object",
            "additionalProperties": False,
            "required": ["d"],
            "properties": {
                "kind": {"const": "quadratic"},
                "d": {"type": "integer", "minimum": 1},
                "start": {"enum": ["ones", "sqrt_d_e1"]},
                "noise": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {
                        "kind": {"enum": ["none", "additive", "multiplicative"]},
                        "sigma": {"type": "number", "minimum": 0},
                        "p": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                    },
                },
            },
        },
        "method": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name"],
            "properties": {
                "name": {"enum": [m.value for m in Method]},
                "gamma": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "noise_ratio": {"type": "number", "minimum": 0},
                "compressor": _COMPRESSOR,
                "server_compressor": _COMPRESSOR,
                "rennala_batch": {"type": "integer", "minimum": 1},
                "max_iters": {"type": ["integer", "null"], "minimum": 1},
                "time_budget": _OPT_NUMBER,
                "grad_tol": _OPT_NUMBER,
            },
        },
        "schedule": {
            "type": "object",
            "additionalProperties": False,
            "required": ["n", "h", "tau_dot"],
            "properties": {
                "n": {"type": "integer", "minimum": 1},
                "h": _TIME_SPEC,
                "tau_dot": _TIME_SPEC,
                "tau_serv": {"type": "number", "minimum": 0},
                "tau_serv_full": {"type": "number", "minimum": 0},
            },
        },
    },
}

_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_GENERATOR = re.compile(
    rf"^(?:(?P<scale>{_NUM})\*)?(?:uniform\((?P<lo>{_NUM}),(?P<hi>{_NUM})\)|(?P<sqrt>sqrt_i)"
    rf"|sqrt_i_over_d_pow\((?P<pow>{_NUM})\))$"
)


@dataclass(frozen=True)
class RunConfig:
    problem: QuadraticProblem
    noise: NoiseModel
    start: str
    engine: EngineConfig
    schedule: TimeSchedule
    seed: int = 0
    output: str | None = None

    def x0(self) -> np.ndarray:
        return self.problem.start_point(self.start)

    def execute(self, seed: int | None = None) -> RunTrace:
        s = self.seed if seed is None else seed
        return run(self.engine, self.problem, self.noise, self.schedule, s, x0=self.x0())


def _field_path(error: jsonschema.ValidationError) -> str:
    return ".".join(str(p) for p in error.absolute_path) or "<root>"


def validate(raw: dict) -> None:
    validator = jsonschema.Draft7Validator(RUN_SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(f"config field {_field_path(e)}: {e.message}")


def parse_time_source(spec, n: int, d: int, field_name: str) -> TimeSource:
    if isinstance(spec, (int, float)):
        return TimeSource.fixed([float(spec)] * n)
    if isinstance(spec, list):
        if len(spec) != n:
            raise ConfigError(f"config field schedule.{field_name}: expected {n} values, got {len(spec)}")
        return TimeSource.fixed(spec)
    match = _GENERATOR.match(spec.replace(" ", ""))
    if not match:
        raise ConfigError(f"config field schedule.{field_name}: unknown time generator {spec!r}")
    scale = float(match["scale"]) if match["scale"] else 1.0
    if match["lo"] is not None:
        lo, hi = float(match["lo"]), float(match["hi"])
        if not 0 <= lo <= hi:
            raise ConfigError(f"config field schedule.{field_name}: uniform bounds must satisfy 0 <= low <= high")
        return TimeSource.uniform(lo, hi, scale)
    if match["sqrt"]:
        return sqrt_i(n, scale)
    values = np.asarray(sqrt_i_over_d_pow(n, d, float(match["pow"])).values)
    return TimeSource.fixed(scale * values)


def _compressor(block, d: int, name: str) -> CompressorSpec | None:
    if block is None:
        return None
    kind = Kind(block["kind"])
    k = block.get("k", d)
    if kind is not Kind.IDENTITY and "k" not in block:
        raise ConfigError(f"config field method.{name}.k: required for {kind.value}")
    try:
        return CompressorSpec(kind, k, d)
    except ValueError as exc:
        raise ConfigError(f"config field method.{name}: {exc}") from exc


def parse_config(raw: dict) -> RunConfig:
    validate(raw)
    prob = raw["problem"]
    d = prob["d"]
    problem = QuadraticProblem(d)
    nb = prob.get("noise", {"kind": "none"})
    if nb["kind"] == "additive":
        noise = NoiseModel.additive(nb.get("sigma", 0.0))
    elif nb["kind"] == "multiplicative":
        if "p" not in nb:
            raise ConfigError("config field problem.noise.p: required for multiplicative noise")
        noise = NoiseModel.multiplicative(nb["p"])
    else:
        noise = NoiseModel.none()
    m = raw["method"]
    sb = raw["schedule"]
    n = sb["n"]
    try:
        engine = EngineConfig(
            method=Method(m["name"]),
            gamma=m.get("gamma"),
            noise_ratio=m.get("noise_ratio", 0.0),
            compressor=_compressor(m.get("compressor"), d, "compressor"),
            server_compressor=_compressor(m.get("server_compressor"), d, "server_compressor"),
            rennala_batch=m.get("rennala_batch", 1),
            max_iters=m.get("max_iters", 1000),
            time_budget=m.get("time_budget"),
            grad_tol=m.get("grad_tol"),
        )
        schedule = TimeSchedule(
            n,
            parse_time_source(sb["h"], n, d, "h"),
            parse_time_source(sb["tau_dot"], n, d, "tau_dot"),
            tau_serv=sb.get("tau_serv", 0.0),
            tau_serv_full=sb.get("tau_serv_full", 0.0),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"config field method: {exc}") from exc
    return RunConfig(problem, noise, prob.get("start", "ones"), engine, schedule, raw.get("seed", 0), raw.get("output"))


# ---------------------------------------------------------------- concurrency


def thread_cap() -> int:
    raw = os.environ.get("SHADOWHEART_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _execute(job):
    config, seed = job
    return config.execute(seed)


def run_many(jobs: list[tuple[RunConfig, int]]) -> list[RunTrace]:
    """Run (config, seed) pairs, optionally on SHADOWHEART_THREADS processes; order is preserved."""
    cap = min(thread_cap(), len(jobs))
    if cap <= 1:
        return [_execute(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=cap) as pool:
        return list(pool.map(_execute, jobs))


# ---------------------------------------------------------------- sweep

SWEEP_PARAMS = ("gamma", "noise_ratio", "rennala_B")


@dataclass(frozen=True)
class SweepSpec:
    param: str
    grid: tuple[float, ...]
    threshold: float = 1e-4

    def __post_init__(self):
        if self.param not in SWEEP_PARAMS:
            raise ConfigError(f"sweep parameter must be one of {SWEEP_PARAMS}, got {self.param!r}")
        if not self.grid:
            raise ConfigError("sweep grid must be nonempty")
        object.__setattr__(self, "grid", tuple(self.grid))


@dataclass
class SweepResult:
    best: float
    metrics: dict[float, float]
    per_seed: dict[float, list[float]] = field(default_factory=dict)


def with_param(config: RunConfig, param: str, value: float) -> RunConfig:
    if param == "gamma":
        engine = replace(config.engine, gamma=float(value))
    elif param == "noise_ratio":
        engine = replace(config.engine, noise_ratio=float(value))
    else:
        engine = replace(config.engine, rennala_batch=int(value))
    return replace(config, engine=engine)


def sweep(config: RunConfig, spec: SweepSpec, seeds) -> SweepResult:
    """Median time-to-threshold per grid value; the smallest value wins ties."""
    seeds = list(seeds)
    if not seeds:
        raise ConfigError("at least one seed is required")
    jobs = [(with_param(config, spec.param, v), s) for v in spec.grid for s in seeds]
    traces = run_many(jobs)
    per_value: dict[float, list[float]] = {}
    for (cfg, _), (v, _s), tr in zip(jobs, [(v, s) for v in spec.grid for s in seeds], traces):
        per_value.setdefault(v, []).append(tr.time_to_threshold(spec.threshold))
    metrics = {v: float(np.median(ts)) for v, ts in per_value.items()}
    best = min(sorted(metrics), key=lambda v: metrics[v])
    return SweepResult(best, metrics, per_value)


# ---------------------------------------------------------------- suites

THRESHOLD = 1e-4


@dataclass(frozen=True)
class SuiteRun:
    regime: str
    config: RunConfig


def _uniform_schedule(n: int, c: float) -> TimeSchedule:
    return TimeSchedule(n, TimeSource.uniform(0.1, 1.0), TimeSource.uniform(0.1, 1.0, scale=c))


def _stops(time_budget: float, max_iters: int) -> dict:
    return {"grad_tol": THRESHOLD, "time_budget": time_budget, "max_iters": max_iters}


# Stepsizes and noise ratios found by sweeps on the additive defaults (seed 100).
ADDITIVE_METHODS = {
    "shadowheart": dict(gamma=0.75, noise_ratio=1000.0),
    "qsgd": dict(gamma=0.01),
    "minibatch": dict(gamma=0.05),
    "rennala": dict(gamma=0.1, rennala_batch=300),
    "async": dict(gamma=0.01),
    "sgd_one": dict(gamma=0.002),
}

# Per-n overrides for the worker-count sweep, tuned the same way at n = 10 and 1000.
ADDITIVE_BY_N = {
    10: {"shadowheart": dict(gamma=0.5, noise_ratio=1000.0), "minibatch": dict(gamma=0.004)},
    1000: {"shadowheart": dict(gamma=1.0, noise_ratio=1000.0), "minibatch": dict(gamma=0.3)},
}


def additive_params(n: int) -> dict[str, dict]:
    out = {name: dict(params) for name, params in ADDITIVE_METHODS.items()}
    for name, params in ADDITIVE_BY_N.get(n, {}).items():
        out[name].update(params)
    return out


def additive_runs(n: int, c: float, regime: str, *, time_budget: float = 2e6, sqrt_times: bool = False) -> list[SuiteRun]:
    d = 100
    problem = QuadraticProblem(d)
    if sqrt_times:
        schedule = TimeSchedule(n, sqrt_i(n), sqrt_i(n, c))
    else:
        schedule = _uniform_schedule(n, c)
    runs = []
    for name, params in additive_params(n).items():
        comp = CompressorSpec.rand_k(1, d) if name in ("shadowheart", "qsgd") else None
        engine = EngineConfig(Method(name), compressor=comp, **params, **_stops(time_budget, 200_000))
        runs.append(SuiteRun(regime, RunConfig(problem, NoiseModel.additive(0.1), "ones", engine, schedule)))
    return runs


MULTIPLICATIVE_POWERS = {"high": 1.0, "medium": 0.75, "low": 0.5}


def multiplicative_runs(speed: str, *, full_scale: bool = False) -> list[SuiteRun]:
    n = 10_000 if full_scale else 100
    d = 100 if not full_scale else 1000
    problem = QuadraticProblem(d)
    schedule = TimeSchedule(n, sqrt_i(n), sqrt_i_over_d_pow(n, d, MULTIPLICATIVE_POWERS[speed]))
    noise = NoiseModel.multiplicative(1e-3)
    runs = []
    # tuned on the medium regime at desk scale (seed 100)
    methods = {
        "shadowheart": dict(gamma=1.5, noise_ratio=0.1, compressor=CompressorSpec.rand_k(1, d)),
        "qsgd": dict(gamma=1.5, compressor=CompressorSpec.rand_k(1, d)),
        "minibatch": dict(gamma=1.5),
        "rennala": dict(gamma=1.9, rennala_batch=n),
        "async": dict(gamma=0.01),
        "sgd_one": dict(gamma=0.5),
    }
    for name, params in methods.items():
        engine = EngineConfig(Method(name), **params, grad_tol=THRESHOLD, time_budget=1e6, max_iters=20_000)
        runs.append(SuiteRun(f"multiplicative-{speed}", RunConfig(problem, noise, "sqrt_d_e1", engine, schedule)))
    return runs


def suite_runs(name: str, *, full_scale: bool = False) -> list[SuiteRun]:
    if name == "additive-defaults":
        return additive_runs(100, 1.0, "n=100,c=1")
    if name == "additive-n":
        return [r for n in (10, 100, 1000) for r in additive_runs(n, 1.0, f"n={n}")]
    if name == "additive-c-uniform":
        return [r for c in (0.1, 1.0, 100.0) for r in additive_runs(100, c, f"c={c:g}")]
    if name == "additive-c-sqrt":
        return [r for c in (0.01, 0.1, 1.0) for r in additive_runs(100, c, f"c={c:g}", sqrt_times=True)]
    if name.startswith("multiplicative-") and name.split("-", 1)[1] in MULTIPLICATIVE_POWERS:
        return multiplicative_runs(name.split("-", 1)[1], full_scale=full_scale)
    raise ConfigError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")


SUITES = (
    "additive-defaults",
    "additive-n",
    "additive-c-uniform",
    "additive-c-sqrt",
    "multiplicative-high",
    "multiplicative-medium",
    "multiplicative-low",
    "table1",
)

SUMMARY_COLUMNS = ("regime", "method", "seed", "gamma", "noise_ratio", "time_to_threshold", "iterations", "stop_reason")


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9.]+", "_", text).strip("_")


def suite(name: str, seeds, out_dir, *, full_scale: bool = False) -> Path:
    """Write one trace CSV per (regime, method, seed) and a summary CSV; returns the summary path."""
    seeds = list(seeds)
    if not seeds:
        raise ConfigError("at least one seed is required")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if name == "table1":
        from .complexity import table1_comparison

        table = table1_comparison(seeds)
        path = out / "table1.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method"] + [f"ratio={r:g}" for r in table.ratios])
            for method, row in table.rows().items():
                w.writerow([method] + [repr(v) for v in row])
        return path
    runs = suite_runs(name, full_scale=full_scale)
    jobs = [(r.config, s) for r in runs for s in seeds]
    traces = run_many(jobs)
    rows = []
    for (r, s), tr in zip([(r, s) for r in runs for s in seeds], traces):
        method = r.config.engine.method.value
        tr.write_csv(out / f"{_slug(r.regime)}__{method}__seed{s}.csv")
        rows.append(
            [
                r.regime,
                method,
                s,
                repr(tr.metadata["gamma"]),
                repr(r.config.engine.noise_ratio),
                repr(tr.time_to_threshold(THRESHOLD)),
                tr.records[-1].k,
                tr.stop_reason,
            ]
        )
    path = out / "summary.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        w.writerows(rows)
    return path


def read_summary(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def summary_text(path) -> str:
    buf = io.StringIO()
    rows = read_summary(path)
    for row in rows:
        t = float(row["time_to_threshold"])
        shown = "inf" if math.isinf(t) else f"{t:.6g}"
        buf.write(f"{row['regime']:<14} {row['method']:<12} seed={row['seed']:<4} t={shown}\n")
    return buf.getvalue()
