"""Command-line entry point: equilibrium, simulate, compare, sweep, suite."""

from __future__ import annotations

import argparse
import json
import math
import sys

from . import complexity as cx
from .engines import NumericalFailure
from .equilibrium import EquilibriumQuery, equilibrium_time, plan_iteration
from .harness import SUITES, ConfigError, SweepSpec, parse_config, suite, summary_text, sweep

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


def _jsonable(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return v


def _float(v) -> float:
    return math.inf if v in ("inf", "Infinity") else float(v)


def cmd_equilibrium(args) -> int:
    raw = _load_json(args.input)
    try:
        workers = raw["workers"]
        query = EquilibriumQuery.from_arrays(
            _float(raw["omega"]),
            _float(raw["noise_ratio"]),
            [_float(w["h"]) for w in workers],
            [_float(w["tau"]) for w in workers],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"equilibrium input: {exc}") from exc
    res = equilibrium_time(query)
    out = {
        "t_star": _jsonable(res.t_star),
        "j_star": res.j_star,
        "s_values": [_jsonable(s) for s in res.s_values],
        "permutation": list(res.permutation),
    }
    if math.isfinite(res.t_star):
        try:
            plan = plan_iteration(query, res.t_star)
            out["plan"] = {
                "b": plan.b.tolist(),
                "m": plan.m.tolist(),
                "w": plan.w.tolist(),
                "active": list(plan.active_ids),
            }
        except ValueError as exc:
            out["plan"] = {"error": str(exc)}
    print(json.dumps(out, indent=2))
    if not args.json_only:
        print(f"t* = {res.t_star!r}  (j* = {res.j_star})")
        if "plan" in out and "b" in out["plan"]:
            print(f"{'worker':>6} {'h':>10} {'tau':>10} {'b':>6} {'m':>6} {'w':>12}")
            for i, wk in enumerate(query.workers):
                p = out["plan"]
                print(f"{i:>6} {wk.h:>10.4g} {wk.tau:>10.4g} {p['b'][i]:>6} {p['m'][i]:>6} {p['w'][i]:>12.6g}")
    return 0


def cmd_simulate(args) -> int:
    config = parse_config(_load_json(args.config))
    seed = config.seed if args.seed is None else args.seed
    trace = config.execute(seed)
    out = args.out or config.output
    if out:
        trace.write_csv(out)
    else:
        sys.stdout.write(trace.csv_text())
    print(f"stop: {trace.stop_reason} after {trace.records[-1].k} steps at t={trace.records[-1].t:.6g}s", file=sys.stderr)
    return 0


def cmd_compare(args) -> int:
    if args.table1:
        table = cx.table1_comparison(range(args.seeds))
        out = {"ratios": list(table.ratios), "seeds": table.seeds, "factors": table.rows()}
        print(json.dumps(out, indent=2))
        print(f"{'method':<12}" + "".join(f"{f'ratio={r:g}':>16}" for r in table.ratios))
        for name, row in table.rows().items():
            print(f"{name:<12}" + "".join(f"{v:>16.4g}" for v in row))
        if not args.inputs:
            return 0
    if not args.inputs:
        raise ConfigError("compare needs --inputs or --table1")
    raw = _load_json(args.inputs)
    try:
        inp = cx.ComplexityInputs(
            raw["d"],
            [_float(v) for v in raw["h"]],
            [_float(v) for v in raw["tau_dot"]],
            _float(raw["noise_ratio"]),
            _float(raw.get("ld_eps", 1.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"compare input: {exc}") from exc
    wc = args.with_constants
    values = {
        "minibatch": cx.t_minibatch(inp),
        "qsgd": cx.t_qsgd(inp),
        "rennala_lower": cx.t_rennala_lower(inp),
        "shadowheart": cx.t_shadowheart(inp, with_constants=wc),
        "bidirectional": cx.t_bidirectional(
            inp, float(raw.get("alpha", 1.0)), float(raw.get("tau_serv", 0.0)), with_constants=wc
        ),
    }
    if inp.noise_ratio >= 1:
        values["sgd_one"] = cx.t_sgd_one(inp)
    if "ratios" in raw:
        values["adaptive"] = cx.t_adaptive(inp, [_float(r) for r in raw["ratios"]], with_constants=wc)
    print(json.dumps({k: _jsonable(v) for k, v in values.items()}, indent=2))
    for k, v in values.items():
        print(f"{k:<14} {v:>16.6g}")
    return 0


def _parse_list(text: str, cast) -> list:
    try:
        return [cast(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse list {text!r}") from exc


def cmd_sweep(args) -> int:
    config = parse_config(_load_json(args.config))
    spec = SweepSpec(args.param, tuple(_parse_list(args.grid, float)), args.threshold)
    result = sweep(config, spec, _parse_list(args.seeds, int))
    out = {
        "param": spec.param,
        "best": result.best,
        "metrics": {repr(k): _jsonable(v) for k, v in result.metrics.items()},
    }
    print(json.dumps(out, indent=2))
    return 0


def cmd_suite(args) -> int:
    path = suite(args.name, _parse_list(args.seeds, int), args.out_dir, full_scale=args.full_scale)
    if args.name != "table1":
        sys.stdout.write(summary_text(path))
    print(f"wrote {path}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shadowheart", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("equilibrium", help="equilibrium time and iteration plan for a worker file")
    p.add_argument("--input", required=True, help="JSON {omega, noise_ratio, workers: [{h, tau}, ...]}")
    p.add_argument("--json-only", action="store_true")
    p.set_defaults(func=cmd_equilibrium)

    p = sub.add_parser("simulate", help="run one configured method and write its trace")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="trace CSV path; stdout when omitted")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="closed-form time complexities")
    p.add_argument("--inputs")
    p.add_argument("--table1", action="store_true")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--with-constants", action="store_true")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="grid search over gamma, noise_ratio or rennala_B")
    p.add_argument("--config", required=True)
    p.add_argument("--param", required=True)
    p.add_argument("--grid", required=True, help="comma-separated values")
    p.add_argument("--seeds", default="0")
    p.add_argument("--threshold", type=float, default=1e-4)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("suite", help="experiment suites: " + ", ".join(SUITES))
    p.add_argument("name")
    p.add_argument("--seeds", default="0")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--full-scale", action="store_true", help="use n=10^4 in the multiplicative suites")
    p.set_defaults(func=cmd_suite)
    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, FloatingPointError, OverflowError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
