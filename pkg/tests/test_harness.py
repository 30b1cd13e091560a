import copy
import csv
import json
import math

import pytest

from shadowheart import harness
from shadowheart.cli import cli_main
from shadowheart.engines import Method
from shadowheart.harness import ConfigError, SweepSpec, parse_config, read_summary, suite, sweep

BASE = {
    "schema_version": 1,
    "seed": 3,
    "problem": {"kind": "quadratic", "d": 10, "noise": {"kind": "additive", "sigma": 0.1}, "start": "ones"},
    "method": {
        "name": "shadowheart",
        "gamma": 0.5,
        "noise_ratio": 10,
        "compressor": {"kind": "rand_k", "k": 2},
        "max_iters": 20,
    },
    "schedule": {"n": 4, "h": "uniform(0.1,1)", "tau_dot": "2*uniform(0.1,1)"},
}


def config(**changes):
    raw = copy.deepcopy(BASE)
    for path, value in changes.items():
        node = raw
        keys = path.split("__")
        for k in keys[:-1]:
            node = node[k]
        if value is None:
            node.pop(keys[-1], None)
        else:
            node[keys[-1]] = value
    return raw


def write(tmp_path, raw, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return str(path)


def test_parse_valid_config():
    cfg = parse_config(config())
    assert cfg.engine.method is Method.SHADOWHEART
    assert cfg.engine.compressor.k == 2
    assert cfg.schedule.tau_dot.scale == 2.0
    assert cfg.seed == 3


@pytest.mark.parametrize(
    "changes,field",
    [
        ({"method__name": "sgd_fast"}, "method.name"),
        ({"method__extra": 1}, "method"),
        ({"problem__d": 0}, "problem.d"),
        ({"schema_version": 2}, "schema_version"),
        ({"schedule__h": "exp(1)"}, "schedule.h"),
        ({"schedule__h": [1.0, 2.0]}, "schedule.h"),
        ({"method__compressor": {"kind": "rand_k"}}, "method.compressor.k"),
        ({"method__compressor": {"kind": "top_k", "k": 2}}, "method"),
        ({"problem__noise": {"kind": "multiplicative"}}, "problem.noise.p"),
    ],
)
def test_config_errors_name_the_field(changes, field):
    with pytest.raises(ConfigError, match=rf"config field {field}\b"):
        parse_config(config(**changes))


def test_cli_unknown_method_exit_code(tmp_path, capsys):
    code = cli_main(["simulate", "--config", write(tmp_path, config(method__name="sgd_fast"))])
    assert code == 2
    assert "method.name" in capsys.readouterr().err


def test_cli_missing_file(tmp_path, capsys):
    assert cli_main(["simulate", "--config", str(tmp_path / "nope.json")]) == 2


def test_cli_equilibrium_closed_form(tmp_path, capsys):
    path = write(tmp_path, {"omega": 1, "noise_ratio": 1, "workers": [{"h": 1, "tau": 1}]})
    assert cli_main(["equilibrium", "--input", path, "--json-only"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["t_star"] == pytest.approx(2 + 2 * math.sqrt(2), rel=1e-9)
    assert out["plan"]["b"] == [4] and out["plan"]["m"] == [4]


def test_cli_equilibrium_infinite(tmp_path, capsys):
    path = write(tmp_path, {"omega": 1, "noise_ratio": 1, "workers": [{"h": "inf", "tau": 1}]})
    assert cli_main(["equilibrium", "--input", path, "--json-only"]) == 0
    assert json.loads(capsys.readouterr().out)["t_star"] == "inf"


def test_cli_simulate_is_byte_identical(tmp_path):
    path = write(tmp_path, config())
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli_main(["simulate", "--config", path, "--out", str(a)]) == 0
    assert cli_main(["simulate", "--config", path, "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = list(csv.reader(a.open()))
    assert rows[0] == ["t_seconds", "iteration", "f", "grad_norm_sq", "sum_b", "sum_m", "event_note"]
    assert len(rows) == 22


def test_cli_numerical_failure_exit_code(tmp_path):
    raw = config(method__name="rennala", method__compressor=None, method__rennala_batch=2, schedule__n=1,
                 schedule__h=[1e308], schedule__tau_dot=[1e308])
    assert cli_main(["simulate", "--config", write(tmp_path, raw), "--out", str(tmp_path / "x.csv")]) == 3


def test_cli_compare(tmp_path, capsys):
    path = write(tmp_path, {"d": 10, "h": [1, 2], "tau_dot": [1, 1], "noise_ratio": 0})
    assert cli_main(["compare", "--inputs", path]) == 0
    out = capsys.readouterr().out
    values = json.loads(out[: out.rindex("}") + 1])
    assert values["minibatch"] == 12


def test_sweep_single_value():
    cfg = parse_config(config())
    assert sweep(cfg, SweepSpec("gamma", (0.3,)), [0]).best == 0.3


def test_sweep_picks_stable_stepsize():
    raw = config(problem__noise={"kind": "none"}, method__name="minibatch", method__compressor=None,
                 method__max_iters=5000, method__grad_tol=1e-4)
    cfg = parse_config(raw)
    L = cfg.problem.L
    res = sweep(cfg, SweepSpec("gamma", (1 / L, 10 / L), 1e-4), [0, 1])
    assert res.best == 1 / L
    assert math.isinf(res.metrics[10 / L])
    assert math.isfinite(res.metrics[1 / L])


def test_sweep_noise_ratio_grid_has_finite_winner():
    raw = config(method__max_iters=3000, method__grad_tol=1e-4, method__gamma=1.0)
    res = sweep(parse_config(raw), SweepSpec("noise_ratio", (1, 5, 10, 20, 30, 40, 80, 120, 150, 200)), [0])
    assert math.isfinite(res.metrics[res.best])


def test_sweep_ties_go_to_smaller_value():
    raw = config(problem__noise={"kind": "none"}, method__compressor=None)
    res = sweep(parse_config(raw), SweepSpec("noise_ratio", (5.0, 1.0), 1e9), [0])
    assert res.metrics[1.0] == res.metrics[5.0] == 0.0
    assert res.best == 1.0


def test_sweep_rejects_unknown_param():
    with pytest.raises(ConfigError):
        SweepSpec("beta", (1.0,))


def test_suite_errors(tmp_path):
    with pytest.raises(ConfigError):
        suite("additive-defaults", [], tmp_path)
    with pytest.raises(ConfigError):
        suite("nope", [0], tmp_path)
    assert cli_main(["suite", "nope", "--out-dir", str(tmp_path)]) == 2


def test_suite_regimes():
    runs = harness.suite_runs("multiplicative-medium")
    sched = runs[0].config.schedule
    assert sched.n == 100 and runs[0].config.problem.d == 100
    assert sched.h.values[3] == 2.0
    assert sched.tau_dot.values[3] == pytest.approx(2.0 / 100**0.75)
    assert runs[0].config.noise.p == 1e-3
    full = harness.suite_runs("multiplicative-medium", full_scale=True)
    assert full[0].config.schedule.n == 10_000
    defaults = harness.suite_runs("additive-defaults")
    assert {r.config.engine.method.value for r in defaults} == {"shadowheart", "qsgd", "minibatch", "rennala", "async", "sgd_one"}
    sh = defaults[0].config
    assert sh.schedule.n == 100 and sh.noise.sigma == 0.1 and sh.engine.compressor.k == 1


def test_suite_summary_cross_check(tmp_path, monkeypatch):
    small = [harness.SuiteRun("small", parse_config(config(method__max_iters=200, method__grad_tol=1e-3)))]
    monkeypatch.setattr(harness, "suite_runs", lambda name, full_scale=False: small)
    monkeypatch.setattr(harness, "THRESHOLD", 1e-3)
    path = suite("anything", [0, 1], tmp_path)
    rows = read_summary(path)
    assert len(rows) == 2
    for row in rows:
        trace = tmp_path / f"small__shadowheart__seed{row['seed']}.csv"
        scan = math.inf
        for rec in csv.DictReader(trace.open()):
            if float(rec["grad_norm_sq"]) <= 1e-3:
                scan = float(rec["t_seconds"])
                break
        assert float(row["time_to_threshold"]) == scan
    first = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
    suite("anything", [0, 1], tmp_path)
    assert {p.name: p.read_bytes() for p in tmp_path.iterdir()} == first


def test_table1_suite_file(tmp_path):
    path = suite("table1", [0], tmp_path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["method", "ratio=1", "ratio=1000", "ratio=1e+06"]
    assert rows[4][0] == "shadowheart" and rows[4][1:] == ["1.0"] * 3


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("SHADOWHEART_THREADS", "3")
    assert harness.thread_cap() == 3
    monkeypatch.setenv("SHADOWHEART_THREADS", "x")
    assert harness.thread_cap() == 1


def test_parallel_runs_match_serial(monkeypatch):
    cfg = parse_config(config())
    serial = [t.csv_text() for t in harness.run_many([(cfg, 0), (cfg, 1)])]
    monkeypatch.setenv("SHADOWHEART_THREADS", "2")
    assert [t.csv_text() for t in harness.run_many([(cfg, 0), (cfg, 1)])] == serial
