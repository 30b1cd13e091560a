"""Stepsize and noise-ratio grid search behind the additive-noise defaults.

Tuning uses seed 100 so the evaluation seeds stay untouched.
"""

import argparse
from shadowheart import harness
from shadowheart.harness import SweepSpec, sweep

GRIDS = {
    "shadowheart": {"noise_ratio": (300, 1000, 3000), "gamma": (0.5, 0.75, 1.0)},
    "minibatch": {"gamma": (0.003, 0.004, 0.005, 0.03, 0.05, 0.07, 0.1, 0.2, 0.3, 0.4, 0.5)},
    "qsgd": {"gamma": (0.003, 0.01, 0.03)},
    "rennala": {"rennala_B": (30, 100, 300), "gamma": (0.02, 0.05, 0.1)},
    "async": {"gamma": (0.001, 0.003, 0.01)},
    "sgd_one": {"gamma": (0.0005, 0.001, 0.002, 0.005)},
}


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=100)
    parser.add_argument("--methods", default="shadowheart,minibatch")
    parser.add_argument("--seed", type=int, default=100)
    args = parser.parse_args()
    wanted = args.methods.split(",")
    for run in harness.additive_runs(args.n, 1.0, f"n={args.n}"):
        name = run.config.engine.method.value
        if name not in wanted:
            continue
        *outer, (param, grid) = GRIDS[name].items()
        settings = [(None, None)] if not outer else [(outer[0][0], v) for v in outer[0][1]]
        for fixed, value in settings:
            cfg = run.config if fixed is None else harness.with_param(run.config, fixed, value)
            result = sweep(cfg, SweepSpec(param, grid), [args.seed])
            label = "" if fixed is None else f" {fixed}={value}"
            print(f"{name}{label}: {param} {result.metrics} best {result.best}", flush=True)


if __name__ == "__main__":
    main()
