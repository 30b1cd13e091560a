"""Shadowheart vs Minibatch time to threshold as the worker count grows."""

import argparse

import numpy as np

from shadowheart import harness


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--ns", default="10,100,1000")
    args = parser.parse_args()
    print(f"{'n':>6} {'shadowheart':>14} {'minibatch':>14} {'factor':>8}")
    for n in (int(v) for v in args.ns.split(",")):
        medians = {}
        for run in harness.additive_runs(n, 1.0, f"n={n}"):
            name = run.config.engine.method.value
            if name in ("shadowheart", "minibatch"):
                times = [run.config.execute(s).time_to_threshold(harness.THRESHOLD) for s in range(args.seeds)]
                medians[name] = float(np.median(times))
        sh, mb = medians["shadowheart"], medians["minibatch"]
        print(f"{n:>6} {sh:>14.6g} {mb:>14.6g} {mb / sh:>8.3g}", flush=True)


if __name__ == "__main__":
    main()
