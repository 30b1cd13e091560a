"""Run every experiment suite into one output directory per suite."""

import argparse
from pathlib import Path

from shadowheart.harness import SUITES, suite, summary_text


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="results")
    parser.add_argument("--seeds", type=int, default=3)
    parser.add_argument("--only", help="comma-separated suite names")
    parser.add_argument("--full-scale", action="store_true")
    args = parser.parse_args()
    names = args.only.split(",") if args.only else SUITES
    for name in names:
        path = suite(name, range(args.seeds), Path(args.out_dir) / name, full_scale=args.full_scale)
        print(f"== {name}: {path}")
        if name != "table1":
            print(summary_text(path), end="")


if __name__ == "__main__":
    main()
