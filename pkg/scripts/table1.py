"""Print the comparison table of speedup factors and their deviation from the reference factors."""

import argparse
import math

from shadowheart.complexity import table1_comparison

PUBLISHED = {
    "minibatch": (1e3, 1e3, 1e4),
    "qsgd": (3.0, 1e2, 1e4),
    "rennala": (1e2, 10.0, 1.5),
}


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=10)
    args = parser.parse_args()
    table = table1_comparison(range(args.seeds))
    print(f"{'method':<12}" + "".join(f"{f'ratio={r:g}':>22}" for r in table.ratios))
    for name, row in table.rows().items():
        cells = []
        for col, v in enumerate(row):
            ref = PUBLISHED.get(name)
            dev = f" ({math.log10(v / ref[col]):+.2f})" if ref else ""
            cells.append(f"{v:.4g}{dev}")
        print(f"{name:<12}" + "".join(f"{c:>22}" for c in cells))
    print("parenthesized: log10 of computed / published factor")


if __name__ == "__main__":
    main()
