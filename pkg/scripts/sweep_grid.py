#!/usr/bin/env python3
"""Throughput/latency grid sweep across n, f, gamma, and load.

Usage: python scripts/sweep_grid.py out.csv
"""

import sys

from batchfair.harness import sweep


def main() -> int:
    out = sys.argv[1] if len(sys.argv) > 1 else "sweep.csv"
    rows = sweep(
        {"n": [5, 9, 13], "f": [1, 2, 3], "gamma": ["1", "0.8"], "txs": [90, 180]},
        seeds=[1, 2, 3, 4, 5],
        out_path=out,
    )
    for row in rows:
        print(row)
    return 0


if __name__ == "__main__":
    sys.exit(main())
