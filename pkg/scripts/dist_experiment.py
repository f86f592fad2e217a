#!/usr/bin/env python3
"""Reversing-order adversary robustness: Dist histogram CSV.

Runs the N=21, f=5 reversing scenario for each actual adversary count and
writes dist.csv (columns: f_actual, dist_bucket, pair_count,
reversed_fraction).

Usage: python scripts/dist_experiment.py [out.csv]
"""

import sys
from pathlib import Path

from batchfair.harness import run_scenario, write_dist_csv


def main() -> int:
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("dist.csv")
    reports = run_scenario("reversing_fig8", serial=True)
    write_dist_csv(out, reports)
    for rep in reports:
        nonzero = [r for r in rep.dist_rows if r["pair_count"] and r["reversed_fraction"]]
        print(f"f_actual={rep.variant.get('f_actual')}: "
              f"buckets with reversals: "
              + (", ".join(f"d{r['dist_bucket']}={r['reversed_fraction']:.4f}" for r in nonzero) or "none"))
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
