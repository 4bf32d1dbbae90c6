"""Sweep the weighting hyperparameters (m, k) on the double-moon task.

Writes a gnuplot-ready grid.csv of mean accuracy per cell plus the
unweighted baseline for reference.
"""

import argparse
import time

from steepshape.cli import _parse_seeds
from steepshape.experiments import (
    HyperGridConfig,
    VbswToyConfig,
    emit_hyper_grid,
    run_hyper_grid,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/hypergrid")
    ap.add_argument("--seeds", default="0:10", help="seed spec: 0:10, 1,2,3 or 7")
    ap.add_argument("--m-steps", type=int, default=20)
    ap.add_argument("--k-steps", type=int, default=20)
    args = ap.parse_args()

    cfg = HyperGridConfig(
        base=VbswToyConfig(seeds=_parse_seeds(args.seeds)),
        m_steps=args.m_steps,
        k_steps=args.k_steps,
    )
    t0 = time.time()
    result = run_hyper_grid(cfg)
    emit_hyper_grid(args.out, cfg, result)
    cells = result["cells"]
    best = max(cells, key=lambda c: c["mean"])
    worst = min(cells, key=lambda c: c["mean"])
    print(f"{len(cells)} cells ({time.time() - t0:.0f}s), metric {result['metric']}")
    print(f"  baseline: {result['baseline']['mean']:.4f}")
    print(f"  best  m={best['m']:.1f} k={best['k']}: {best['mean']:.4f}")
    print(f"  worst m={worst['m']:.1f} k={worst['k']}: {worst['mean']:.4f}")


if __name__ == "__main__":
    main()
