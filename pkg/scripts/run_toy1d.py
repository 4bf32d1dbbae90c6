"""Uniform versus sensitivity-guided sampling on two steep 1-D targets.

Runs the paired-seed protocol for the Runge function and a sharp tanh and
prints the mean errors per arm.  Full results land under --out.
"""

import argparse
import os
import time

from steepshape.cli import _parse_seeds
from steepshape.experiments import Toy1dConfig, emit_toy_1d, run_toy_1d


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/toy1d")
    ap.add_argument("--seeds", default="0:40", help="seed spec: 0:40, 1,2,3 or 7")
    args = ap.parse_args()
    seeds = _parse_seeds(args.seeds)

    for oracle in ("runge", "tanh"):
        cfg = Toy1dConfig(oracle=oracle, seeds=seeds)
        t0 = time.time()
        result = run_toy_1d(cfg)
        outdir = os.path.join(args.out, oracle)
        emit_toy_1d(outdir, cfg, result)
        print(f"{oracle} ({len(seeds)} seeds, {time.time() - t0:.0f}s)")
        for arm in ("bs", "tbs"):
            agg = result[arm].aggregate()
            print(
                f"  {arm:>3}: linf {agg['linf']['mean']:.4f} "
                f"+- {agg['linf']['ci95']:.4f}, l2 {agg['l2']['mean']:.2e}"
            )
        ratio = result["tbs"].values("linf").mean() / result["bs"].values("linf").mean()
        print(f"  linf ratio tbs/bs: {ratio:.3f}")


if __name__ == "__main__":
    main()
