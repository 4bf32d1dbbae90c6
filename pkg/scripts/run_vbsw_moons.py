"""Double-moon classification with and without variance-based weights."""

import argparse
import time

from steepshape.cli import _parse_seeds
from steepshape.experiments import VbswToyConfig, emit_vbsw_toy, run_vbsw_toy


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/vbsw")
    ap.add_argument("--seeds", default="0:50", help="seed spec: 0:50, 1,2,3 or 7")
    ap.add_argument("--k", type=int, default=20, help="neighborhood size")
    ap.add_argument("--m", type=float, default=100.0, help="max/min weight ratio")
    args = ap.parse_args()

    cfg = VbswToyConfig(seeds=_parse_seeds(args.seeds), k=args.k, m=args.m)
    t0 = time.time()
    result = run_vbsw_toy(cfg)
    emit_vbsw_toy(args.out, cfg, result)
    print(f"double moon ({len(cfg.seeds)} seeds, {time.time() - t0:.0f}s)")
    for arm in ("baseline", "vbsw"):
        agg = result[arm].aggregate()["accuracy"]
        print(f"  {arm:>8}: accuracy {agg['mean'] * 100:.2f} +- {agg['ci95'] * 100:.2f}")
    gap = (
        result["vbsw"].values("accuracy").mean()
        - result["baseline"].values("accuracy").mean()
    )
    print(f"  gap: {gap * 100:+.2f} points")


if __name__ == "__main__":
    main()
