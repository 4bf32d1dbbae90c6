"""Label-noise robustness of feature-space reweighting on the double moon.

For each flip probability, trains a base network on corrupted labels and
compares it against the same network with a variance-reweighted final
layer, both evaluated on a clean test set.
"""

import argparse
import time

from steepshape.cli import _parse_seeds
from steepshape.experiments import LabelNoiseConfig, emit_label_noise, run_label_noise


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/noise")
    ap.add_argument("--seeds", default="0:10", help="seed spec: 0:10, 1,2,3 or 7")
    args = ap.parse_args()

    cfg = LabelNoiseConfig(seeds=_parse_seeds(args.seeds))
    t0 = time.time()
    result = run_label_noise(cfg)
    emit_label_noise(args.out, cfg, result)
    print(f"label noise ({len(cfg.seeds)} seeds, {time.time() - t0:.0f}s)")
    print(f"  {'p':>5} {'baseline':>9} {'vbsw':>9}")
    for p in cfg.noise_levels:
        means = {}
        for arm in ("baseline", "vbsw"):
            vals = [r["accuracy"] for r in result[arm].rows if r["p"] == p]
            means[arm] = sum(vals) / len(vals)
        print(f"  {p:>5.2f} {means['baseline'] * 100:>8.2f}% {means['vbsw'] * 100:>8.2f}%")


if __name__ == "__main__":
    main()
