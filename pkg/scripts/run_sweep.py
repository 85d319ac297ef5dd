"""k_max sweep on a generated corpus.

    python scripts/run_sweep.py --config configs/adversarial.json --k 1,4,8,16,24,36
"""

import argparse
from pathlib import Path

from protoseg.harness import featurizer_config, load_config, pipeline_config, run_sweep
from protoseg.synth import SynthConfig, synth_corpus


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default="configs/adversarial.json")
    ap.add_argument("--out", default="runs/sweep")
    ap.add_argument("--k", default="1,4,8,16,24,36")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    cfg = load_config(args.config)
    out = Path(args.out)
    manifest = synth_corpus(SynthConfig.from_dict(cfg.get("synth", {})), out / "corpus")
    ks = [int(k) for k in args.k.split(",")]
    rows = run_sweep(manifest, pipeline_config(cfg), ks, out / "sweep.csv", featurizer_config(cfg), args.workers)
    for r in rows:
        print(f"k_max={r['k_max']:3d}  dice {r['mean_dice']:.5f}  mean k_support {r['mean_k_support']:.2f}")


if __name__ == "__main__":
    main()
