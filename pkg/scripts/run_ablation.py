"""Generate a corpus from a config and print the variant ladder.

    python scripts/run_ablation.py --config configs/adversarial.json --out runs/adversarial
"""

import argparse
import time
from pathlib import Path

from protoseg.harness import featurizer_config, load_config, pipeline_config, run_ablation
from protoseg.synth import SynthConfig, synth_corpus


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default="configs/adversarial.json")
    ap.add_argument("--out", default="runs/ablation")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--self-match", action="store_true", help="replace every query by its support")
    args = ap.parse_args()

    cfg = load_config(args.config)
    out = Path(args.out)
    t0 = time.perf_counter()
    manifest = synth_corpus(SynthConfig.from_dict(cfg.get("synth", {})), out / "corpus")
    if args.self_match:
        manifest = manifest.with_query_as_support()
    rows = run_ablation(manifest, pipeline_config(cfg), out / "ablation.csv", featurizer_config(cfg), args.workers)
    for r in rows:
        print(f"{r['variant']:16s} dice {r['mean_dice']:.4f} +- {r['std_dice']:.4f}  delta {r['delta_vs_global']:+.4f}")
    print(f"{len(manifest.episodes)} episodes in {time.perf_counter() - t0:.1f}s -> {out / 'ablation.csv'}")


if __name__ == "__main__":
    main()
