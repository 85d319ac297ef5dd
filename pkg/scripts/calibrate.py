"""Headroom check for a synthetic corruption design.

Compares the Dice reached by the global prototype with two oracle
prototypes: the support mean over uncorrupted foreground only, and the
query's own ground-truth mean. No re-weighting of support clusters can beat
the clean-support oracle by much, so its gap over global-only bounds what a
local-prototype method can gain on the design.

    python scripts/calibrate.py --config configs/adversarial.json -n 60
    python scripts/calibrate.py --set distractor_texture=0.5 --set noise_sigma=0.05
"""

import argparse
import json

import numpy as np

from protoseg.features import GrayImage, extract_features
from protoseg.grid import BinaryMask, cosine_similarity_map, resample_bilinear, resample_map_bilinear, \
    resample_mask_nearest
from protoseg.harness import featurizer_config, load_config, pipeline_config
from protoseg.mpg import masked_average_pool
from protoseg.pipeline import dice
from protoseg.synth import SynthConfig, make_episode


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default="configs/adversarial.json")
    ap.add_argument("-n", type=int, default=40)
    ap.add_argument("--set", action="append", default=[], help="synth override key=json-value")
    args = ap.parse_args()

    cfg = load_config(args.config)
    synth = dict(cfg.get("synth", {}))
    for kv in args.set:
        k, v = kv.split("=", 1)
        synth[k] = json.loads(v)
    sc = SynthConfig.from_dict(synth)
    pcfg, fcfg = pipeline_config(cfg), featurizer_config(cfg)
    R, tau = pcfg.working_resolution, pcfg.tau

    def score(p, Fq, qm):
        sim = resample_map_bilinear(cosine_similarity_map(p, Fq), *qm.shape)
        return dice(BinaryMask(sim >= tau), BinaryMask(qm))

    res = []
    for i in range(args.n):
        ep = make_episode(sc, i)
        (si, sm, bad), (qi, qm, _) = ep["support"], ep["query"]
        Fs = resample_bilinear(extract_features(GrayImage(si), fcfg), R, R)
        Fq = resample_bilinear(extract_features(GrayImage(qi), fcfg), R, R)
        pools = [masked_average_pool(Fs, resample_mask_nearest(BinaryMask(sm), R, R))]
        clean = resample_mask_nearest(BinaryMask(sm & ~bad), R, R)
        pools.append(masked_average_pool(Fs, clean) if clean.count() else pools[0])
        pools.append(masked_average_pool(Fq, resample_mask_nearest(BinaryMask(qm), R, R)))
        res.append([score(p, Fq, qm) for p in pools])
    g, c, q = np.mean(res, axis=0)
    print(f"global {g:.4f}  clean-support oracle {c:.4f} ({c - g:+.4f})  query oracle {q:.4f} ({q - g:+.4f})")


if __name__ == "__main__":
    main()
