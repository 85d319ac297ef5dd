"""Command line entry point.

Exit codes: 0 success, 1 some episodes failed, 2 usage or format error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .features import GrayImage, extract_features, read_pgm, write_pgm
from .grid import BinaryMask, FormatError, read_mask, read_tensor, write_mask
from .harness import (DEFAULT_K_VALUES, NoEpisodesError, _write_csv, featurizer_config, load_config,
                      pipeline_config, read_matrix_csv, run_ablation, run_eval, run_sweep)
from .mpg import EmptyForegroundError
from .pipeline import infer_episode
from .qlpe import OtConfig, extract_weights, sinkhorn_cost
from .synth import EpisodeManifest, SynthConfig, synth_corpus

log = logging.getLogger("protoseg")

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2


def _load_features(path, feat_cfg):
    """PGM images are featurized; TNSR files are taken as feature grids."""
    if Path(path).suffix.lower() == ".pgm":
        return extract_features(read_pgm(path), feat_cfg)
    return read_tensor(path)


def cmd_synth(args) -> int:
    cfg = load_config(args.config)
    sc = SynthConfig.from_dict(cfg.get("synth", {}))
    m = synth_corpus(sc, args.out)
    print(f"wrote {len(m.episodes)} episodes to {args.out}")
    return EXIT_OK


def cmd_infer(args) -> int:
    cfg = load_config(args.config)
    pcfg, fcfg = pipeline_config(cfg), featurizer_config(cfg)
    Fs = _load_features(args.support_img, fcfg)
    Ms = read_mask(args.support_mask)
    Fq = _load_features(args.query_img, fcfg)
    res = infer_episode(Fs, Ms, Fq, pcfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.query_mask:
        res = res.with_dice(read_mask(args.query_mask))
    files = {}
    for name, mask in (("pred_mask", res.predicted_mask), ("initial_mask", res.initial_mask)):
        write_mask(out / f"{name}.tnsr", mask)
        write_pgm(out / f"{name}.pgm", GrayImage(mask.data.astype(np.float64)))
        files[name] = [f"{name}.tnsr", f"{name}.pgm"]
    record = res.summary()
    record["files"] = files
    (out / "result.json").write_text(json.dumps(record, indent=1, sort_keys=True) + "\n")
    print(json.dumps({k: record[k] for k in ("dice", "k_support", "k_query")}))
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    manifest = EpisodeManifest.load(args.manifest)
    s = run_eval(manifest, pipeline_config(cfg), featurizer_config(cfg), args.report, args.summary, args.workers)
    print(json.dumps({k: s[k] for k in ("n_episodes", "n_failed", "mean_dice")}))
    return EXIT_PARTIAL if s["n_failed"] else EXIT_OK


def cmd_ablate(args) -> int:
    cfg = load_config(args.config)
    manifest = EpisodeManifest.load(args.manifest)
    rows = run_ablation(manifest, pipeline_config(cfg), args.out, featurizer_config(cfg), args.workers)
    for r in rows:
        print(f"{r['variant']:16s} {r['mean_dice']:.4f} {r['delta_vs_global']:+.4f}")
    return EXIT_PARTIAL if any(r["n_failed"] for r in rows) else EXIT_OK


def _parse_k(text: str) -> list[int]:
    try:
        ks = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated integer list: {text!r}") from None
    if not ks or any(k < 1 for k in ks):
        raise argparse.ArgumentTypeError("k values must be positive integers")
    return ks


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    manifest = EpisodeManifest.load(args.manifest)
    rows = run_sweep(manifest, pipeline_config(cfg), args.k, args.out, featurizer_config(cfg), args.workers)
    for r in rows:
        print(f"k_max={r['k_max']:3d} {r['mean_dice']:.4f}")
    return EXIT_PARTIAL if any(r["n_failed"] for r in rows) else EXIT_OK


def cmd_ot_debug(args) -> int:
    C = read_matrix_csv(args.cost)
    if C.ndim != 2 or C.size == 0:
        raise ValueError(f"{args.cost}: expected a rectangular nonempty matrix")
    plan = sinkhorn_cost(C, OtConfig(epsilon=args.epsilon, max_iters=args.max_iters, marginal_tol=args.tol))
    w = extract_weights(plan, 1.0 - C)
    header = [f"t{j}" for j in range(C.shape[1])] + ["w"]
    _write_csv(args.out, header, [list(row) + [wi] for row, wi in zip(plan.plan, w)])
    print(f"iterations={plan.iterations} marginal_error={plan.marginal_error:.3e}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="protoseg", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic episode corpus")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("infer", help="segment one query from one support")
    p.add_argument("--support-img", required=True)
    p.add_argument("--support-mask", required=True)
    p.add_argument("--query-img", required=True)
    p.add_argument("--query-mask")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    for name, func in (("eval", cmd_eval), ("ablate", cmd_ablate), ("sweep", cmd_sweep)):
        p = sub.add_parser(name)
        p.add_argument("--manifest", required=True)
        p.add_argument("--config")
        p.add_argument("--workers", type=int, default=1)
        if name == "eval":
            p.add_argument("--report", required=True)
            p.add_argument("--summary", required=True)
        else:
            p.add_argument("--out", required=True)
        if name == "sweep":
            p.add_argument("--k", type=_parse_k, default=list(DEFAULT_K_VALUES))
        p.set_defaults(func=func)

    p = sub.add_parser("ot-debug", help="solve one OT problem from a cost CSV")
    p.add_argument("--cost", required=True)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--max-iters", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ot_debug)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (FormatError, NoEpisodesError, EmptyForegroundError, ValueError, TypeError, KeyError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
