"""Batch evaluation over an episode manifest: eval, ablation ladder, k_max sweep."""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .features import FeaturizerConfig, extract_features
from .pipeline import EpisodeResult, PipelineConfig, infer_episode
from .synth import EpisodeManifest, load_episode

log = logging.getLogger(__name__)

DEFAULT_K_VALUES = (1, 4, 8, 16, 24, 36)


class NoEpisodesError(ValueError):
    pass


def fmt(x) -> str:
    """Numeric CSV cell with 12 significant digits."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12g}"


def load_config(path) -> dict:
    """Read a JSON config with optional ``pipeline``, ``featurizer``, ``synth`` sections."""
    if path is None:
        return {}
    return json.loads(Path(path).read_text())


def pipeline_config(cfg: dict) -> PipelineConfig:
    return PipelineConfig.from_dict(cfg.get("pipeline", {}))


def featurizer_config(cfg: dict) -> FeaturizerConfig:
    d = dict(cfg.get("featurizer", {}))
    if "blur_sigmas" in d:
        d["blur_sigmas"] = tuple(d["blur_sigmas"])
    return FeaturizerConfig(**d)


@dataclass
class EpisodeOutcome:
    index: int
    results: list[EpisodeResult] | None
    error: str | None = None


def evaluate_episode(manifest: EpisodeManifest, index: int, cfgs: list[PipelineConfig],
                     feat_cfg: FeaturizerConfig) -> EpisodeOutcome:
    """Run every pipeline config on one episode; features are computed once."""
    rec = manifest.episodes[index]
    try:
        si, sm, qi, qm = load_episode(manifest, rec)
        Fs = extract_features(si, feat_cfg)
        Fq = extract_features(qi, feat_cfg)
        results = [infer_episode(Fs, sm, Fq, c, out_shape=qm.shape).with_dice(qm) for c in cfgs]
    except Exception as exc:  # recorded per episode, never aborts the batch
        log.warning("episode %d failed: %s", index, exc)
        return EpisodeOutcome(index, None, f"{type(exc).__name__}: {exc}")
    return EpisodeOutcome(index, results)


def _evaluate_chunk(args):
    manifest, indices, cfgs, feat_cfg = args
    return [evaluate_episode(manifest, i, cfgs, feat_cfg) for i in indices]


def evaluate_manifest(manifest: EpisodeManifest, cfgs: list[PipelineConfig],
                      feat_cfg: FeaturizerConfig | None = None, workers: int = 1) -> list[EpisodeOutcome]:
    """Outcomes in manifest order, optionally fanned out to a process pool."""
    if not manifest.episodes:
        raise NoEpisodesError("no episodes")
    feat_cfg = feat_cfg or FeaturizerConfig()
    idx = list(range(len(manifest.episodes)))
    if workers <= 1:
        return _evaluate_chunk((manifest, idx, cfgs, feat_cfg))
    chunks = [idx[i::workers] for i in range(workers)]
    with ProcessPoolExecutor(workers) as pool:
        parts = list(pool.map(_evaluate_chunk, [(manifest, c, cfgs, feat_cfg) for c in chunks]))
    return sorted((o for p in parts for o in p), key=lambda o: o.index)


def summarize(outcomes: list[EpisodeOutcome], which: int = 0) -> dict:
    ok = [o.results[which] for o in outcomes if o.results is not None]
    failed = [o.index for o in outcomes if o.results is None]
    d = np.array([r.dice for r in ok], dtype=np.float64)
    mean = lambda xs: float(np.mean(xs)) if len(xs) else None  # noqa: E731
    return {
        "n_episodes": len(outcomes),
        "n_ok": len(ok),
        "n_failed": len(failed),
        "failed_episodes": failed,
        "mean_dice": mean(d),
        "std_dice": float(np.std(d)) if len(d) else None,
        "mean_k_support": mean([r.k_support for r in ok]),
        "mean_k_query": mean([r.k_query for r in ok]),
        "mean_solver_iterations": mean([r.iterations for r in ok]),
    }


def _jsonl_record(manifest: EpisodeManifest, o: EpisodeOutcome, which: int = 0) -> dict:
    rec = manifest.episodes[o.index]
    out = {"index": o.index, "support_image": rec.support_image, "query_image": rec.query_image,
           "class_label": rec.class_label, "status": "ok" if o.results else "failed"}
    if o.results is None:
        out["error"] = o.error
    else:
        out.update(o.results[which].summary())
    return out


def run_eval(manifest: EpisodeManifest, pipeline_cfg: PipelineConfig, featurizer_cfg: FeaturizerConfig | None = None,
             report_path=None, summary_path=None, workers: int = 1) -> dict:
    outcomes = evaluate_manifest(manifest, [pipeline_cfg], featurizer_cfg, workers)
    summary = summarize(outcomes)
    if report_path is not None:
        with open(report_path, "w") as fh:
            for o in outcomes:
                fh.write(json.dumps(_jsonl_record(manifest, o), sort_keys=True) + "\n")
    if summary_path is not None:
        Path(summary_path).write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return summary


def ablation_configs(base: PipelineConfig) -> list[tuple[str, PipelineConfig]]:
    return [
        ("global-only", replace(base, variant="global-only")),
        ("mpg-fixed-k", replace(base, variant="mpg-fixed-k")),
        ("mpg-adaptive", replace(base, variant="mpg-adaptive")),
        ("full-paper", replace(base, variant="full", fusion_mode="paper")),
        ("full-normalized", replace(base, variant="full", fusion_mode="normalized")),
    ]


def _write_csv(path, header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([c if isinstance(c, str) else fmt(c) for c in r])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def run_ablation(manifest: EpisodeManifest, base_cfg: PipelineConfig, out_csv=None,
                 featurizer_cfg: FeaturizerConfig | None = None, workers: int = 1) -> list[dict]:
    """Mean Dice per variant and its delta against global-only."""
    named = ablation_configs(base_cfg)
    outcomes = evaluate_manifest(manifest, [c for _, c in named], featurizer_cfg, workers)
    rows = []
    for j, (name, _) in enumerate(named):
        s = summarize(outcomes, j)
        rows.append({"variant": name, "mean_dice": s["mean_dice"], "std_dice": s["std_dice"],
                     "n_failed": s["n_failed"]})
    base = rows[0]["mean_dice"]
    for r in rows:
        r["delta_vs_global"] = r["mean_dice"] - base
    _write_csv(out_csv, ["variant", "mean_dice", "std_dice", "delta_vs_global"],
               [[r["variant"], r["mean_dice"], r["std_dice"], r["delta_vs_global"]] for r in rows])
    return rows


def run_sweep(manifest: EpisodeManifest, base_cfg: PipelineConfig, k_values=DEFAULT_K_VALUES, out_csv=None,
              featurizer_cfg: FeaturizerConfig | None = None, workers: int = 1) -> list[dict]:
    """Mean Dice for each k_max, in the given order."""
    k_values = [int(k) for k in k_values]
    if not k_values or any(k < 1 for k in k_values):
        raise ValueError("k_values must be a nonempty list of positive integers")
    cfgs = [replace(base_cfg, mpg=replace(base_cfg.mpg, k_max=k)) for k in k_values]
    outcomes = evaluate_manifest(manifest, cfgs, featurizer_cfg, workers)
    rows = []
    for j, k in enumerate(k_values):
        s = summarize(outcomes, j)
        rows.append({"k_max": k, "mean_dice": s["mean_dice"], "std_dice": s["std_dice"],
                     "mean_k_support": s["mean_k_support"], "n_failed": s["n_failed"]})
    _write_csv(out_csv, ["k_max", "mean_dice", "std_dice", "mean_k_support"],
               [[r["k_max"], r["mean_dice"], r["std_dice"], r["mean_k_support"]] for r in rows])
    return rows


def read_matrix_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    try:
        return np.array([[float(c) for c in r] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric cell ({exc})") from None
