"""One-way one-shot episode inference and the Dice metric."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .grid import (BinaryMask, FeatureGrid, cosine_similarity_map, resample_bilinear,
                   resample_map_bilinear, resample_mask_nearest)
from .mpg import EmptyForegroundError, MpgConfig, PrototypeSet, local_prototypes, masked_average_pool
from .qlpe import FUSION_MODES, OtConfig, extract_weights, fuse, similarity_matrix, sinkhorn

VARIANTS = ("global-only", "mpg-fixed-k", "mpg-adaptive", "full")


@dataclass(frozen=True)
class PipelineConfig:
    working_resolution: int = 64
    tau: float = 0.5
    mpg: MpgConfig = field(default_factory=MpgConfig)
    ot: OtConfig = field(default_factory=OtConfig)
    fusion_mode: str = "paper"
    variant: str = "full"

    def __post_init__(self):
        if self.working_resolution < 1:
            raise ValueError("working_resolution must be positive")
        if not -1.0 < self.tau < 1.0:
            raise ValueError("tau must lie strictly inside (-1, 1)")
        if self.fusion_mode not in FUSION_MODES:
            raise ValueError(f"fusion_mode must be one of {FUSION_MODES}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        if "mpg" in d:
            d["mpg"] = MpgConfig(**d["mpg"])
        if "ot" in d:
            d["ot"] = OtConfig(**d["ot"])
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class EpisodeResult:
    predicted_mask: BinaryMask
    initial_mask: BinaryMask
    k_support: int
    k_query: int
    weights: np.ndarray
    final_prototype: np.ndarray
    global_prototype: np.ndarray
    support_locals: PrototypeSet | None = None
    query_locals: PrototypeSet | None = None
    iterations: int = 0
    marginal_error: float = 0.0
    used_fallback: bool = False
    dice: float | None = None

    def with_dice(self, gt: BinaryMask) -> "EpisodeResult":
        from dataclasses import replace
        return replace(self, dice=dice(self.predicted_mask, gt))

    def summary(self) -> dict:
        """JSON-ready record (masks excluded)."""
        return {
            "dice": self.dice,
            "k_support": self.k_support,
            "k_query": self.k_query,
            "weights": [float(w) for w in self.weights],
            "solver_iterations": self.iterations,
            "marginal_error": float(self.marginal_error),
            "initial_fallback": self.used_fallback,
        }


def dice(pred: BinaryMask, gt: BinaryMask) -> float:
    if pred.shape != gt.shape:
        raise ValueError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    a = pred.data.astype(bool)
    b = gt.data.astype(bool)
    denom = int(a.sum()) + int(b.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / denom


def threshold_map(sim: np.ndarray, tau: float) -> BinaryMask:
    return BinaryMask(sim >= tau)


def top_pixels_mask(sim: np.ndarray, count: int) -> BinaryMask:
    """Mask of the ``count`` highest values; ties go to the earlier row-major pixel."""
    order = np.argsort(-sim.ravel(), kind="stable")[:count]
    out = np.zeros(sim.size, dtype=np.uint8)
    out[order] = 1
    return BinaryMask(out.reshape(sim.shape))


def infer_episode(support_F: FeatureGrid, support_M: BinaryMask, query_F: FeatureGrid,
                  cfg: PipelineConfig | None = None, out_shape: tuple[int, int] | None = None) -> EpisodeResult:
    """Segment the query from one labeled support.

    The final similarity map is upsampled bilinearly to ``out_shape`` (the
    query feature size by default) before thresholding.
    """
    cfg = cfg or PipelineConfig()
    R = cfg.working_resolution
    if out_shape is None:
        out_shape = (query_F.height, query_F.width)
    Fs = resample_bilinear(support_F, R, R)
    Fq = resample_bilinear(query_F, R, R)
    Ms = resample_mask_nearest(support_M, R, R)
    if Ms.count() == 0:
        raise EmptyForegroundError("support mask is empty at the working resolution")

    p_g = masked_average_pool(Fs, Ms)
    sim0 = cosine_similarity_map(p_g, Fq)
    Mq0 = threshold_map(sim0, cfg.tau)
    fallback = Mq0.count() == 0
    if fallback:
        Mq0 = top_pixels_mask(sim0, min(cfg.mpg.c_s, sim0.size))

    ps = pq = None
    weights = np.zeros(0)
    iters, merr = 0, 0.0
    if cfg.variant == "global-only":
        p_final = p_g
    else:
        k = cfg.mpg.k_max if cfg.variant == "mpg-fixed-k" else None
        ps = local_prototypes(Fs, Ms, cfg.mpg, k=k)
        pq = local_prototypes(Fq, Mq0, cfg.mpg)
        if cfg.variant == "full":
            S = similarity_matrix(ps, pq)
            plan = sinkhorn(S, cfg.ot)
            weights = extract_weights(plan, S)
            iters, merr = plan.iterations, plan.marginal_error
            p_final = fuse(p_g, ps, weights, cfg.fusion_mode)
        else:
            weights = np.ones(len(ps))
            p_final = p_g + ps.vectors.mean(axis=0)

    sim = cosine_similarity_map(p_final, Fq)
    sim_out = resample_map_bilinear(sim, *out_shape)
    return EpisodeResult(
        predicted_mask=threshold_map(sim_out, cfg.tau),
        initial_mask=Mq0,
        k_support=0 if ps is None else len(ps),
        k_query=0 if pq is None else len(pq),
        weights=weights,
        final_prototype=p_final,
        global_prototype=p_g,
        support_locals=ps,
        query_locals=pq,
        iterations=iters,
        marginal_error=merr,
        used_fallback=fallback,
    )
