"""Multi-level prototypes: masked average pooling plus adaptive local prototypes.

Local prototypes come from clustering foreground pixel *coordinates*: centers
are picked by farthest point sampling, every foreground pixel joins its nearest
center, and each cluster's features are averaged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import BinaryMask, FeatureGrid


class EmptyForegroundError(ValueError):
    pass


@dataclass(frozen=True)
class MpgConfig:
    c_s: int = 50
    k_max: int = 24
    seed: int = 0
    deterministic_init: bool = True

    def __post_init__(self):
        if self.c_s < 1 or self.k_max < 1:
            raise ValueError("c_s and k_max must be >= 1")


@dataclass(frozen=True, eq=False)
class LocalPartition:
    """Clusters of foreground pixels.

    ``pixels`` holds every foreground coordinate in row-major order and
    ``labels[i]`` the cluster of ``pixels[i]``; ``centers[j]`` is a member of
    cluster ``j``.
    """

    centers: np.ndarray  # (k, 2) int
    pixels: np.ndarray  # (N, 2) int
    labels: np.ndarray  # (N,) int

    @property
    def k(self) -> int:
        return len(self.centers)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)

    def label_grid(self, height: int, width: int) -> np.ndarray:
        """-1 on background, cluster index on foreground."""
        grid = np.full((height, width), -1, dtype=np.int64)
        grid[self.pixels[:, 0], self.pixels[:, 1]] = self.labels
        return grid


@dataclass(frozen=True, eq=False)
class PrototypeSet:
    vectors: np.ndarray  # (m, C)
    partition: LocalPartition | None = None

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1:
            raise ValueError(f"PrototypeSet needs an (m, C) array with m >= 1, got {v.shape}")
        object.__setattr__(self, "vectors", v)

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def channels(self) -> int:
        return self.vectors.shape[1]


def _check_aligned(F: FeatureGrid, M: BinaryMask):
    if (F.height, F.width) != M.shape:
        raise ValueError(f"feature grid {F.height}x{F.width} and mask {M.shape} differ in size")


def masked_average_pool(F: FeatureGrid, M: BinaryMask) -> np.ndarray:
    _check_aligned(F, M)
    total = M.count()
    if total == 0:
        raise EmptyForegroundError("mask has no foreground pixels")
    w = M.data.astype(np.float64)
    return (F.data * w).sum(axis=(1, 2)) / total


def adaptive_k(M: BinaryMask | int, cfg: MpgConfig) -> int:
    """Number of local prototypes for a foreground of the given size.

    ``min(max(floor(n / c_s), 1), k_max)``, further capped by ``max(n, 1)``.
    """
    n = M if isinstance(M, (int, np.integer)) else M.count()
    k = min(max(int(n) // cfg.c_s, 1), cfg.k_max)
    return min(k, max(int(n), 1))


def fps_centers(foreground: np.ndarray, k: int, cfg: MpgConfig) -> np.ndarray:
    """Indices into ``foreground`` of k farthest-point-sampled centers.

    Each new center maximizes the squared distance to the nearest chosen
    center; ``argmax`` breaks ties by lowest row-major index.
    """
    pts = np.asarray(foreground, dtype=np.int64)
    n = len(pts)
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= {n} foreground points, got k={k}")
    if cfg.deterministic_init:
        first = 0
    else:
        first = int(np.random.default_rng(cfg.seed).integers(n))
    chosen = [first]
    d2 = ((pts - pts[first]) ** 2).sum(axis=1)
    for _ in range(1, k):
        nxt = int(np.argmax(d2))
        chosen.append(nxt)
        d2 = np.minimum(d2, ((pts - pts[nxt]) ** 2).sum(axis=1))
    return np.array(chosen, dtype=np.int64)


def assign_to_centers(foreground: np.ndarray, centers: np.ndarray) -> LocalPartition:
    """Nearest-center assignment; ties go to the lowest center index."""
    pts = np.asarray(foreground, dtype=np.int64)
    ctr = np.asarray(centers, dtype=np.int64).reshape(-1, 2)
    if len(ctr) == 0:
        raise ValueError("need at least one center")
    d2 = ((pts[:, None, :] - ctr[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    return LocalPartition(centers=ctr, pixels=pts, labels=labels)


def partition_foreground(M: BinaryMask, k: int, cfg: MpgConfig) -> LocalPartition:
    pts = M.coords()
    if len(pts) == 0:
        raise EmptyForegroundError("mask has no foreground pixels")
    idx = fps_centers(pts, min(k, len(pts)), cfg)
    return assign_to_centers(pts, pts[idx])


def local_prototypes(F: FeatureGrid, M: BinaryMask, cfg: MpgConfig, k: int | None = None) -> PrototypeSet:
    """Cluster-mean prototypes, ordered like the FPS centers.

    ``k`` defaults to :func:`adaptive_k`; a fixed ``k`` is capped by the
    foreground size.
    """
    _check_aligned(F, M)
    if k is None:
        k = adaptive_k(M, cfg)
    part = partition_foreground(M, k, cfg)
    feats = F.data[:, part.pixels[:, 0], part.pixels[:, 1]].T  # (N, C)
    sums = np.zeros((part.k, F.channels))
    np.add.at(sums, part.labels, feats)
    return PrototypeSet(sums / part.sizes()[:, None], part)
