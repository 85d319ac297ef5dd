"""Grid types, resampling, cosine maps and the TNSR tensor file format."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

NORM_EPS = 1e-12

TNSR_MAGIC = b"TNSR"
TNSR_VERSION = 1
_HEADER = struct.Struct("<4sBBxx")


class FormatError(ValueError):
    """Malformed file contents. ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class FeatureGrid:
    """Dense C x h x w feature tensor stored as float64."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ValueError(f"FeatureGrid needs a non-empty C x h x w array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("FeatureGrid values must be finite")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def pixel_vectors(self) -> np.ndarray:
        """(h*w, C) view, rows in row-major pixel order."""
        return self.data.reshape(self.channels, -1).T


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """H x W mask with entries exactly 0 or 1 (stored as uint8)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2 or min(arr.shape) < 1:
            raise ValueError(f"BinaryMask needs a non-empty H x W array, got shape {arr.shape}")
        if arr.dtype != np.bool_ and not np.all((arr == 0) | (arr == 1)):
            raise ValueError("BinaryMask entries must be 0 or 1")
        arr = np.ascontiguousarray(arr.astype(np.uint8))
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def count(self) -> int:
        return int(self.data.sum())

    def coords(self) -> np.ndarray:
        """Foreground (row, col) pairs in row-major order, shape (N, 2)."""
        return np.argwhere(self.data == 1)


def _check_size(out_h, out_w):
    if int(out_h) < 1 or int(out_w) < 1:
        raise ValueError(f"output size must be positive, got {out_h}x{out_w}")


def _axis_weights(n_in: int, n_out: int):
    # align-corners: u -> u*(in-1)/(out-1); a single output sample sits at the center
    if n_out == 1:
        pos = np.array([(n_in - 1) / 2.0])
    else:
        pos = np.arange(n_out) * (n_in - 1) / (n_out - 1)
    lo = np.clip(np.floor(pos).astype(np.int64), 0, n_in - 1)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    return lo, hi, frac


def resample_bilinear(grid: FeatureGrid, out_h: int, out_w: int) -> FeatureGrid:
    """Bilinear resize with the align-corners convention."""
    _check_size(out_h, out_w)
    _, h, w = grid.shape
    if (h, w) == (out_h, out_w):
        return grid
    r0, r1, fr = _axis_weights(h, out_h)
    c0, c1, fc = _axis_weights(w, out_w)
    x = grid.data
    rows = x[:, r0, :] * (1.0 - fr)[None, :, None] + x[:, r1, :] * fr[None, :, None]
    out = rows[:, :, c0] * (1.0 - fc)[None, None, :] + rows[:, :, c1] * fc[None, None, :]
    return FeatureGrid(out)


def resample_map_bilinear(values: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Same as :func:`resample_bilinear` for a single h x w array."""
    return resample_bilinear(FeatureGrid(values[None]), out_h, out_w).data[0]


def _nearest_index(n_in: int, n_out: int) -> np.ndarray:
    # same align-corners grid as resample_bilinear, rounded half up in integer
    # arithmetic: floor(u*(in-1)/(out-1) + 1/2)
    if n_out == 1:
        return np.array([(n_in - 1) // 2])
    u = np.arange(n_out)
    return (2 * u * (n_in - 1) + (n_out - 1)) // (2 * (n_out - 1))


def resample_mask_nearest(mask: BinaryMask, out_h: int, out_w: int) -> BinaryMask:
    _check_size(out_h, out_w)
    if mask.shape == (out_h, out_w):
        return mask
    rows = _nearest_index(mask.height, out_h)
    cols = _nearest_index(mask.width, out_w)
    return BinaryMask(mask.data[np.ix_(rows, cols)])


def cosine(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise cosine similarity along the last axis with the zero-norm rule.

    Broadcasts like ``(a * b).sum(-1)``; any pair where either norm is below
    1e-12 gets similarity 0. Results are clamped to [-1, 1].
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    dot = (a * b).sum(axis=-1)
    denom = na * nb
    ok = (na >= NORM_EPS) & (nb >= NORM_EPS)
    out = np.where(ok, dot / np.where(ok, denom, 1.0), 0.0)
    return np.clip(out, -1.0, 1.0)


def cosine_similarity_map(p: np.ndarray, grid: FeatureGrid) -> np.ndarray:
    """h x w map of cosine similarity between prototype ``p`` and every pixel."""
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (grid.channels,):
        raise ValueError(f"prototype has {p.shape} entries, grid has {grid.channels} channels")
    return cosine(grid.pixel_vectors(), p[None, :]).reshape(grid.height, grid.width)


# --- TNSR v1 ----------------------------------------------------------------

def write_array(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    if not 1 <= arr.ndim <= 4:
        raise ValueError(f"TNSR supports rank 1-4, got {arr.ndim}")
    payload = np.ascontiguousarray(arr, dtype="<f4")
    header = _HEADER.pack(TNSR_MAGIC, TNSR_VERSION, arr.ndim)
    dims = struct.pack(f"<{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(header + dims + payload.tobytes())


def read_array(path) -> np.ndarray:
    """Parse a TNSR file into a float32 array, validating every field."""
    buf = Path(path).read_bytes()
    if len(buf) < _HEADER.size:
        raise FormatError("truncated header", len(buf))
    magic, version, rank = _HEADER.unpack_from(buf, 0)
    if magic != TNSR_MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if version != TNSR_VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if not 1 <= rank <= 4:
        raise FormatError(f"rank {rank} outside 1-4", 5)
    if buf[6:8] != b"\x00\x00":
        raise FormatError("nonzero header padding", 6)
    off = _HEADER.size
    if len(buf) < off + 4 * rank:
        raise FormatError("truncated dims", len(buf))
    dims = struct.unpack_from(f"<{rank}I", buf, off)
    off += 4 * rank
    n = int(np.prod(dims, dtype=np.int64))
    if len(buf) != off + 4 * n:
        raise FormatError(f"payload is {len(buf) - off} bytes, expected {4 * n}", min(len(buf), off + 4 * n))
    arr = np.frombuffer(buf, dtype="<f4", count=n, offset=off)
    bad = np.flatnonzero(~np.isfinite(arr))
    if bad.size:
        raise FormatError("non-finite value", off + 4 * int(bad[0]))
    return arr.reshape(dims).astype(np.float32)


def write_tensor(path, grid: FeatureGrid) -> None:
    write_array(path, grid.data)


def read_tensor(path) -> FeatureGrid:
    """Read a feature grid. Rank-2 files are read as single-channel grids."""
    arr = read_array(path)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise FormatError(f"expected rank 2 or 3 for a feature grid, got {arr.ndim}", 5)
    return FeatureGrid(arr)


def write_mask(path, mask: BinaryMask) -> None:
    write_array(path, mask.data)


def read_mask(path) -> BinaryMask:
    arr = read_array(path)
    if arr.ndim != 2:
        raise FormatError(f"mask must be rank 2, got {arr.ndim}", 5)
    if not np.all((arr == 0.0) | (arr == 1.0)):
        raise FormatError("mask values must be 0.0 or 1.0", _HEADER.size + 8)
    return BinaryMask(arr.astype(np.uint8))
