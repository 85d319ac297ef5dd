"""Handcrafted per-pixel features and binary PGM I/O.

The feature stack stands in for a learned backbone: raw intensity, a few
Gaussian blurs, gradient magnitude and local standard deviation, each channel
z-scored over the image.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .grid import FeatureGrid, FormatError

VAR_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class GrayImage:
    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2 or min(arr.shape) < 1:
            raise ValueError(f"GrayImage needs a non-empty 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("GrayImage intensities must lie in [0, 1]")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass(frozen=True)
class FeaturizerConfig:
    blur_sigmas: tuple[float, ...] = (1.0, 2.0, 4.0)
    include_gradient: bool = True
    include_local_std: bool = True
    window: int = 5

    def __post_init__(self):
        sig = tuple(float(s) for s in self.blur_sigmas)
        if not sig:
            raise ValueError("blur_sigmas must be nonempty")
        if any(s <= 0 for s in sig) or any(b <= a for a, b in zip(sig, sig[1:])):
            raise ValueError("blur_sigmas must be positive and strictly increasing")
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError("window must be an odd positive integer")
        object.__setattr__(self, "blur_sigmas", sig)

    @property
    def n_channels(self) -> int:
        return 1 + len(self.blur_sigmas) + int(self.include_gradient) + int(self.include_local_std)


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = math.ceil(3 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable truncated Gaussian with reflected borders."""
    k = gaussian_kernel(sigma)
    out = ndimage.correlate1d(img, k, axis=0, mode="reflect")
    return ndimage.correlate1d(out, k, axis=1, mode="reflect")


def gradient_magnitude(img: np.ndarray) -> np.ndarray:
    # np.gradient: central differences inside, one-sided at the borders
    axes = [ax for ax in (0, 1) if img.shape[ax] > 1]
    if not axes:
        return np.zeros_like(img)
    grads = np.gradient(img, axis=axes)
    if len(axes) == 1:
        grads = [grads]
    return np.sqrt(sum(g * g for g in grads))


def local_std(img: np.ndarray, window: int) -> np.ndarray:
    mean = ndimage.uniform_filter(img, size=window, mode="reflect")
    sq = ndimage.uniform_filter(img * img, size=window, mode="reflect")
    return np.sqrt(np.maximum(sq - mean * mean, 0.0))


def zscore(channel: np.ndarray) -> np.ndarray:
    var = channel.var()
    if var < VAR_EPS:
        return np.zeros_like(channel)
    return (channel - channel.mean()) / math.sqrt(var)


def extract_features(img: GrayImage, cfg: FeaturizerConfig | None = None) -> FeatureGrid:
    cfg = cfg or FeaturizerConfig()
    x = img.data
    chans = [x]
    chans += [gaussian_blur(x, s) for s in cfg.blur_sigmas]
    if cfg.include_gradient:
        chans.append(gradient_magnitude(x))
    if cfg.include_local_std:
        chans.append(local_std(x, cfg.window))
    return FeatureGrid(np.stack([zscore(c) for c in chans]))


# --- PGM (P5 only) ------------------------------------------------------------

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def read_pgm(path) -> GrayImage:
    buf = Path(path).read_bytes()
    pos = 0
    tokens = []
    for _ in range(4):
        m = _TOKEN.match(buf, pos)
        if m is None:
            raise FormatError("truncated PGM header", pos)
        tokens.append(m.group(1))
        pos = m.end()
    if tokens[0] != b"P5":
        raise FormatError(f"unsupported PGM magic {tokens[0]!r}, only P5 is read", 0)
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError("non-integer PGM header field", pos) from None
    if width < 1 or height < 1 or not 1 <= maxval <= 65535:
        raise FormatError(f"invalid PGM header {width}x{height} maxval {maxval}", pos)
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise FormatError("missing whitespace after PGM header", pos)
    pos += 1
    dtype = ">u1" if maxval < 256 else ">u2"
    nbytes = width * height * np.dtype(dtype).itemsize
    if len(buf) - pos != nbytes:
        raise FormatError(f"PGM payload is {len(buf) - pos} bytes, expected {nbytes}", pos)
    raw = np.frombuffer(buf, dtype=dtype, offset=pos).reshape(height, width)
    if raw.max() > maxval:
        raise FormatError("PGM sample exceeds maxval", pos)
    return GrayImage(raw.astype(np.float64) / maxval)


def write_pgm(path, img: GrayImage) -> None:
    h, w = img.shape
    q = np.rint(img.data * 255.0).astype(np.uint8)
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + q.tobytes())
