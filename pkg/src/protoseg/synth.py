"""Seeded synthetic few-shot episodes (PGM images + TNSR masks + manifest).

Support and query of an episode share a shape and a base foreground intensity
(their "class") and differ by size jitter, placement, intensity shift and
noise. Optional corruption re-textures a contiguous chunk of the support
foreground with background statistics while leaving the mask untouched.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .features import GrayImage, gaussian_blur, read_pgm, write_pgm
from .grid import BinaryMask, read_mask, write_mask

SHAPE_FAMILIES = ("ellipse", "fourier-blob")


@dataclass(frozen=True)
class SynthConfig:
    image_size: int = 128
    n_episodes: int = 50
    seed: int = 0
    shape_family: str = "fourier-blob"
    size_jitter: float = 0.4
    intensity_shift: float = 0.15
    noise_sigma: float = 0.05
    corruption: float = 0.0
    n_classes: int = 4
    radius_range: tuple[float, float] = (0.18, 0.26)  # base radius / image_size
    fg_levels: tuple[float, float] = (0.55, 0.8)  # class intensities span this range
    bg_level: float = 0.25  # soft tissue inside the body
    air_level: float = 0.05  # outside the body
    body_radius: float = 0.0  # body ellipse semi-axis / image_size; 0 = no body outline
    bg_texture: float = 0.03  # amplitude of the smooth background field
    bg_speckle: float = 0.0  # std of fine background texture
    speckle_sigma: float = 1.0
    n_distractors: int = 1  # textured background structures
    distractor_scale: tuple[float, float] = (0.6, 0.9)  # radius relative to the target
    distractor_levels: tuple[float, float] = (0.2, 0.4)  # 0 = background level, 1 = foreground level
    distractor_texture: float = 0.35
    working_resolution: int = 64
    min_working_pixels: int = 50

    def __post_init__(self):
        if self.shape_family not in SHAPE_FAMILIES:
            raise ValueError(f"shape_family must be one of {SHAPE_FAMILIES}")
        if self.n_episodes < 0 or self.image_size < 8 or self.n_classes < 1:
            raise ValueError("invalid n_episodes / image_size / n_classes")
        for name in ("size_jitter", "corruption"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if min(self.intensity_shift, self.noise_sigma, self.bg_texture, self.bg_speckle) < 0:
            raise ValueError("intensity_shift, noise_sigma, bg_texture and bg_speckle must be >= 0")
        object.__setattr__(self, "radius_range", tuple(float(x) for x in self.radius_range))
        object.__setattr__(self, "fg_levels", tuple(float(x) for x in self.fg_levels))
        object.__setattr__(self, "distractor_scale", tuple(float(x) for x in self.distractor_scale))
        object.__setattr__(self, "distractor_levels", tuple(float(x) for x in self.distractor_levels))
        if self.n_distractors < 0:
            raise ValueError("n_distractors must be >= 0")
        # smallest jittered shape must keep min_working_pixels at the working
        # resolution; blob area is pi*r0^2*(1 + sum(a_h^2)/2) >= pi*r0^2
        r_min = self.radius_range[0] * self.working_resolution * (1 - self.size_jitter)
        floor_area = math.pi * r_min ** 2 * (1.0 if self.shape_family == "fourier-blob" else 0.6)
        if floor_area < self.min_working_pixels:
            raise ValueError("size_jitter/radius_range can shrink the foreground below min_working_pixels")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EpisodeRecord:
    support_image: str
    support_mask: str
    query_image: str
    query_mask: str
    class_label: int
    seed: int
    support_corruption: str | None = None


@dataclass
class EpisodeManifest:
    episodes: list[EpisodeRecord]
    root: Path = field(default_factory=Path)

    def resolve(self, rel: str) -> Path:
        return self.root / rel

    def save(self, path) -> None:
        path = Path(path)
        data = {"episodes": [asdict(e) for e in self.episodes]}
        path.write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "EpisodeManifest":
        path = Path(path)
        data = json.loads(path.read_text())
        eps = [EpisodeRecord(**e) for e in data["episodes"]]
        return cls(eps, path.parent)

    def with_query_as_support(self) -> "EpisodeManifest":
        """Self-matching variant: every query is replaced by its support."""
        eps = [EpisodeRecord(e.support_image, e.support_mask, e.support_image, e.support_mask,
                             e.class_label, e.seed, e.support_corruption) for e in self.episodes]
        return EpisodeManifest(eps, self.root)


# --- shapes -----------------------------------------------------------------

@dataclass(frozen=True)
class ShapeSpec:
    family: str
    radius: float  # pixels
    aspect: float = 1.0
    angle: float = 0.0
    harmonics: tuple[tuple[float, float], ...] = ()  # (a_h, phi_h) for h = 2..5


def sample_shape(rng: np.random.Generator, family: str, radius: float) -> ShapeSpec:
    if family == "ellipse":
        return ShapeSpec(family, radius, aspect=float(rng.uniform(0.6, 1.0)), angle=float(rng.uniform(0, math.pi)))
    harm = tuple((float(rng.uniform(-0.2, 0.2)), float(rng.uniform(0, 2 * math.pi))) for _ in range(2, 6))
    return ShapeSpec(family, radius, angle=float(rng.uniform(0, 2 * math.pi)), harmonics=harm)


def boundary_radius(spec: ShapeSpec, theta: np.ndarray) -> np.ndarray:
    """Blob boundary r(theta) = r0 * (1 + sum_h a_h cos(h*theta + phi_h))."""
    r = np.ones_like(theta)
    for h, (a, phi) in enumerate(spec.harmonics, start=2):
        r = r + a * np.cos(h * theta + phi)
    return spec.radius * r


def rasterize(spec: ShapeSpec, size: int, center: tuple[float, float], scale: float = 1.0) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    dy, dx = yy - center[0], xx - center[1]
    ca, sa = math.cos(spec.angle), math.sin(spec.angle)
    u = ca * dx + sa * dy
    v = -sa * dx + ca * dy
    if spec.family == "ellipse":
        a = spec.radius * scale
        b = a * spec.aspect
        return (u / a) ** 2 + (v / b) ** 2 <= 1.0
    return np.hypot(u, v) <= scale * boundary_radius(spec, np.arctan2(v, u))


def extent(spec: ShapeSpec) -> float:
    return spec.radius * (1.0 + sum(abs(a) for a, _ in spec.harmonics))


def _place(rng, spec: ShapeSpec, scale: float, size: int) -> tuple[float, float]:
    margin = min(extent(spec) * scale + 2, size / 2)
    return float(rng.uniform(margin, size - margin)), float(rng.uniform(margin, size - margin))


def background_field(rng: np.random.Generator, size: int, cfg: SynthConfig) -> np.ndarray:
    """``bg_level`` plus a smooth low-frequency field plus fine speckle."""
    smooth = gaussian_blur(rng.standard_normal((size, size)), size / 16)
    smooth /= max(np.abs(smooth).max(), 1e-12)
    speckle = gaussian_blur(rng.standard_normal((size, size)), cfg.speckle_sigma)
    speckle /= max(speckle.std(), 1e-12)
    field = cfg.bg_level + cfg.bg_texture * smooth + cfg.bg_speckle * speckle
    if cfg.body_radius > 0:
        yy, xx = np.mgrid[0:size, 0:size] - (size - 1) / 2
        a = cfg.body_radius * size
        b = a * float(rng.uniform(0.75, 0.95))
        field = np.where((xx / a) ** 2 + (yy / b) ** 2 <= 1.0, field, cfg.air_level)
    return field


def corruption_region(rng: np.random.Generator, mask: np.ndarray, fraction: float) -> np.ndarray:
    """The ceil(fraction * |fg|) foreground pixels closest to a random foreground anchor."""
    pts = np.argwhere(mask)
    n = int(math.ceil(fraction * len(pts)))
    out = np.zeros_like(mask, dtype=bool)
    if n == 0:
        return out
    anchor = pts[rng.integers(len(pts))]
    d2 = ((pts - anchor) ** 2).sum(axis=1)
    pick = pts[np.argsort(d2, kind="stable")[:n]]
    out[pick[:, 0], pick[:, 1]] = True
    return out


def add_distractors(rng, cfg: SynthConfig, bg: np.ndarray, target: np.ndarray, radius: float, fg_level: float):
    """Paint heterogeneous textured blobs away from the target.

    Returns the new background and the mask of painted pixels.
    """
    size = cfg.image_size
    out = bg.copy()
    painted = np.zeros((size, size), dtype=bool)
    keep_out = gaussian_blur(target.astype(np.float64), 2.0) > 1e-3
    for _ in range(cfg.n_distractors):
        spec = sample_shape(rng, cfg.shape_family, radius * float(rng.uniform(*cfg.distractor_scale)))
        level = cfg.bg_level + float(rng.uniform(*cfg.distractor_levels)) * (fg_level - cfg.bg_level)
        tex = gaussian_blur(rng.standard_normal((size, size)), cfg.speckle_sigma)
        tex /= max(tex.std(), 1e-12)
        for _ in range(20):
            blob = rasterize(spec, size, _place(rng, spec, 1.0, size))
            if not (blob & keep_out).any():
                out = np.where(blob, level + cfg.distractor_texture * tex, out)
                keep_out |= blob
                painted |= blob
                break
    return out, painted


def render(rng, cfg: SynthConfig, spec: ShapeSpec, bg: np.ndarray, fg_level: float, scale: float,
           corruption: float = 0.0):
    """Image, mask and corruption region for one instance of a shape."""
    size = cfg.image_size
    center = _place(rng, spec, scale, size)
    mask = rasterize(spec, size, center, scale)
    bg, structures = add_distractors(rng, cfg, bg, mask, spec.radius * scale, fg_level)
    img = np.where(mask, fg_level, bg)
    bad = corruption_region(rng, mask, corruption)
    if bad.any():
        # iid draws from the background histogram, taken from the textured
        # structures when there are any
        pool = bg[structures] if structures.any() else bg[~mask]
        img[bad] = rng.choice(pool, size=int(bad.sum()))
    img = img + cfg.noise_sigma * rng.standard_normal((size, size))
    return np.clip(img, 0.0, 1.0), mask, bad


def class_level(cfg: SynthConfig, label: int) -> float:
    lo, hi = cfg.fg_levels
    if cfg.n_classes == 1:
        return (lo + hi) / 2
    return lo + (hi - lo) * label / (cfg.n_classes - 1)


def make_episode(cfg: SynthConfig, index: int):
    """Arrays for episode ``index``; a pure function of (cfg, index)."""
    ep_seed = int(np.random.SeedSequence([cfg.seed, index]).generate_state(1)[0])
    rng = np.random.default_rng(ep_seed)
    label = int(rng.integers(cfg.n_classes))
    radius = float(rng.uniform(*cfg.radius_range)) * cfg.image_size
    spec = sample_shape(rng, cfg.shape_family, radius)
    base = class_level(cfg, label)
    bg = background_field(rng, cfg.image_size, cfg)
    out = {"class_label": label, "seed": ep_seed}
    for role, corr in (("support", cfg.corruption), ("query", 0.0)):
        scale = 1.0 + float(rng.uniform(-cfg.size_jitter, cfg.size_jitter))
        level = base + float(rng.uniform(-cfg.intensity_shift, cfg.intensity_shift))
        img, mask, bad = render(rng, cfg, spec, bg, level, scale, corr)
        out[role] = (img, mask, bad)
    return out


def synth_corpus(cfg: SynthConfig, out_dir) -> EpisodeManifest:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for i in range(cfg.n_episodes):
        ep = make_episode(cfg, i)
        names = {}
        for role in ("support", "query"):
            img, mask, bad = ep[role]
            names[f"{role}_image"] = f"ep{i:04d}_{role}.pgm"
            names[f"{role}_mask"] = f"ep{i:04d}_{role}_mask.tnsr"
            write_pgm(out / names[f"{role}_image"], GrayImage(img))
            write_mask(out / names[f"{role}_mask"], BinaryMask(mask))
        corr = None
        if cfg.corruption > 0:
            corr = f"ep{i:04d}_support_corruption.tnsr"
            write_mask(out / corr, BinaryMask(ep["support"][2]))
        records.append(EpisodeRecord(support_corruption=corr, class_label=ep["class_label"],
                                     seed=ep["seed"], **names))
    manifest = EpisodeManifest(records, out)
    manifest.save(out / "manifest.json")
    (out / "synth_config.json").write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True) + "\n")
    return manifest


def load_episode(manifest: EpisodeManifest, rec: EpisodeRecord):
    """(support image, support mask, query image, query mask), validated."""
    si = read_pgm(manifest.resolve(rec.support_image))
    sm = read_mask(manifest.resolve(rec.support_mask))
    qi = read_pgm(manifest.resolve(rec.query_image))
    qm = read_mask(manifest.resolve(rec.query_mask))
    if si.shape != sm.shape or qi.shape != qm.shape:
        raise ValueError("mask and image sizes differ")
    return si, sm, qi, qm
