import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from protoseg.features import read_pgm
from protoseg.grid import BinaryMask, read_mask, resample_mask_nearest
from protoseg.synth import (EpisodeManifest, ShapeSpec, SynthConfig, boundary_radius, corruption_region,
                            make_episode, sample_shape, synth_corpus)


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(shape_family="star")
    with pytest.raises(ValueError):
        SynthConfig(corruption=1.5)
    with pytest.raises(ValueError):
        SynthConfig(noise_sigma=-0.1)
    with pytest.raises(ValueError):
        SynthConfig(radius_range=(0.02, 0.05))
    assert SynthConfig.from_dict(SynthConfig().to_dict()) == SynthConfig()


def test_blob_radius_bounds():
    rng = np.random.default_rng(0)
    theta = np.linspace(0, 2 * np.pi, 721)
    for _ in range(50):
        spec = sample_shape(rng, "fourier-blob", 10.0)
        assert len(spec.harmonics) == 4
        assert all(abs(a) <= 0.2 for a, _ in spec.harmonics)
        r = boundary_radius(spec, theta)
        assert r.min() >= 10.0 * (1 - 0.8) - 1e-12


def test_boundary_formula():
    spec = ShapeSpec("fourier-blob", 2.0, harmonics=((0.1, 0.0), (0.0, 0.0), (0.0, 0.0), (0.2, math.pi)))
    # h=2 term at theta=0 is +0.1, h=5 term is 0.2*cos(pi) = -0.2
    assert boundary_radius(spec, np.array([0.0]))[0] == pytest.approx(2.0 * 0.9)


def test_corruption_region_count():
    rng = np.random.default_rng(1)
    mask = np.zeros((20, 20), dtype=bool)
    mask[3:15, 4:13] = True
    for f in (0.0, 0.1, 0.25, 1.0):
        bad = corruption_region(rng, mask, f)
        assert bad.sum() == math.ceil(f * mask.sum())
        assert not (bad & ~mask).any()


def test_corpus_is_byte_identical(tmp_path):
    cfg = SynthConfig(n_episodes=3, seed=5, corruption=0.25)
    synth_corpus(cfg, tmp_path / "a")
    synth_corpus(cfg, tmp_path / "b")
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()


def test_emitted_corruption_count(tmp_path):
    m = synth_corpus(SynthConfig(n_episodes=4, seed=2, corruption=0.25), tmp_path)
    for rec in m.episodes:
        sm = read_mask(m.resolve(rec.support_mask))
        bad = read_mask(m.resolve(rec.support_corruption))
        assert bad.count() == math.ceil(0.25 * sm.count())
        assert np.all(sm.data[bad.data == 1] == 1)


def test_clean_corpus_has_no_corruption_files(tmp_path):
    m = synth_corpus(SynthConfig(n_episodes=2, seed=2), tmp_path)
    assert all(rec.support_corruption is None for rec in m.episodes)
    assert not list(tmp_path.glob("*corruption*"))


def test_degenerate_ranges_match_up_to_placement():
    cfg = SynthConfig(n_episodes=1, seed=4, size_jitter=0, intensity_shift=0, noise_sigma=0, n_distractors=0)
    ep = make_episode(cfg, 0)
    (si, sm, _), (qi, qm, _) = ep["support"], ep["query"]
    assert np.unique(si[sm]).size == 1 and si[sm][0] == qi[qm][0]
    outside = ~(sm | qm)
    assert np.array_equal(si[outside], qi[outside])
    assert abs(int(sm.sum()) - int(qm.sum())) <= 0.05 * sm.sum()


def test_corruption_leaves_rest_of_foreground_alone():
    cfg = SynthConfig(n_episodes=1, seed=6, noise_sigma=0, intensity_shift=0, corruption=0.25)
    si, sm, bad = make_episode(cfg, 0)["support"]
    clean = sm & ~bad
    assert np.unique(si[clean]).size == 1
    assert np.abs(si[bad] - si[clean][0]).min() > 0


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["ellipse", "fourier-blob"]))
def test_foreground_survives_working_resolution(seed, family):
    cfg = SynthConfig(n_episodes=1, seed=seed, shape_family=family)
    ep = make_episode(cfg, 0)
    for role in ("support", "query"):
        m = BinaryMask(ep[role][1])
        assert resample_mask_nearest(m, 64, 64).count() >= 50


def test_manifest_roundtrip(tmp_path):
    m = synth_corpus(SynthConfig(n_episodes=2, seed=1), tmp_path)
    back = EpisodeManifest.load(tmp_path / "manifest.json")
    assert back.episodes == m.episodes
    for rec in back.episodes:
        img = read_pgm(back.resolve(rec.query_image))
        assert img.shape == read_mask(back.resolve(rec.query_mask)).shape
    selfm = back.with_query_as_support()
    assert all(r.query_image == r.support_image for r in selfm.episodes)
