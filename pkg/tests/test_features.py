import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sps
from scipy.spatial.transform import Rotation

from kernelfusion.errors import DimensionError
from kernelfusion.features import (delay_embed, distance_histogram, dominant_frequency,
                                   histogram_edges, magnitude, mean_crossing_rate,
                                   pair_distances, project_3d, shape_histogram, stat_features,
                                   stat_feature_names)


def _dft_peak_frequency(x, fs):
    # direct O(L^2) DFT, independent of numpy.fft
    n = len(x)
    d = x - x.mean()
    t = np.arange(n)
    mags = [abs(np.sum(d * np.exp(-2j * np.pi * k * t / n))) for k in range(1, n // 2 + 1)]
    return (1 + int(np.argmax(mags))) * fs / n


def test_constant_axis_is_degenerate():
    f = stat_features(np.full((100, 1), 0.1))
    mean, median, std, kurt, skew, mcr, freq = f[:7]
    assert (std, kurt, skew, mcr, freq) == (0.0, 0.0, 0.0, 0.0, 0.0)
    assert mean == pytest.approx(0.1) and median == pytest.approx(0.1)


def test_dominant_frequency_two_hertz():
    t = np.arange(500) / 100.0
    x = np.sin(2 * np.pi * 2.0 * t + 0.3)
    assert _dft_peak_frequency(x, 100.0) == pytest.approx(2.0)
    assert dominant_frequency(x, 100.0) == pytest.approx(2.0)


def test_dominant_frequency_matches_dft_oracle_on_noise(rng):
    for _ in range(5):
        x = rng.normal(size=200) + np.sin(np.arange(200) * 0.3)
        assert dominant_frequency(x, 50.0) == pytest.approx(_dft_peak_frequency(x, 50.0))


def test_total_acceleration_pythagoras():
    samples = np.array([[3.0, 0.0, 0.0], [0.0, 4.0, 0.0]] * 2)
    np.testing.assert_allclose(magnitude(samples), [3, 4, 3, 4])
    assert stat_features(samples)[-1] == pytest.approx(3.5)


def test_moments_match_scipy(rng):
    x = rng.gamma(2.0, size=(400, 2))
    f = stat_features(x)
    for a in range(2):
        block = f[7 * a : 7 * a + 7]
        assert block[0] == pytest.approx(x[:, a].mean())
        assert block[1] == pytest.approx(np.median(x[:, a]))
        assert block[2] == pytest.approx(x[:, a].std())
        assert block[3] == pytest.approx(sps.kurtosis(x[:, a]))
        assert block[4] == pytest.approx(sps.skew(x[:, a]))


def test_layout_and_ranges(rng):
    x = rng.normal(size=(500, 3))
    f = stat_features(x, 100.0)
    assert f.shape == (22,) and len(stat_feature_names(3)) == 22
    mcr = f[5::7][:3]
    freq = f[6::7][:3]
    assert np.all((0 <= mcr) & (mcr <= 1))
    assert np.all((0 <= freq) & (freq <= 50.0))


def test_mean_crossing_rate_alternating():
    assert mean_crossing_rate(np.array([1.0, -1.0] * 10)) == 1.0


def test_short_frame_rejected():
    with pytest.raises(DimensionError):
        stat_features(np.zeros((3, 1)))


def test_delay_embed_full_length(rng):
    x = rng.normal(size=500)
    e = delay_embed(x, 10, 8)
    assert e.m == 430
    rows = np.array([[x[t + 10 * k] for k in range(8)] for t in range(430)])
    np.testing.assert_array_equal(e.O, rows)


def test_delay_embed_small_cases():
    x = np.arange(1.0, 6.0)
    np.testing.assert_array_equal(delay_embed(x, 2, 2).O, [[1, 3], [2, 4], [3, 5]])
    np.testing.assert_array_equal(delay_embed(x, 1, 1).O, x[:, None])
    np.testing.assert_array_equal(delay_embed(x, 2, 3).O, [[1, 3, 5]])
    with pytest.raises(DimensionError):
        delay_embed(x, 2, 4)


def _pairwise(a):
    return np.linalg.norm(a[:, None] - a[None], axis=-1)


def test_project_3d_exact_on_affine_subspace(rng):
    pts = rng.normal(size=(50, 3)) @ rng.normal(size=(3, 8)) + rng.normal(size=8)
    p = project_3d(pts)
    np.testing.assert_allclose(_pairwise(p), _pairwise(pts), atol=1e-8)


def test_project_3d_isotropic_captures_three_eighths(rng):
    pts = rng.normal(size=(20000, 8))
    _, model = project_3d(pts, return_model=True)
    total = np.trace(np.cov(pts, rowvar=False))
    assert model.explained.sum() / total == pytest.approx(3 / 8, abs=0.02)


def test_project_3d_duplicates_and_rank_flag():
    pts = np.tile(np.arange(8.0), (5, 1))
    p, model = project_3d(pts, return_model=True)
    np.testing.assert_array_equal(p, 0)
    assert model.rank == 0


def test_periodic_signal_closes():
    period = 50
    x = np.sin(2 * np.pi * np.arange(500) / period)
    p = project_3d(delay_embed(x, 10, 8))
    spacing = np.linalg.norm(np.diff(p, axis=0), axis=1).max()
    assert np.linalg.norm(p[0] - p[period]) <= spacing


def test_histogram_examples():
    assert shape_histogram(np.zeros((2, 3)), [0.0, 0.5, 1.0]).tolist() == [1.0, 0.0]
    tri = np.array([[0, 0, 0], [1, 0, 0], [0.5, np.sqrt(3) / 2, 0]])
    np.testing.assert_allclose(shape_histogram(tri, [0.0, 0.5, 1.5]), [0.0, 1.0])


def test_histogram_clips_out_of_range():
    h = distance_histogram(np.array([-1.0, 0.2, 5.0, 9.0]), [0.0, 1.0, 2.0])
    np.testing.assert_allclose(h, [0.5, 0.5])


def test_histogram_edges_span_training_distances(rng):
    sets = [rng.random(10) * k for k in (1, 2, 3)]
    e = histogram_edges(sets, 16)
    assert len(e) == 17
    assert e[0] == min(s.min() for s in sets) and e[-1] == max(s.max() for s in sets)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 40), st.integers(0, 10_000))
def test_histogram_normalized(m, seed):
    pts = np.random.default_rng(seed).normal(size=(m, 3))
    h = shape_histogram(pts, np.linspace(0, 4, 9))
    assert abs(h.sum() - 1) <= 1e-12 and np.all(h >= 0)


def test_histogram_rotation_invariant(rng):
    pts = rng.normal(size=(60, 3))
    edges = histogram_edges([pair_distances(pts)], 16)
    h = shape_histogram(pts, edges)
    for rot in Rotation.random(10, random_state=1):
        moved = rot.apply(pts) + rng.normal(size=3)
        np.testing.assert_allclose(pair_distances(moved), pair_distances(pts), atol=1e-10)
        np.testing.assert_allclose(shape_histogram(moved, edges), h, atol=1e-10)
