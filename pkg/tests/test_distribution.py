import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import silhouette_score

import oracles
from synthts_bench.distribution import (EmbeddingConfig, EntropyConfig, KernelConfig, aggregate_entropy,
                                        check_perplexity, embedding_csv, embedding_svg, entropy_gap, entropy_metric,
                                        joint_affinities, median_bandwidth, mmd, mmd_metric, spectral_entropy,
                                        tag_points, tsne, tsne_embed)
from synthts_bench.pipeline import ChannelSpec, WindowedDataset
from synthts_bench.sample_metrics import MetricError


def _ds(data, labels, n_classes=2):
    n, c, length = data.shape
    return WindowedDataset(data, labels, np.array(["s"] * n), tuple(ChannelSpec(f"c{i}", 8.0) for i in range(c)),
                           8.0, length / 8.0, n_classes)


def _nn_opposite_fraction(Y, tags):
    D = ((Y[:, None] - Y[None]) ** 2).sum(-1)
    np.fill_diagonal(D, np.inf)
    return float((tags[D.argmin(axis=1)] != tags).mean())


# ---------------------------------------------------------------------------
# MMD
# ---------------------------------------------------------------------------

def test_mmd_identical_sets():
    A = np.random.default_rng(0).normal(size=(30, 16))
    assert mmd(A, A.copy())[0] <= 1e-9


def test_mmd_two_points_formula():
    value, sigma, _ = mmd([[0.0]], [[1.0]], KernelConfig(bandwidth=1.0))
    assert sigma == 1.0
    assert value == pytest.approx(2 - 2 * math.exp(-0.5), abs=1e-15)
    assert value == pytest.approx(0.7869, abs=1e-4)


@pytest.mark.parametrize("seed", range(5))
def test_mmd_matches_double_loop(seed):
    rng = np.random.default_rng(seed)
    R, S = rng.normal(size=(12, 10)), rng.normal(0.3, 1.2, size=(9, 10))
    value, sigma, _ = mmd(R, S)
    assert value == pytest.approx(oracles.mmd_loop(R, S, sigma), abs=1e-12)
    assert sigma == pytest.approx(oracles.median_distance_loop(np.vstack([R, S])) / math.sqrt(2), rel=1e-12)


def test_mmd_fuzz_self_and_symmetry():
    rng = np.random.default_rng(1)
    for _ in range(100):
        A = rng.normal(size=(rng.integers(2, 20), 12)) * rng.exponential(3)
        B = rng.normal(size=(rng.integers(2, 20), 12))
        assert mmd(A, A)[0] <= 1e-9
        k = KernelConfig(bandwidth=float(rng.exponential(4) + 0.1))
        assert mmd(A, B, k)[0] == pytest.approx(mmd(B, A, k)[0], abs=1e-12)
        assert 0 <= mmd(A, B)[0] <= 2


def test_median_bandwidth_examples():
    sigma, fb = median_bandwidth([[0.0, 0.0]], [[3.0, 4.0]])
    assert sigma == pytest.approx(5 / math.sqrt(2)) and not fb
    rng = np.random.default_rng(2)
    R, S = rng.normal(size=(20, 5)), rng.normal(size=(20, 5))
    assert median_bandwidth(3 * R, 3 * S)[0] == pytest.approx(3 * median_bandwidth(R, S)[0], rel=1e-12)
    big = rng.normal(size=(1500, 3)), rng.normal(size=(1500, 3))
    assert median_bandwidth(*big, seed=4) == median_bandwidth(*big, seed=4)


def test_median_bandwidth_fallback(caplog):
    sigma, fb = median_bandwidth(np.ones((3, 4)), np.ones((2, 4)))
    assert fb and sigma == 1.0
    value, sigma, fb = mmd(np.ones((3, 4)), np.ones((2, 4)))
    assert fb and value == pytest.approx(0, abs=1e-12)


def test_mmd_rejects_bad_input():
    with pytest.raises(MetricError):
        mmd(np.ones((0, 3)), np.ones((2, 3)))
    with pytest.raises(MetricError):
        mmd(np.ones((2, 3)), np.ones((2, 4)))
    with pytest.raises(MetricError):
        KernelConfig(bandwidth=0.0)


def test_mmd_jitter_ladder_monotone():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(60, 32))
    A = (A - A.mean()) / A.std()
    vals = [mmd(A, A + s * rng.standard_normal(A.shape))[0] for s in (0, 0.1, 0.5, 1.0)]
    assert all(b >= a - 1e-3 for a, b in zip(vals, vals[1:]))
    assert vals[-1] > vals[0]


def test_mmd_metric_per_class():
    rng = np.random.default_rng(4)
    real = _ds(rng.normal(size=(20, 1, 16)), np.repeat([0, 1], 10))
    res = mmd_metric(real, real, 0)
    assert all(v <= 1e-9 for v in res.per_class.values())
    feat = mmd_metric(real, real, 0, features=True)
    assert feat.details["representation"] == "features"


# ---------------------------------------------------------------------------
# Spectral entropy
# ---------------------------------------------------------------------------

def test_entropy_pure_tone_and_constant():
    t = np.arange(64)
    assert spectral_entropy(np.sin(2 * np.pi * 5 * t / 64)) == pytest.approx(0, abs=1e-9)
    assert spectral_entropy(np.full(64, 3.0)) == 0


def test_entropy_uniform_power():
    # flat spectrum over all 32 non-DC bins (impulse minus its mean)
    x = np.zeros(64)
    x[0] = 1.0
    assert spectral_entropy(x - x.mean()) == pytest.approx(math.log2(32), abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 100), st.booleans())
def test_entropy_amplitude_invariant_and_bounded(seed, c, neg):
    x = np.random.default_rng(seed).normal(size=40)
    h = spectral_entropy(x)
    assert spectral_entropy((-c if neg else c) * x) == pytest.approx(h, abs=1e-9)
    assert 0 <= h <= math.log2(20) + 1e-12


def test_entropy_gap_noise_vs_tones():
    L = 1000
    t = np.arange(L)
    ref = math.log2(L / 2 - 1)
    for seed in range(5):
        rng = np.random.default_rng(seed)
        tones = np.sin(2 * np.pi * rng.integers(1, 400, size=(20, 1)) * t / L)
        gap = entropy_gap(tones, rng.normal(size=(20, L)), EntropyConfig("mean"))
        assert abs(gap - ref) <= 0.1 * ref


def test_entropy_sum_scales_with_duplication():
    W = np.random.default_rng(5).normal(size=(7, 32))
    assert aggregate_entropy(np.vstack([W, W])) == pytest.approx(2 * aggregate_entropy(W), rel=1e-12)
    assert entropy_gap(W, W) == 0
    res = entropy_metric(_ds(W[:, None], np.zeros(7, int), 1), _ds(W[:, None], np.zeros(7, int), 1), 0)
    assert res.class_average == 0


def test_entropy_bad_input():
    with pytest.raises(MetricError):
        spectral_entropy([1.0, 2.0, 3.0])
    with pytest.raises(MetricError):
        EntropyConfig("median")


# ---------------------------------------------------------------------------
# t-SNE
# ---------------------------------------------------------------------------

def test_affinities_are_joint_distribution():
    X = np.random.default_rng(6).normal(size=(40, 4))
    P = joint_affinities(X, 10)
    assert P.sum() == pytest.approx(1, abs=1e-6)
    np.testing.assert_allclose(P, P.T)


def test_perplexity_precondition():
    check_perplexity(91, 30)
    with pytest.raises(MetricError, match="perplexity"):
        check_perplexity(90, 30)


@pytest.fixture(scope="module")
def clusters():
    rng = np.random.default_rng(7)
    centers = np.array([[0, 0, 0], [10, 0, 0], [0, 10, 0]], dtype=float)
    ids = np.repeat(np.arange(3), 50)
    X = centers[ids] + 0.1 * rng.standard_normal((150, 3))
    emb = tsne(X, EmbeddingConfig(seed=0))
    return X, ids, emb


def test_tsne_shape_finite_and_silhouette(clusters):
    X, ids, emb = clusters
    assert emb.coords.shape == (150, 2) and np.all(np.isfinite(emb.coords))
    assert silhouette_score(emb.coords, ids) > 0.5


def test_tsne_kl_non_increasing_tail(clusters):
    tail = np.array(clusters[2].kl_trace[-100:])
    assert np.all(np.diff(tail) <= 1e-9)


def test_tsne_deterministic():
    X = np.random.default_rng(8).normal(size=(40, 5))
    cfg = EmbeddingConfig(perplexity=5, iterations=300, seed=3)
    assert tsne(X, cfg).coords.tobytes() == tsne(X, cfg).coords.tobytes()


@pytest.mark.xfail(strict=True, reason="an exact copy makes every point's nearest neighbour its own twin")
def test_tsne_exact_copy_interleaves():
    fractions = []
    for seed in (1, 2, 3):
        R = np.random.default_rng(seed).normal(size=(200, 32))
        tagged = tag_points(R, R.copy(), 0, EmbeddingConfig(seed=seed))
        emb, _ = tsne_embed(tagged, EmbeddingConfig(seed=seed))
        fractions.append(_nn_opposite_fraction(emb.coords, tagged.source))
    assert all(0.35 <= f <= 0.65 for f in fractions)


def test_tsne_same_distribution_interleaves():
    for seed in (1, 2, 3):
        rng = np.random.default_rng(seed)
        R, S = rng.normal(size=(200, 32)), rng.normal(size=(200, 32))
        tagged = tag_points(R, S, 0, EmbeddingConfig(seed=seed))
        emb, _ = tsne_embed(tagged, EmbeddingConfig(seed=seed))
        assert 0.35 <= _nn_opposite_fraction(emb.coords, tagged.source) <= 0.65


def test_tag_points_cap_and_outputs():
    rng = np.random.default_rng(9)
    cfg = EmbeddingConfig(perplexity=3, iterations=50, max_points_per_tag=10)
    tagged = tag_points(rng.normal(size=(25, 8)), rng.normal(size=(4, 8)), 1, cfg)
    assert list(tagged.source).count("real") == 10 and list(tagged.source).count("synthetic") == 4
    emb, _ = tsne_embed(tagged, cfg)
    csv = embedding_csv(emb, tagged).splitlines()
    assert csv[0] == "x,y,source,class_id,window_index" and len(csv) == 15
    svg = embedding_svg(emb, tagged, "t")
    assert svg.count("<circle") == 14 and "#d62728" in svg
