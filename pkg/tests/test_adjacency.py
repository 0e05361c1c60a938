import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anaxnet.adjacency import (
    CooccurrenceStats,
    accumulate_stats,
    adjacency_from_labels,
    build_adjacency,
    jaccard_matrix,
    normalize,
    threshold,
)
from anaxnet.errors import ConfigError, ShapeError


def brute_force_jaccard(labels):
    """Per-label set intersection / union over image indices, averaged over labels."""
    labels = np.asarray(labels)
    n, k, m = labels.shape
    sets = [[{i for i in range(n) if labels[i, r, j]} for j in range(m)] for r in range(k)]
    out = [[0.0] * k for _ in range(k)]
    for a in range(k):
        for b in range(k):
            total = 0.0
            for j in range(m):
                union = sets[a][j] | sets[b][j]
                if union:
                    total += len(sets[a][j] & sets[b][j]) / len(union)
            out[a][b] = total / m
    return np.array(out)


def test_empty_sequence_gives_zero_counts():
    stats = accumulate_stats([], k=3, n_labels=2)
    assert stats.n_images == 0
    assert not stats.intersection.any() and not stats.union.any()
    with pytest.raises(ShapeError):
        accumulate_stats([])


def test_single_image_shared_label():
    y = np.zeros((2, 1), dtype=np.uint8)
    y[0, 0] = y[1, 0] = 1
    stats = accumulate_stats([y])
    assert stats.intersection[0, 1, 0] == 1 and stats.union[0, 1, 0] == 1


def test_three_image_example():
    # region A positive in images {1, 2}, region B in {2, 3} (1-based)
    labels = np.zeros((3, 2, 1), dtype=np.uint8)
    labels[[0, 1], 0, 0] = 1
    labels[[1, 2], 1, 0] = 1
    stats = accumulate_stats(labels)
    assert stats.intersection[0, 1, 0] == 1
    assert stats.union[0, 1, 0] == 3
    raw = jaccard_matrix(stats)
    assert raw[0, 1] == pytest.approx(1 / 3, abs=1e-15)
    np.testing.assert_array_equal(raw, brute_force_jaccard(labels))


def test_shape_mismatch_raises():
    with pytest.raises(ShapeError):
        accumulate_stats([np.zeros((2, 2)), np.zeros((3, 2))])


def test_self_similarity_and_disjoint_regions():
    labels = np.zeros((4, 2, 2), dtype=np.uint8)
    labels[[0, 1], 0, 0] = 1
    labels[[2], 0, 1] = 1
    labels[[2, 3], 1, 0] = 1
    labels[[0], 1, 1] = 1
    raw = jaccard_matrix(accumulate_stats(labels))
    assert raw[0, 0] == 1.0 and raw[1, 1] == 1.0
    assert raw[0, 1] == 0.0


def test_empty_union_label_contributes_zero():
    labels = np.zeros((3, 2, 2), dtype=np.uint8)
    labels[:, 0, 0] = 1
    labels[:, 1, 0] = 1
    raw = jaccard_matrix(accumulate_stats(labels))
    # label 1 never appears: its term is 0, so the mean over M=2 labels is 1/2
    assert raw[0, 1] == 0.5
    assert np.isfinite(raw).all()


def test_threshold_boundary_is_inclusive():
    raw = np.array([[0.5, 0.4999], [0.4999, 0.5]])
    np.testing.assert_array_equal(threshold(raw, 0.5), [[1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_array_equal(threshold(raw, 0.0), np.ones((2, 2)))
    for bad in (-0.1, 1.1):
        with pytest.raises(ConfigError):
            threshold(raw, bad)


def test_normalize_examples():
    np.testing.assert_array_equal(normalize(np.zeros((1, 1))), [[1.0]])
    # degree 2 on both nodes: 1/sqrt(2*2)
    np.testing.assert_allclose(normalize(np.array([[0.0, 1.0], [1.0, 0.0]])), np.full((2, 2), 0.5))
    np.testing.assert_array_equal(normalize(np.zeros((3, 3))), np.eye(3))


def test_normalize_self_loop_not_doubled():
    with_diag = normalize(np.ones((2, 2)))
    without = normalize(np.array([[0.0, 1.0], [1.0, 0.0]]))
    np.testing.assert_array_equal(with_diag, without)


def _random_labels(rng, n_max=50, k_max=6, m_max=4):
    n, k, m = rng.integers(0, n_max + 1), rng.integers(1, k_max + 1), rng.integers(1, m_max + 1)
    p = rng.uniform(0.05, 0.9)
    return (rng.random((n, k, m)) < p).astype(np.uint8)


def test_jaccard_equals_brute_force_on_random_datasets():
    rng = np.random.default_rng(0)
    for _ in range(100):
        labels = _random_labels(rng)
        n, k, m = labels.shape
        raw = jaccard_matrix(accumulate_stats(labels, k=k, n_labels=m))
        np.testing.assert_array_equal(raw, brute_force_jaccard(labels))


def test_stats_invariants():
    rng = np.random.default_rng(1)
    for _ in range(20):
        labels = _random_labels(rng)
        s = accumulate_stats(labels, k=labels.shape[1], n_labels=labels.shape[2])
        assert np.all(s.intersection <= s.union) and np.all(s.union <= s.n_images)
        assert np.array_equal(s.intersection, s.intersection.transpose(1, 0, 2))
        diag = np.arange(s.k)
        assert np.array_equal(s.intersection[diag, diag], s.union[diag, diag])


def test_sharded_stats_merge():
    rng = np.random.default_rng(2)
    labels = (rng.random((40, 5, 3)) < 0.3).astype(np.uint8)
    whole = accumulate_stats(labels)
    merged = accumulate_stats(labels[:17]).merge(accumulate_stats(labels[17:]))
    assert np.array_equal(whole.intersection, merged.intersection)
    assert np.array_equal(whole.union, merged.union)
    assert merged.n_images == 40


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_image_order_and_region_permutation(seed):
    rng = np.random.default_rng(seed)
    labels = (rng.random((30, 5, 3)) < 0.4).astype(np.uint8)
    a = adjacency_from_labels(labels, 0.3)
    b = adjacency_from_labels(labels[rng.permutation(30)], 0.3)
    for x, y in ((a.raw, b.raw), (a.binary, b.binary), (a.normalized, b.normalized)):
        assert x.tobytes() == y.tobytes()

    pi = rng.permutation(5)
    c = adjacency_from_labels(labels[:, pi, :], 0.3)
    np.testing.assert_array_equal(c.raw, a.raw[np.ix_(pi, pi)])
    np.testing.assert_array_equal(c.binary, a.binary[np.ix_(pi, pi)])
    np.testing.assert_allclose(c.normalized, a.normalized[np.ix_(pi, pi)], rtol=0, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 18))
def test_normalized_structure_and_spectrum(seed, k):
    rng = np.random.default_rng(seed)
    upper = np.triu(rng.random((k, k)) < 0.4, 1)
    b = (upper | upper.T).astype(np.float64)
    a_hat = normalize(b)
    deg = b.sum(axis=1) + 1.0
    expected = (b + np.eye(k)) / np.sqrt(np.outer(deg, deg))
    np.testing.assert_allclose(a_hat, expected, atol=1e-15)
    np.testing.assert_array_equal(a_hat, a_hat.T)
    eig = np.linalg.eigvalsh(a_hat)
    assert eig.min() >= -1 - 1e-12 and eig.max() <= 1 + 1e-12


def test_build_adjacency_invariants():
    rng = np.random.default_rng(3)
    labels = (rng.random((60, 6, 4)) < 0.3).astype(np.uint8)
    adj = build_adjacency(accumulate_stats(labels), 0.2)
    assert np.array_equal(adj.raw, adj.raw.T) and np.array_equal(adj.binary, adj.binary.T)
    assert np.all((adj.raw >= 0) & (adj.raw <= 1))
    np.testing.assert_array_equal(adj.binary, (adj.raw >= 0.2).astype(float))
    np.testing.assert_array_equal(np.diag(adj.raw), 1.0)
    assert all(i < j for i, j in adj.edges())


def test_merge_shape_mismatch():
    with pytest.raises(ShapeError):
        CooccurrenceStats.empty(2, 1).merge(CooccurrenceStats.empty(3, 1))
