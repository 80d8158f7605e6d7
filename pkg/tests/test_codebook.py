import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from etld.codebook import (
    Codebook,
    CountHistogram,
    accumulate,
    normalize,
    quantize,
    quantize_many,
    train_codebook,
)
from etld.errors import DataError, TrainingError


def brute_force(x, C):
    return int(np.argmin(((C - x) ** 2).sum(axis=1)))


def random_descriptors(rng, n, d=60, sparsity=0.6):
    X = rng.random((n, d)) * (rng.random((n, d)) > sparsity)
    s = X.sum(axis=1, keepdims=True)
    return np.divide(X, s, out=np.zeros_like(X), where=s > 0)


@pytest.fixture(scope="module")
def codebook():
    rng = np.random.default_rng(0)
    return train_codebook(random_descriptors(rng, 2000), K=50, seed=1)


def test_quantize_matches_brute_force(codebook, rng):
    X = random_descriptors(rng, 300)
    for x in X:
        assert quantize(x, codebook) == brute_force(x, codebook.centroids)


def test_quantize_many_matches_quantize(codebook, rng):
    X = random_descriptors(rng, 200)
    assert quantize_many(X, codebook).tolist() == [quantize(x, codebook) for x in X]


def test_quantize_rejects_wrong_dimension(codebook):
    with pytest.raises(DataError):
        quantize(np.zeros(59), codebook)


def test_zero_descriptor_goes_to_smallest_norm(codebook):
    assert quantize(np.zeros(60), codebook) == int(np.argmin(codebook.sq_norms))


def test_distortion_non_increasing(codebook):
    d = np.array(codebook.distortion)
    assert len(d) >= 2
    assert np.all(np.diff(d) <= 1e-12)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_distortion_non_increasing_any_seed(seed):
    rng = np.random.default_rng(seed)
    cb = train_codebook(random_descriptors(rng, 300, d=8), K=10, seed=seed)
    assert np.all(np.diff(cb.distortion) <= 1e-12)


def test_training_is_seed_deterministic(rng):
    X = random_descriptors(rng, 500)
    a = train_codebook(X, K=20, seed=5)
    b = train_codebook(X, K=20, seed=5)
    np.testing.assert_array_equal(a.centroids, b.centroids)


def test_too_few_distinct_descriptors():
    X = np.tile(np.eye(60)[:3], (100, 1))
    with pytest.raises(TrainingError):
        train_codebook(X, K=4)


def test_codebook_file_round_trip(codebook, tmp_path):
    p = tmp_path / "cb.bin"
    codebook.save(p)
    back = Codebook.load(p)
    np.testing.assert_array_equal(back.centroids, codebook.centroids)


def test_codebook_load_rejects_garbage(tmp_path):
    p = tmp_path / "cb.bin"
    p.write_bytes(b"not a codebook")
    with pytest.raises(DataError):
        Codebook.load(p)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 9), max_size=60), st.randoms(use_true_random=False))
def test_accumulate_is_order_independent(labels, rnd):
    a = CountHistogram.zeros(10)
    for k in labels:
        accumulate(a, k)
    shuffled = list(labels)
    rnd.shuffle(shuffled)
    b = CountHistogram.zeros(10)
    for k in shuffled:
        accumulate(b, k)
    np.testing.assert_array_equal(a.counts, b.counts)
    np.testing.assert_array_equal(a.counts, CountHistogram.from_labels(labels, 10).counts)
    assert a.n_events == len(labels) == a.counts.sum()


def test_accumulate_out_of_range():
    with pytest.raises(IndexError):
        accumulate(CountHistogram.zeros(5), 5)


def test_normalize():
    h = CountHistogram.from_labels([0, 0, 1, 3], 4)
    np.testing.assert_allclose(normalize(h), [0.5, 0.25, 0, 0.25])
    assert normalize(CountHistogram.zeros(4)).sum() == 0
