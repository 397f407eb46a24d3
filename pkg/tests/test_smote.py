import numpy as np
import pytest

from lolguard.methods.smote import smote, smote_sample
from lolguard.tools.errors import TooFewSamples


def on_some_segment(minority, k, synthetic, tol=1e-9):
    """
    brute force: every synthetic vector must lie on a segment from a
    minority sample to one of its k nearest minority neighbours
    (ties at the k-th distance are all admitted)
    """
    n = minority.shape[0]
    dist = np.linalg.norm(minority[:, None, :] - minority[None, :, :], axis=2)
    starts, ends = list(), list()
    for i in range(n):
        others = np.delete(np.arange(n), i)
        kth = np.sort(dist[i, others])[k - 1]
        for j in others[dist[i, others] <= kth + tol]:
            starts.append(minority[i])
            ends.append(minority[j])
    a = np.array(starts)
    d = np.array(ends) - a
    dd = (d*d).sum(axis=1)
    for s in synthetic:
        lam = np.where(dd > 0, ((s - a)*d).sum(axis=1)/np.where(dd > 0, dd, 1.), 0.)
        lam = np.clip(lam, 0., 1.)
        residual = np.linalg.norm(a + lam[:, None]*d - s, axis=1)
        if residual.min() > tol*(1 + np.abs(s).max()):
            return False
    return True


def test_synthetic_vectors_lie_on_neighbour_segments():
    rng = np.random.default_rng(3)
    for trial in range(500):
        n = int(rng.integers(2, 51))
        dim = int(rng.integers(1, 31))
        minority = rng.random((n, dim))
        count = int(rng.integers(0, 2*n + 1))
        k = 5
        synthetic = smote(minority, k=k, seed=trial).sample(count)
        assert synthetic.shape == (count, dim)
        assert on_some_segment(minority, min(k, n - 1), synthetic), trial


def test_smote_sample_count():
    minority = np.random.default_rng(0).random((10, 4))
    assert smote_sample(minority, 100).shape == (90, 4)
    assert smote_sample(minority, 10).shape == (0, 4)


def test_deterministic():
    minority = np.random.default_rng(1).random((20, 6))
    np.testing.assert_array_equal(smote_sample(minority, 50, seed=9), smote_sample(minority, 50, seed=9))
    assert not np.array_equal(smote_sample(minority, 50, seed=9), smote_sample(minority, 50, seed=10))


def test_too_few():
    with pytest.raises(TooFewSamples):
        smote_sample(np.zeros((1, 3)), 10)
    with pytest.raises(TooFewSamples):
        smote(np.zeros((0, 3)))


def test_target_below_minority():
    with pytest.raises(ValueError):
        smote_sample(np.zeros((4, 3)), 2)


def test_identical_vectors():
    minority = np.tile([1., 0., .5], (6, 1))
    synthetic = smote_sample(minority, 30)
    np.testing.assert_allclose(synthetic, np.tile([1., 0., .5], (24, 1)))


def test_k_capped_by_population():
    engine = smote(np.random.default_rng(2).random((3, 2)), k=5).fit()
    assert engine.k == 2
    assert engine.neighbors.shape == (3, 2)
    for i, row in enumerate(engine.neighbors):
        assert i not in row
