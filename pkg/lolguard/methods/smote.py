"""
synthetic minority over-sampling

Every synthetic vector lies on the segment between a minority sample
and one of its k nearest minority neighbours (Euclidean).
"""

import logging

import numpy as np
from scipy.spatial import cKDTree

from lolguard.tools.errors import TooFewSamples
from lolguard.tools.icy_decorator import icy

logger = logging.getLogger(__name__)


@icy
class smote(object):

    def __init__(self, minority, k=5, seed=0):
        """
        Parameters
        ----------

        minority : numpy.ndarray
            Minority class vectors, shape (n, dim), n >= 2.

        k : int
            Number of nearest neighbours, capped at n-1.

        seed : int
            Random generator seed.
        """
        self.minority = minority
        self.k = k
        self.seed = seed
        self.neighbors = None

    @property
    def minority(self):
        return self._minority

    @property
    def k(self):
        return self._k

    @property
    def seed(self):
        return self._seed

    @property
    def neighbors(self):
        return self._neighbors

    @minority.setter
    def minority(self, minority):
        minority = np.asarray(minority, dtype=np.float64)
        assert (minority.ndim == 2)
        if minority.shape[0] < 2:
            raise TooFewSamples('SMOTE needs at least 2 minority samples, got {}'.format(minority.shape[0]))
        if np.isnan(minority).any():
            raise ValueError('encounter nan')
        self._minority = minority

    @k.setter
    def k(self, k):
        assert isinstance(k, (int, np.integer))
        if k < 1:
            raise ValueError('k must be positive, got {}'.format(k))
        self._k = int(min(k, self._minority.shape[0] - 1))

    @seed.setter
    def seed(self, seed):
        assert isinstance(seed, (int, np.integer))
        self._seed = int(seed)

    @neighbors.setter
    def neighbors(self, neighbors):
        if neighbors is not None:
            assert (neighbors.shape == (self._minority.shape[0], self._k))
        self._neighbors = neighbors

    def fit(self):
        """k nearest minority neighbours of every minority sample, self excluded"""
        n = self._minority.shape[0]
        tree = cKDTree(self._minority)
        _, idx = tree.query(self._minority, k=self._k + 1)
        idx = np.asarray(idx).reshape(n, self._k + 1)
        nbrs = np.zeros((n, self._k), dtype=np.int64)
        for i in range(n):
            row = [j for j in idx[i] if j != i]
            nbrs[i] = row[:self._k]  # duplicates of i may push i itself out of the query
        self.neighbors = nbrs
        return self

    def sample(self, count):
        """``count`` synthetic vectors"""
        assert isinstance(count, (int, np.integer))
        assert (count >= 0)
        dim = self._minority.shape[1]
        if count == 0:
            return np.zeros((0, dim), dtype=np.float64)
        if self._neighbors is None:
            self.fit()
        rng = np.random.default_rng(self._seed)
        base = rng.integers(0, self._minority.shape[0], size=count)
        pick = rng.integers(0, self._k, size=count)
        lam = rng.random(count)
        x = self._minority[base]
        nb = self._minority[self._neighbors[base, pick]]
        return x + lam[:, None]*(nb - x)


def smote_sample(minority, target_count, k=5, seed=0):
    """
    (target_count - len(minority)) synthetic vectors,
    TooFewSamples when fewer than two minority vectors are given
    """
    minority = np.asarray(minority, dtype=np.float64)
    if minority.ndim != 2 or minority.shape[0] < 2:
        raise TooFewSamples('SMOTE needs at least 2 minority samples')
    if target_count < minority.shape[0]:
        raise ValueError('target_count {} below minority size {}'.format(target_count, minority.shape[0]))
    engine = smote(minority, k=k, seed=seed)
    return engine.sample(int(target_count - minority.shape[0]))
