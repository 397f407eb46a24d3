"""
random forest token classifier

Gini trees grown on bootstrap samples, sqrt(dim) candidate features per
split; a row's score is the fraction of trees whose leaf votes malicious.
All trees live in flat node arrays so the forest serializes as a handful
of numpy arrays.
"""

import logging

import numpy as np

from lolguard.models.classifier import tokenclassifier, RF
from lolguard.tools.icy_decorator import icy

logger = logging.getLogger(__name__)

LEAF = -1
NODE_ARRAYS = ('feature', 'threshold', 'left', 'right', 'value', 'roots')


def best_split(x, y):
    """
    lowest weighted Gini split of one feature column

    Returns
    -------
        (impurity, threshold) or None when the column is constant
    """
    order = np.argsort(x, kind='stable')
    xs = x[order]
    ys = y[order]
    n = len(xs)
    cut = np.flatnonzero(xs[1:] > xs[:-1])  # split after position cut[i]
    if not len(cut):
        return None
    pos = np.cumsum(ys)
    nl = (cut + 1).astype(np.float64)
    nr = n - nl
    pl = pos[cut]/nl
    pr = (pos[-1] - pos[cut])/nr
    imp = nl*2.*pl*(1. - pl) + nr*2.*pr*(1. - pr)
    i = int(np.argmin(imp))
    return float(imp[i]), 0.5*(xs[cut[i]] + xs[cut[i] + 1])


def grow_tree(rows, y, rng, max_features, max_depth=None, min_samples_split=2):
    """
    Returns
    -------
        feature, threshold, left, right, value arrays of one tree, root at 0
    """
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        feature.append(LEAF)
        threshold.append(0.)
        left.append(LEAF)
        right.append(LEAF)
        value.append(float(y[idx].mean()))
        return len(feature) - 1

    stack = [(new_node(np.arange(len(y))), np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        ys = y[idx]
        if (len(idx) < min_samples_split or ys.min() == ys.max()
                or (max_depth is not None and depth >= max_depth)):
            continue
        xs = rows[idx]
        varying = np.flatnonzero(xs.max(axis=0) > xs.min(axis=0))
        if not len(varying):
            continue
        candidates = rng.permutation(varying)[:max_features]
        best = None
        for f in candidates:
            rslt = best_split(xs[:, f], ys)
            if rslt is not None and (best is None or rslt[0] < best[0]):
                best = (rslt[0], int(f), rslt[1])
        if best is None:
            continue
        _, f, thr = best
        mask = xs[:, f] <= thr
        feature[node] = f
        threshold[node] = thr
        lidx, ridx = idx[mask], idx[~mask]
        left[node] = new_node(lidx)
        right[node] = new_node(ridx)
        stack.append((right[node], ridx, depth + 1))
        stack.append((left[node], lidx, depth + 1))
    return (np.array(feature, dtype=np.int64), np.array(threshold, dtype=np.float64),
            np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
            np.array(value, dtype=np.float64))


def check_nodes(nodes, input_dim):
    """
    structural check of flat node arrays, ValueError on any
    inconsistency a traversal would trip over
    """
    for key in NODE_ARRAYS:
        if np.ndim(nodes[key]) != 1:
            raise ValueError('node array {!r} must be one-dimensional'.format(key))
    for key in ('feature', 'left', 'right', 'roots'):
        if not np.issubdtype(np.asarray(nodes[key]).dtype, np.integer):
            raise ValueError('node array {!r} must hold integers'.format(key))
    n = len(nodes['feature'])
    for key in ('threshold', 'left', 'right', 'value'):
        if len(nodes[key]) != n:
            raise ValueError('node array {!r} holds {} entries, expected {}'.format(key, len(nodes[key]), n))
    feature, left, right, roots = nodes['feature'], nodes['left'], nodes['right'], nodes['roots']
    if not len(roots) or np.any(roots < 0) or np.any(roots >= n):
        raise ValueError('tree roots outside the {} nodes'.format(n))
    if np.any(feature < LEAF) or np.any(feature >= input_dim):
        raise ValueError('split feature outside [0, {})'.format(input_dim))
    # children follow their parent, so every traversal ends
    split = np.flatnonzero(feature != LEAF)
    for child in (left, right):
        if np.any(child[split] <= split) or np.any(child >= n):
            raise ValueError('split node child must lie after its parent and below {}'.format(n))


@icy
class rfclassifier(tokenclassifier):

    kind = RF

    def __init__(self, binary, input_dim, hyper=None, seed=None):
        super(rfclassifier, self).__init__(binary, input_dim, hyper, seed)
        self.nodes = None

    @property
    def nodes(self):
        """dict of flat node arrays: feature, threshold, left, right, value, roots"""
        return self._nodes

    @property
    def ntree(self):
        return 0 if self._nodes is None else len(self._nodes['roots'])

    @property
    def max_features(self):
        return max(1, int(np.sqrt(self._input_dim)))

    @nodes.setter
    def nodes(self, nodes):
        if nodes is not None:
            assert isinstance(nodes, dict)
            check_nodes(nodes, self._input_dim)
        self._nodes = nodes

    def fit(self, rows, y):
        y = y.astype(np.float64)
        n = rows.shape[0]
        seeds = np.random.SeedSequence(self._seed).spawn(self._hyper.rf_tree_count)
        parts = {k: list() for k in ('feature', 'threshold', 'left', 'right', 'value')}
        roots = list()
        offset = 0
        for s in seeds:
            rng = np.random.default_rng(s)
            boot = rng.integers(0, n, size=n)
            f, t, l, r, v = grow_tree(rows[boot], y[boot], rng, self.max_features,
                                      self._hyper.rf_max_depth, self._hyper.rf_min_samples_split)
            roots.append(offset)
            parts['feature'].append(f)
            parts['threshold'].append(t)
            parts['left'].append(np.where(l == LEAF, LEAF, l + offset))
            parts['right'].append(np.where(r == LEAF, LEAF, r + offset))
            parts['value'].append(v)
            offset += len(f)
        nodes = {k: np.concatenate(v) for k, v in parts.items()}
        nodes['roots'] = np.array(roots, dtype=np.int64)
        self.nodes = nodes
        self.fitted = True
        logger.info('%s: grew %d trees, %d nodes', self._binary, len(roots), offset)
        return self

    def votes(self, matrix):
        """(ntree, nrow) array of 0/1 leaf votes"""
        nd = self._nodes
        nrow = matrix.shape[0]
        rows = np.arange(nrow)
        out = np.zeros((self.ntree, nrow), dtype=np.float64)
        for t, root in enumerate(nd['roots']):
            node = np.full(nrow, root, dtype=np.int64)
            active = nd['feature'][node] != LEAF
            while active.any():
                cur = node[active]
                f = nd['feature'][cur]
                go_left = matrix[rows[active], f] <= nd['threshold'][cur]
                node[active] = np.where(go_left, nd['left'][cur], nd['right'][cur])
                active = nd['feature'][node] != LEAF
            out[t] = nd['value'][node] >= 0.5
        return out

    def scores(self, matrix):
        return self.votes(matrix).mean(axis=0)

    def arrays(self):
        return [(k, self._nodes[k]) for k in NODE_ARRAYS]

    def load_arrays(self, arrays):
        self.nodes = {k: arrays[k] for k in NODE_ARRAYS}
