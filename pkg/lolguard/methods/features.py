"""
windowed additive token feature vectors

For a target token the vector holds 1 at the target's vocabulary index
and 1/(d+1) at the index of every neighbour d positions away (d <= window).
Contributions landing on the same index add up.
"""

import numpy as np

from lolguard.lexers.lexer import TokenizedCommand
from lolguard.methods.vocabulary import vocabulary
from lolguard.tools.errors import PositionOutOfRange

DEFAULT_WINDOW = 2


def window_weight(distance):
    return 1.0/(distance + 1)


def encode_indices(tokens, vocab):
    return np.array([vocab.encode(t) for t in tokens], dtype=np.int64)


def token_vector(tokens, position, vocab, window=DEFAULT_WINDOW):
    """
    Parameters
    ----------

    tokens : sequence of Token or str
        The command's tokens.

    position : int
        Index of the target token.

    vocab : vocabulary
        One-hot layout.

    window : int
        Neighbourhood radius, at least 1.

    Returns
    -------

    numpy.ndarray of length len(vocab)
    """
    assert isinstance(vocab, vocabulary)
    if not isinstance(window, (int, np.integer)) or window < 1:
        raise ValueError('window must be a positive integer, got {!r}'.format(window))
    n = len(tokens)
    if not (0 <= position < n):
        raise PositionOutOfRange('position {} outside 0..{}'.format(position, n - 1))
    return _row(encode_indices(tokens, vocab), position, len(vocab), window)


def _row(idx, position, dim, window):
    vec = np.zeros(dim, dtype=np.float64)
    vec[idx[position]] += 1.0
    n = len(idx)
    for d in range(1, window + 1):
        w = window_weight(d)
        if position - d >= 0:
            vec[idx[position - d]] += w
        if position + d < n:
            vec[idx[position + d]] += w
    return vec


def command_matrix(tc, vocab, window=DEFAULT_WINDOW):
    """one row per token in command order, shape (len(tokens), len(vocab))"""
    assert isinstance(vocab, vocabulary)
    tokens = tc.tokens if isinstance(tc, TokenizedCommand) else tc
    if not isinstance(window, (int, np.integer)) or window < 1:
        raise ValueError('window must be a positive integer, got {!r}'.format(window))
    idx = encode_indices(tokens, vocab)
    mat = np.zeros((len(idx), len(vocab)), dtype=np.float64)
    for i in range(len(idx)):
        mat[i] = _row(idx, i, len(vocab), window)
    return mat


def format_vector(vec):
    """``index:value`` pairs of the nonzero components"""
    nz = np.flatnonzero(vec)
    return ' '.join('{}:{:.6g}'.format(int(i), float(vec[i])) for i in nz)
