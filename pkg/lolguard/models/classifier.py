"""
base token classifier, hyper-parameters, model selection,
score pooling and the model.bin codec
"""

import json
import logging
from dataclasses import dataclass, asdict, fields

import numpy as np

from lolguard.methods.vocabulary import Label
from lolguard.tools.errors import DimensionMismatch, EmptyScores, EmptyTraining, FormatError

logger = logging.getLogger(__name__)

MLP = 'MLP'
RF = 'RF'
KINDS = (MLP, RF)

DEFAULT_THRESHOLD = 0.5
AGGREGATIONS = ('max', 'min', 'avg')

MODEL_FORMAT = 'lolguard-model'
MODEL_VERSION = 1


@dataclass(frozen=True)
class Hyperparams:
    mlp_hidden_sizes: tuple = (64,)
    mlp_learning_rate: float = 0.005
    mlp_epochs: int = 60
    mlp_batch_size: int = 64
    mlp_l2: float = 1e-4
    rf_tree_count: int = 100
    rf_max_depth: int = None
    rf_min_samples_split: int = 2
    sample_threshold: int = 500
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'mlp_hidden_sizes', tuple(int(h) for h in self.mlp_hidden_sizes))
        if not self.mlp_hidden_sizes or any(h < 1 for h in self.mlp_hidden_sizes):
            raise ValueError('mlp_hidden_sizes must hold positive integers')
        if not self.mlp_learning_rate > 0:
            raise ValueError('mlp_learning_rate must be positive')
        if self.mlp_epochs < 1 or self.mlp_batch_size < 1:
            raise ValueError('mlp_epochs and mlp_batch_size must be positive')
        if self.mlp_l2 < 0:
            raise ValueError('mlp_l2 must be non-negative')
        if self.rf_tree_count < 1:
            raise ValueError('rf_tree_count must be positive')
        if self.rf_max_depth is not None and self.rf_max_depth < 1:
            raise ValueError('rf_max_depth must be positive or None')
        if self.rf_min_samples_split < 2:
            raise ValueError('rf_min_samples_split must be at least 2')
        if self.sample_threshold < 1:
            raise ValueError('sample_threshold must be at least 1')

    def to_dict(self):
        d = asdict(self)
        d['mlp_hidden_sizes'] = list(self.mlp_hidden_sizes)
        return d

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def select_classifier_kind(train_vector_count, threshold=500):
    """MLP once the training split holds ``threshold`` token vectors, RF below"""
    assert (train_vector_count >= 1)
    return MLP if train_vector_count >= threshold else RF


class tokenclassifier(object):

    kind = None

    def __init__(self, binary, input_dim, hyper=None, seed=None):
        """
        Parameters
        ----------

        binary : str
            Binary the classifier scores.

        input_dim : int
            Vocabulary size the classifier was trained for.

        hyper : Hyperparams
            Training knobs, defaults when None.

        seed : int
            Random seed, ``hyper.seed`` when None.
        """
        self.binary = binary
        self.input_dim = input_dim
        self.hyper = hyper if hyper is not None else Hyperparams()
        self.seed = self._hyper.seed if seed is None else seed
        self.fitted = False

    @property
    def binary(self):
        return self._binary

    @property
    def input_dim(self):
        return self._input_dim

    @property
    def hyper(self):
        return self._hyper

    @property
    def seed(self):
        return self._seed

    @property
    def fitted(self):
        return self._fitted

    @binary.setter
    def binary(self, binary):
        assert isinstance(binary, str)
        self._binary = binary

    @input_dim.setter
    def input_dim(self, input_dim):
        assert isinstance(input_dim, (int, np.integer))
        if input_dim < 1:
            raise DimensionMismatch('input_dim must be positive, got {}'.format(input_dim))
        self._input_dim = int(input_dim)

    @hyper.setter
    def hyper(self, hyper):
        assert isinstance(hyper, Hyperparams)
        self._hyper = hyper

    @seed.setter
    def seed(self, seed):
        assert isinstance(seed, (int, np.integer))
        self._seed = int(seed)

    @fitted.setter
    def fitted(self, fitted):
        assert isinstance(fitted, bool)
        self._fitted = fitted

    def check(self, matrix):
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim == 1 and matrix.size == 0:
            matrix = matrix.reshape(0, self._input_dim)
        if matrix.ndim != 2 or matrix.shape[1] != self._input_dim:
            raise DimensionMismatch('expected rows of length {}, got shape {}'.format(self._input_dim, matrix.shape))
        return matrix

    def fit(self, rows, y):
        raise NotImplementedError

    def scores(self, matrix):
        """malicious-class probability per row"""
        raise NotImplementedError

    def arrays(self):
        """ordered (name, array) pairs holding the trained state"""
        raise NotImplementedError

    def load_arrays(self, arrays):
        raise NotImplementedError

    def predict_token_scores(self, matrix):
        assert self._fitted
        matrix = self.check(matrix)
        if matrix.shape[0] == 0:
            return np.zeros(0, dtype=np.float64)
        return np.clip(self.scores(matrix), 0., 1.)


def _catalog():
    from lolguard.models.mlp import mlpclassifier
    from lolguard.models.forest import rfclassifier
    return {MLP: mlpclassifier, RF: rfclassifier}


def _check_training(rows, labels):
    if rows is None or len(rows) == 0:
        raise EmptyTraining('no training rows')
    lengths = {len(r) for r in rows}
    if len(lengths) != 1:
        raise DimensionMismatch('training rows of differing lengths {}'.format(sorted(lengths)))
    rows = np.asarray(rows, dtype=np.float64)
    if len(labels) != rows.shape[0]:
        raise DimensionMismatch('{} labels for {} rows'.format(len(labels), rows.shape[0]))
    if rows.shape[1] < 1:
        raise DimensionMismatch('training rows are empty vectors')
    y = np.zeros(len(labels), dtype=np.int8)
    for i, l in enumerate(labels):
        if isinstance(l, (Label, str)):
            y[i] = int(Label(l).positive)
        else:
            y[i] = 1 if int(l) else 0
    return rows, y


def train(rows, labels, hyper=None, seed=None, binary='', kind=None):
    """
    fit a token classifier; the kind follows the row count and
    ``hyper.sample_threshold`` unless given explicitly
    """
    rows, y = _check_training(rows, labels)
    hyper = hyper if hyper is not None else Hyperparams()
    if kind is None:
        kind = select_classifier_kind(rows.shape[0], hyper.sample_threshold)
    if kind not in KINDS:
        raise ValueError('unknown classifier kind {!r}'.format(kind))
    clf = _catalog()[kind](binary, rows.shape[1], hyper, seed)
    logger.info('%s: training %s on %d rows of dim %d (%d malicious)',
                binary, kind, rows.shape[0], rows.shape[1], int(y.sum()))
    clf.fit(rows, y)
    return clf


def predict_token_scores(clf, matrix):
    return clf.predict_token_scores(matrix)


def aggregate(scores, mode='max'):
    """pool token scores into one command score"""
    if len(scores) == 0:
        raise EmptyScores('cannot pool an empty score sequence')
    scores = np.asarray(scores, dtype=np.float64)
    if mode == 'max':
        return float(np.max(scores))
    if mode == 'min':
        return float(np.min(scores))
    if mode == 'avg':
        return float(np.mean(scores))
    raise ValueError('unknown aggregation {!r}, expected one of {}'.format(mode, AGGREGATIONS))


def classify(command_score, threshold=DEFAULT_THRESHOLD):
    """malicious iff score >= threshold"""
    return Label.MALICIOUS if command_score >= threshold else Label.BENIGN


def dumps_model(clf):
    """
    one JSON header line followed by the raw little-endian bytes of
    every array, in header order
    """
    assert clf.fitted
    arrays = [(name, np.ascontiguousarray(a, dtype=a.dtype.newbyteorder('<'))) for name, a in clf.arrays()]
    header = {'format': MODEL_FORMAT, 'version': MODEL_VERSION, 'kind': clf.kind, 'binary': clf.binary,
              'input_dim': clf.input_dim, 'seed': clf.seed, 'hyperparams': clf.hyper.to_dict(),
              'arrays': [{'name': n, 'dtype': a.dtype.str, 'shape': list(a.shape)} for n, a in arrays]}
    chunks = [json.dumps(header, sort_keys=True, separators=(',', ':')).encode('utf-8'), b'\n']
    chunks.extend(a.tobytes() for _, a in arrays)
    return b''.join(chunks)


def save_model(clf, path):
    with open(path, 'wb') as f:
        f.write(dumps_model(clf))


def _header_field(path, header, key, types):
    value = header.get(key)
    if isinstance(value, bool) or not isinstance(value, types):
        raise FormatError(path, 1, key, 'missing or mistyped value {!r}'.format(value))
    return value


def _read_arrays(path, header, blob, offset):
    """slice the array blocks named in the header out of the blob"""
    layout = _header_field(path, header, 'arrays', list)
    arrays = dict()
    for field in layout:
        if not isinstance(field, dict):
            raise FormatError(path, 1, 'arrays', 'array entry {!r} is not an object'.format(field))
        name = field.get('name')
        if not isinstance(name, str) or name in arrays:
            raise FormatError(path, 1, 'arrays', 'bad or repeated array name {!r}'.format(name))
        try:
            dtype = np.dtype(field['dtype'])
            shape = tuple(int(s) for s in field['shape'])
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(path, 1, name, 'bad dtype or shape: {}'.format(e))
        if dtype.hasobject or any(s < 0 for s in shape):
            raise FormatError(path, 1, name, 'unsupported dtype {} or shape {}'.format(dtype, shape))
        nbytes = dtype.itemsize*int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(blob):
            raise FormatError(path, 2, name, 'truncated array data')
        if nbytes:
            a = np.frombuffer(blob, dtype=dtype, count=nbytes//dtype.itemsize, offset=offset).reshape(shape)
        else:
            a = np.zeros(shape, dtype=dtype)
        arrays[name] = a.astype(dtype.newbyteorder('='))
        offset += nbytes
    if offset != len(blob):
        raise FormatError(path, 2, 'arrays', '{} trailing bytes'.format(len(blob) - offset))
    return arrays


def load_model(path):
    """
    read a model.bin; any damage to the header or the array blocks
    surfaces as FormatError
    """
    with open(path, 'rb') as f:
        blob = f.read()
    cut = blob.find(b'\n')
    if cut < 0:
        raise FormatError(path, 1, 'header', 'no header line')
    try:
        header = json.loads(blob[:cut].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(path, 1, 'header', str(e))
    if not isinstance(header, dict):
        raise FormatError(path, 1, 'header', 'header is not a JSON object')
    if header.get('format') != MODEL_FORMAT or header.get('version') != MODEL_VERSION:
        raise FormatError(path, 1, 'format', 'unsupported model format {!r} v{!r}'.format(
            header.get('format'), header.get('version')))
    kind = header.get('kind')
    if kind not in KINDS:
        raise FormatError(path, 1, 'kind', 'unknown kind {!r}'.format(kind))
    binary = _header_field(path, header, 'binary', str)
    input_dim = _header_field(path, header, 'input_dim', int)
    seed = _header_field(path, header, 'seed', int)
    hyperparams = _header_field(path, header, 'hyperparams', dict)
    arrays = _read_arrays(path, header, blob, cut + 1)
    try:
        clf = _catalog()[kind](binary, input_dim, Hyperparams.from_dict(hyperparams), seed)
    except (TypeError, ValueError) as e:
        raise FormatError(path, 1, 'header', str(e))
    try:
        clf.load_arrays(arrays)
    except KeyError as e:
        raise FormatError(path, 2, 'arrays', 'missing array {}'.format(e))
    except ValueError as e:
        raise FormatError(path, 2, 'arrays', str(e))
    clf.fitted = True
    return clf
