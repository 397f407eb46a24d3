"""
labeled command datasets: loading, per-binary partitioning,
stratified 80/20 splitting and SMOTE rebalancing of training rows
"""

import json
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from lolguard.lexers.catalog import is_supported
from lolguard.methods.smote import smote
from lolguard.methods.vocabulary import Label
from lolguard.tools.errors import EmptyDataset, ParseError

logger = logging.getLogger(__name__)

DEFAULT_TRAIN_FRACTION = 0.8


@dataclass(frozen=True)
class LabeledSample:
    binary: str
    command_line: str
    label: Label
    source: str = ''

    def to_json(self):
        rec = {'binary': self.binary, 'command': self.command_line, 'label': self.label.value}
        if self.source:
            rec['source'] = self.source
        return json.dumps(rec, sort_keys=True)


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple
    test: tuple
    seed: int


def parse_sample(line, lineno):
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as e:
        raise ParseError(lineno, 'invalid JSON: {}'.format(e.msg))
    if not isinstance(rec, dict):
        raise ParseError(lineno, 'expected a JSON object')
    for key in ('binary', 'command', 'label'):
        if key not in rec:
            raise ParseError(lineno, 'missing field {!r}'.format(key))
        if not isinstance(rec[key], str):
            raise ParseError(lineno, 'field {!r} must be a string'.format(key))
    source = rec.get('source', '')
    if not isinstance(source, str):
        raise ParseError(lineno, "field 'source' must be a string")
    binary = rec['binary'].lower()
    if not is_supported(binary):
        raise ParseError(lineno, 'unsupported binary {!r}'.format(rec['binary']))
    try:
        label = Label(rec['label'].lower())
    except ValueError:
        raise ParseError(lineno, 'unknown label {!r}'.format(rec['label']))
    return LabeledSample(binary, rec['command'], label, source)


def load_dataset(path):
    """one JSON object per line: binary, command, label, optional source"""
    samples = list()
    with open(path, 'r', encoding='utf-8') as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            samples.append(parse_sample(line, lineno))
    logger.info('loaded %d samples from %s', len(samples), path)
    return samples


def save_dataset(samples, path):
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        for s in samples:
            f.write(s.to_json() + '\n')


def partition_by_binary(samples):
    """binary -> samples, keys in order of first appearance"""
    parts = OrderedDict()
    for s in samples:
        parts.setdefault(s.binary, list()).append(s)
    return parts


def split(samples, train_fraction=DEFAULT_TRAIN_FRACTION, seed=0):
    """
    label-stratified train/test split

    Each class contributes floor(fraction * count) samples to train,
    clamped so a class of two or more keeps at least one sample on each side.
    A binary without benign samples trains on everything.
    """
    if not (0. < train_fraction < 1.):
        raise ValueError('train_fraction must lie in (0, 1), got {}'.format(train_fraction))
    samples = list(samples)
    if not samples:
        raise EmptyDataset('cannot split an empty dataset')
    if not any(s.label is Label.BENIGN for s in samples):
        logger.warning('%s: no benign samples, training on all %d without a test split',
                       samples[0].binary, len(samples))
        return DatasetSplit(tuple(samples), tuple(), seed)
    rng = np.random.default_rng(seed)
    train_idx = list()
    for label in (Label.BENIGN, Label.MALICIOUS):
        idx = np.array([i for i, s in enumerate(samples) if s.label is label], dtype=np.int64)
        if not len(idx):
            continue
        idx = idx[rng.permutation(len(idx))]
        ntrain = int(math.floor(train_fraction*len(idx)))
        if len(idx) >= 2:
            ntrain = min(max(ntrain, 1), len(idx) - 1)
        else:
            ntrain = 1
        train_idx.extend(idx[:ntrain].tolist())
    chosen = set(train_idx)
    train = tuple(s for i, s in enumerate(samples) if i in chosen)
    test = tuple(s for i, s in enumerate(samples) if i not in chosen)
    return DatasetSplit(train, test, seed)


def label_array(labels):
    """labels (Label, str or 0/1) -> int8 array with malicious = 1"""
    out = np.zeros(len(labels), dtype=np.int8)
    for i, l in enumerate(labels):
        if isinstance(l, (Label, str)):
            out[i] = int(Label(l).positive)
        else:
            assert l in (0, 1)
            out[i] = int(l)
    return out


def balance_training_matrix(rows, labels, seed=0, k=5):
    """
    oversample the minority class with SMOTE until both classes have
    equal counts; single-class input passes through unchanged

    Returns
    -------
        (rows, labels) with synthetic rows appended after the originals
    """
    rows = np.asarray(rows, dtype=np.float64)
    y = label_array(labels)
    assert (rows.ndim == 2 and rows.shape[0] == len(y))
    npos = int(y.sum())
    nneg = len(y) - npos
    if npos == 0 or nneg == 0 or npos == nneg:
        return rows, y
    minority_label = 1 if npos < nneg else 0
    minority = rows[y == minority_label]
    need = abs(nneg - npos)
    if minority.shape[0] == 1:
        synth = np.repeat(minority, need, axis=0)  # a lone sample spans a zero-length segment
    else:
        synth = smote(minority, k=k, seed=seed).sample(need)
    logger.info('SMOTE: %d synthetic %s rows (%d benign / %d malicious before)',
                need, Label.MALICIOUS.value if minority_label else Label.BENIGN.value, nneg, npos)
    return (np.concatenate([rows, synth], axis=0),
            np.concatenate([y, np.full(need, minority_label, dtype=np.int8)]))
