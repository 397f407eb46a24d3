import json
import logging
import os
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from lolguard.lexers.catalog import tokenize
from lolguard.lexers.lexer import RawCommand
from lolguard.methods.features import DEFAULT_WINDOW, command_matrix
from lolguard.methods.vocabulary import Label, build_vocabulary, vocabulary
from lolguard.models.classifier import (Hyperparams, DEFAULT_THRESHOLD, AGGREGATIONS, select_classifier_kind,
                                        train, aggregate, classify)
from lolguard.tools.dataset import DEFAULT_TRAIN_FRACTION, LabeledSample, split, balance_training_matrix
from lolguard.tools.errors import EmptyTraining
from lolguard.tools.icy_decorator import icy
from lolguard.tools.metrics import Metrics, compute_metrics

logger = logging.getLogger(__name__)

SMOTE_K = 5


@dataclass(frozen=True)
class ModelEntry:
    """one binary's trained state: vocabulary, classifier and its metrics.json record"""
    vocab: vocabulary
    classifier: object
    metadata: dict

    @property
    def kind(self):
        return self.classifier.kind


def trained_at_stamp():
    """UTC stamp from SOURCE_DATE_EPOCH, None when unset"""
    epoch = os.environ.get('SOURCE_DATE_EPOCH')
    if not epoch:
        return None
    try:
        return datetime.fromtimestamp(int(epoch), tz=timezone.utc).strftime('%Y-%m-%dT%H:%M:%SZ')
    except (ValueError, OverflowError, OSError):
        logger.warning('ignoring malformed SOURCE_DATE_EPOCH=%r', epoch)
        return None


def dumps_metadata(metadata):
    return (json.dumps(metadata, sort_keys=True, indent=2) + '\n').encode('utf-8')


def metrics_of(metadata):
    """Metrics held in a metrics.json record, None for an unevaluated binary"""
    if not metadata.get('evaluated'):
        return None
    return Metrics.from_dict(dict(metadata, **metadata['confusion']))


def command_score(clf, vocab, tc, aggregation='max', window=DEFAULT_WINDOW):
    """
    pooled token scores of one tokenized command

    Returns
    -------
        (token scores array, command score); a command without tokens scores 0
    """
    if not len(tc):
        return np.zeros(0, dtype=np.float64), 0.
    scores = clf.predict_token_scores(command_matrix(tc, vocab, window))
    return scores, aggregate(scores, aggregation)


@icy
class pipe(object):

    def __init__(self, binary, samples, hyper=None, window=DEFAULT_WINDOW,
                 train_fraction=DEFAULT_TRAIN_FRACTION, seed=None, smote_k=SMOTE_K):
        """
        Parameters
        ----------

        binary : str
            Lowercase binary name; every sample must belong to it.

        samples : sequence of LabeledSample
            The binary's labeled commands, training and testing halves together.

        hyper : Hyperparams
            Classifier knobs, defaults when None.

        window : int
            Token window radius of the feature vectors.

        train_fraction : float
            Share of each class sent to the training split.

        seed : int
            Seed of the split, SMOTE and classifier, ``hyper.seed`` when None.

        smote_k : int
            SMOTE neighbour count.
        """
        self.binary = binary
        self.samples = samples
        self.hyper = hyper if hyper is not None else Hyperparams()
        self.window = window
        self.train_fraction = train_fraction
        self.seed = self._hyper.seed if seed is None else seed
        self.smote_k = smote_k
        # preprocess products
        self._commands = None  # command line -> TokenizedCommand
        self._vocab = None
        self._dataset_split = None
        self._train_rows = None
        self._train_labels = None
        # analyse products
        self._classifier = None
        self._balanced_count = 0
        # evaluate products
        self._metrics = None

    @property
    def binary(self):
        return self._binary

    @property
    def samples(self):
        return self._samples

    @property
    def hyper(self):
        return self._hyper

    @property
    def window(self):
        return self._window

    @property
    def train_fraction(self):
        return self._train_fraction

    @property
    def seed(self):
        return self._seed

    @property
    def smote_k(self):
        return self._smote_k

    @property
    def vocab(self):
        return self._vocab

    @property
    def dataset_split(self):
        return self._dataset_split

    @property
    def train_rows(self):
        return self._train_rows

    @property
    def train_labels(self):
        return self._train_labels

    @property
    def classifier(self):
        return self._classifier

    @property
    def metrics(self):
        return self._metrics

    @binary.setter
    def binary(self, binary):
        assert isinstance(binary, str)
        if not binary or binary != binary.lower():
            raise ValueError('binary name must be lowercase and non-empty: {!r}'.format(binary))
        self._binary = binary

    @samples.setter
    def samples(self, samples):
        samples = tuple(samples)
        if not samples:
            raise EmptyTraining('{}: no samples to train on'.format(self._binary))
        for s in samples:
            assert isinstance(s, LabeledSample)
            if s.binary != self._binary:
                raise ValueError('sample for {!r} passed to the {!r} pipeline'.format(s.binary, self._binary))
        self._samples = samples

    @hyper.setter
    def hyper(self, hyper):
        assert isinstance(hyper, Hyperparams)
        self._hyper = hyper

    @window.setter
    def window(self, window):
        if not isinstance(window, (int, np.integer)) or window < 1:
            raise ValueError('window must be a positive integer, got {!r}'.format(window))
        self._window = int(window)

    @train_fraction.setter
    def train_fraction(self, train_fraction):
        if not (0. < train_fraction < 1.):
            raise ValueError('train_fraction must lie in (0, 1), got {}'.format(train_fraction))
        self._train_fraction = float(train_fraction)

    @seed.setter
    def seed(self, seed):
        assert isinstance(seed, (int, np.integer))
        if seed < 0:
            raise ValueError('seed must be non-negative, got {}'.format(seed))
        self._seed = int(seed)

    @smote_k.setter
    def smote_k(self, smote_k):
        assert isinstance(smote_k, (int, np.integer))
        if smote_k < 1:
            raise ValueError('smote_k must be positive, got {}'.format(smote_k))
        self._smote_k = int(smote_k)

    def tokenized(self, sample):
        return self._commands[sample.command_line]

    def preprocess(self):
        """
        tokenize, build the vocabulary over every sample of the binary,
        split 80/20 and encode the training half into token rows
        (each row carries its command's label)
        """
        self._commands = dict()
        for s in self._samples:
            if s.command_line not in self._commands:
                self._commands[s.command_line] = tokenize(RawCommand(self._binary, s.command_line))
        self._vocab = build_vocabulary(self._binary, [(self.tokenized(s), s.label) for s in self._samples])
        self._dataset_split = split(self._samples, self._train_fraction, self._seed)
        logger.info('%s: split %d train / %d test commands', self._binary,
                    len(self._dataset_split.train), len(self._dataset_split.test))
        blocks = list()
        labels = list()
        for s in self._dataset_split.train:
            mat = command_matrix(self.tokenized(s), self._vocab, self._window)
            blocks.append(mat)
            labels.extend([int(Label(s.label).positive)]*mat.shape[0])
        if blocks:
            self._train_rows = np.concatenate(blocks, axis=0)
        else:
            self._train_rows = np.zeros((0, len(self._vocab)), dtype=np.float64)
        self._train_labels = np.array(labels, dtype=np.int8)

    def analyse(self):
        """
        pick the classifier kind on the pre-SMOTE vector count,
        balance the training rows and fit
        """
        assert self._train_rows is not None, 'run preprocess first'
        nrow = self._train_rows.shape[0]
        if not nrow:
            raise EmptyTraining('{}: training commands hold no tokens'.format(self._binary))
        kind = select_classifier_kind(nrow, self._hyper.sample_threshold)
        logger.info('%s: %d training vectors, selecting %s', self._binary, nrow, kind)
        rows, y = balance_training_matrix(self._train_rows, self._train_labels, self._seed, self._smote_k)
        self._balanced_count = rows.shape[0]
        self._classifier = train(rows, y, self._hyper, self._seed, self._binary, kind)

    def evaluate(self, aggregation='max', threshold=DEFAULT_THRESHOLD):
        """metrics on the test split, None when there is no test split"""
        assert self._classifier is not None, 'run analyse first'
        if aggregation not in AGGREGATIONS:
            raise ValueError('unknown aggregation {!r}'.format(aggregation))
        test = self._dataset_split.test
        if not test:
            self._metrics = None
            logger.info('%s: no test split, skipping evaluation', self._binary)
            return None
        predicted = list()
        for s in test:
            _, score = command_score(self._classifier, self._vocab, self.tokenized(s), aggregation, self._window)
            predicted.append(classify(score, threshold))
        self._metrics = compute_metrics(predicted, [s.label for s in test])
        logger.info('%s: test accuracy %.4f f1 %.4f over %d commands', self._binary,
                    self._metrics.accuracy, self._metrics.f1, len(test))
        return self._metrics

    def metadata(self, trained_at=None):
        """the metrics.json record"""
        assert self._classifier is not None
        m = self._metrics
        nmal = sum(1 for s in self._samples if s.label is Label.MALICIOUS)
        record = {
            'binary': self._binary,
            'kind': self._classifier.kind,
            'evaluated': m is not None,
            'accuracy': None if m is None else m.accuracy,
            'precision': None if m is None else m.precision,
            'recall': None if m is None else m.recall,
            'f1': None if m is None else m.f1,
            'confusion': None if m is None else {'tp': m.tp, 'fp': m.fp, 'tn': m.tn, 'fn': m.fn},
            'sample_counts': {
                'commands': len(self._samples),
                'benign': len(self._samples) - nmal,
                'malicious': nmal,
                'train_vectors': int(self._train_rows.shape[0]),
                'balanced_vectors': int(self._balanced_count),
                'test_commands': len(self._dataset_split.test),
            },
            'vocab_size': len(self._vocab),
            'window': self._window,
            'seed': self._seed,
            'trained_at': trained_at,
        }
        return record

    def run(self, aggregation='max', threshold=DEFAULT_THRESHOLD, trained_at=None):
        """
        the full per-binary workflow

        Returns
        -------
            ModelEntry
        """
        self.preprocess()
        self.analyse()
        self.evaluate(aggregation, threshold)
        return ModelEntry(self._vocab, self._classifier, self.metadata(trained_at))
