"""
the unimodel: every per-binary (vocabulary, classifier) pair behind
one routing predict call, plus the artifact directory it persists to

Artifact layout::

    <artifact_dir>/manifest.json
    <artifact_dir>/whitelist.txt
    <artifact_dir>/<binary>/vocab.txt
    <artifact_dir>/<binary>/model.bin
    <artifact_dir>/<binary>/metrics.json
"""

import json
import logging
import os
import re
from contextlib import contextmanager
from dataclasses import dataclass, field, replace

import numpy as np

from lolguard.lexers.catalog import extract_binary, is_supported, register_binary, tokenize
from lolguard.lexers.lexer import RawCommand, TokenizedCommand
from lolguard.methods.features import DEFAULT_WINDOW
from lolguard.methods.vocabulary import Label, dumps_vocabulary, load_vocabulary
from lolguard.models.classifier import (Hyperparams, DEFAULT_THRESHOLD, AGGREGATIONS, classify,
                                        dumps_model, load_model)
from lolguard.pipelines.pipeline import (ModelEntry, pipe, command_score, dumps_metadata, metrics_of,
                                         trained_at_stamp)
from lolguard.tools.dataset import DEFAULT_TRAIN_FRACTION, partition_by_binary
from lolguard.tools.errors import (ArtifactLocked, DimensionMismatch, EmptyTraining, FormatError,
                                   ManifestError, ModelMissing, UnsupportedBinary)
from lolguard.tools.icy_decorator import icy
from lolguard.tools.metrics import compute_metrics

logger = logging.getLogger(__name__)

MANIFEST_VERSION = 1
MANIFEST = 'manifest.json'
WHITELIST = 'whitelist.txt'
VOCAB = 'vocab.txt'
MODEL = 'model.bin'
METRICS = 'metrics.json'
LOCK = '.lock'

EXACT = 'exact'
REGEX = 'regex'


@dataclass(frozen=True)
class Prediction:
    binary: str
    command_line: str
    tokens: TokenizedCommand
    token_scores: tuple
    command_score: float
    label: Label
    suppressed: bool = False

    def to_dict(self):
        return {'binary': self.binary, 'command': self.command_line, 'tokens': list(self.tokens.texts),
                'token_scores': [float(s) for s in self.token_scores], 'score': float(self.command_score),
                'label': self.label.value, 'suppressed': self.suppressed}


def canonical_command(command_line):
    """lowercase, whitespace runs collapsed to one space"""
    return ' '.join(command_line.lower().split())


@dataclass(frozen=True)
class WhitelistRule:
    """
    ``exact`` rules compare canonical command text,
    ``regex`` rules must match the whole raw command (case-insensitive)
    """
    kind: str
    pattern: str
    compiled: object = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind == EXACT:
            object.__setattr__(self, 'compiled', canonical_command(self.pattern))
        elif self.kind == REGEX:
            object.__setattr__(self, 'compiled', re.compile(self.pattern, re.IGNORECASE))
        else:
            raise ValueError('unknown whitelist rule kind {!r}'.format(self.kind))

    def matches(self, command_line):
        if self.kind == EXACT:
            return canonical_command(command_line) == self.compiled
        return self.compiled.fullmatch(command_line) is not None

    def to_line(self):
        return '{}:{}'.format(self.kind, self.pattern)


def parse_whitelist(text, path=WHITELIST):
    """one ``exact:`` or ``regex:`` rule per line, ``#`` comments and blank lines skipped"""
    rules = list()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith('#'):
            continue
        kind, sep, pattern = line.partition(':')
        if not sep or kind not in (EXACT, REGEX):
            raise FormatError(path, lineno, 'rule', 'expected exact: or regex: prefix')
        if not pattern:
            raise FormatError(path, lineno, 'rule', 'empty pattern')
        try:
            rules.append(WhitelistRule(kind, pattern))
        except re.error as e:
            raise FormatError(path, lineno, 'rule', 'bad regex: {}'.format(e))
    return tuple(rules)


def dumps_whitelist(rules):
    return ''.join(r.to_line() + '\n' for r in rules).encode('utf-8')


def _write_if_changed(path, data):
    """replace ``path`` with ``data`` unless it already holds exactly those bytes"""
    if os.path.isfile(path):
        with open(path, 'rb') as f:
            if f.read() == data:
                return False
    tmp = path + '.tmp'
    with open(tmp, 'wb') as f:
        f.write(data)
    os.replace(tmp, path)
    logger.info('wrote %s (%d bytes)', path, len(data))
    return True


@contextmanager
def artifact_lock(artifact_dir):
    """advisory exclusive-create lock file, ArtifactLocked when already held"""
    path = os.path.join(artifact_dir, LOCK)
    try:
        fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ArtifactLocked('artifact directory {} is locked by another writer ({})'.format(artifact_dir, path))
    try:
        os.write(fd, str(os.getpid()).encode('ascii'))
        os.close(fd)
        yield path
    finally:
        os.remove(path)


@dataclass(frozen=True)
class ValidationReport:
    """
    counts: binary -> (detected, total) over malicious samples;
    metrics: confusion metrics when benign samples took part, else None;
    errors: (command, message) pairs of samples that could not be scored
    """
    counts: dict
    metrics: object
    errors: tuple

    @property
    def detected(self):
        return sum(d for d, _ in self.counts.values())

    @property
    def total(self):
        return sum(t for _, t in self.counts.values())


@icy
class unimodel(object):

    manifest_version = MANIFEST_VERSION

    def __init__(self, models=None, whitelist=(), aggregation='max', threshold=DEFAULT_THRESHOLD,
                 window=DEFAULT_WINDOW):
        """
        Parameters
        ----------

        models : dict
            Binary name -> ModelEntry.

        whitelist : sequence of WhitelistRule
            Suppression rules, first match wins.

        aggregation : str
            Token score pooling, one of 'max', 'min', 'avg'.

        threshold : float
            Command scores at or above it are malicious.

        window : int
            Token window radius the vocabularies were encoded with.
        """
        self.models = models if models is not None else dict()
        self.whitelist = whitelist
        self.aggregation = aggregation
        self.threshold = threshold
        self.window = window

    @property
    def models(self):
        return self._models

    @property
    def binaries(self):
        return sorted(self._models)

    @property
    def whitelist(self):
        return self._whitelist

    @property
    def aggregation(self):
        return self._aggregation

    @property
    def threshold(self):
        return self._threshold

    @property
    def window(self):
        return self._window

    @models.setter
    def models(self, models):
        assert isinstance(models, dict)
        for binary, entry in models.items():
            assert isinstance(entry, ModelEntry)
            if not binary or binary != binary.lower():
                raise ValueError('binary keys must be lowercase and non-empty: {!r}'.format(binary))
            if len(entry.vocab) != entry.classifier.input_dim:
                raise DimensionMismatch('{}: vocabulary of {} entries but classifier input_dim {}'.format(
                    binary, len(entry.vocab), entry.classifier.input_dim))
        self._models = dict(models)

    @whitelist.setter
    def whitelist(self, whitelist):
        whitelist = tuple(whitelist)
        for rule in whitelist:
            assert isinstance(rule, WhitelistRule)
        self._whitelist = whitelist

    @aggregation.setter
    def aggregation(self, aggregation):
        if aggregation not in AGGREGATIONS:
            raise ValueError('unknown aggregation {!r}, expected one of {}'.format(aggregation, AGGREGATIONS))
        self._aggregation = aggregation

    @threshold.setter
    def threshold(self, threshold):
        if not (0. <= threshold <= 1.):
            raise ValueError('threshold must lie in [0, 1], got {}'.format(threshold))
        self._threshold = float(threshold)

    @window.setter
    def window(self, window):
        if not isinstance(window, (int, np.integer)) or window < 1:
            raise ValueError('window must be a positive integer, got {!r}'.format(window))
        self._window = int(window)

    def __contains__(self, binary):
        return binary in self._models

    def entry(self, binary):
        if binary not in self._models:
            raise ModelMissing(binary)
        return self._models[binary]

    def configured(self, **kwargs):
        """copy sharing the trained models, with some settings replaced"""
        settings = dict(models=self._models, whitelist=self._whitelist, aggregation=self._aggregation,
                        threshold=self._threshold, window=self._window)
        settings.update(kwargs)
        return unimodel(**settings)

    @staticmethod
    def extract_binary(command_line):
        if not command_line or not command_line.strip():
            raise UnsupportedBinary(command_line)
        return extract_binary(command_line)

    def predict(self, command_line):
        """
        route a raw command to its binary's model

        Returns
        -------
            Prediction, with the whitelist applied
        """
        binary = self.extract_binary(command_line)
        entry = self.entry(binary)
        tc = tokenize(RawCommand(binary, command_line))
        scores, score = command_score(entry.classifier, entry.vocab, tc, self._aggregation, self._window)
        label = classify(score, self._threshold) if len(tc) else Label.BENIGN
        prediction = Prediction(binary, command_line, tc, tuple(float(s) for s in scores), score, label)
        logger.debug('%s: score %.6f over %d tokens', binary, score, len(tc))
        return self.apply_whitelist(prediction)

    def apply_whitelist(self, prediction):
        """first matching rule suppresses: label forced benign, score kept"""
        for rule in self._whitelist:
            if rule.matches(prediction.command_line):
                logger.info('%s: suppressed by whitelist rule %s', prediction.binary, rule.to_line())
                return replace(prediction, label=Label.BENIGN, suppressed=True)
        return prediction

    def validate(self, samples):
        """score labeled samples, skipping (and reporting) the ones that cannot be routed"""
        counts = dict()
        predicted, truth, errors = list(), list(), list()
        for s in samples:
            try:
                p = self.predict(s.command_line)
            except (UnsupportedBinary, ModelMissing) as e:
                errors.append((s.command_line, str(e)))
                logger.warning('cannot score %r: %s', s.command_line, e)
                continue
            predicted.append(p.label)
            truth.append(s.label)
            if s.label is Label.MALICIOUS:
                d, t = counts.get(p.binary, (0, 0))
                counts[p.binary] = (d + (p.label is Label.MALICIOUS), t + 1)
        metrics = None
        if any(t is Label.BENIGN for t in truth):
            metrics = compute_metrics(predicted, truth)
        return ValidationReport(counts, metrics, tuple(errors))

    def model_rows(self):
        """(binary, kind, Metrics or None) rows for the evaluation table"""
        return [(b, e.kind, metrics_of(e.metadata)) for b, e in sorted(self._models.items())]

    @classmethod
    def train(cls, samples, hyper=None, seed=None, window=DEFAULT_WINDOW, aggregation='max',
              threshold=DEFAULT_THRESHOLD, train_fraction=DEFAULT_TRAIN_FRACTION, whitelist=()):
        """one independent pipeline per binary present in ``samples``"""
        hyper = hyper if hyper is not None else Hyperparams()
        trained_at = trained_at_stamp()
        models = dict()
        for binary, group in partition_by_binary(samples).items():
            try:
                models[binary] = pipe(binary, group, hyper, window, train_fraction, seed).run(
                    aggregation, threshold, trained_at)
            except EmptyTraining as e:
                logger.warning('%s: not trained, %s', binary, e)
        return cls(models, whitelist, aggregation, threshold, window)

    def retrain_binary(self, binary, samples, hyper=None, seed=None, train_fraction=DEFAULT_TRAIN_FRACTION):
        """
        new unimodel with only ``binary`` rebuilt from the samples labeled for it;
        every other entry is shared untouched
        """
        binary = binary.lower()
        if not is_supported(binary):
            raise UnsupportedBinary(binary)
        group = [s for s in samples if s.binary == binary]
        if not group:
            raise EmptyTraining('{}: no samples to retrain on'.format(binary))
        entry = pipe(binary, group, hyper, self._window, train_fraction, seed).run(
            self._aggregation, self._threshold, trained_at_stamp())
        models = dict(self._models)
        models[binary] = entry
        logger.info('%s: retrained as %s', binary, entry.kind)
        return self.configured(models=models)

    def manifest(self):
        return {'version': self.manifest_version, 'binaries': self.binaries, 'aggregation': self._aggregation,
                'threshold': self._threshold, 'window': self._window}

    def save(self, artifact_dir):
        """
        write the artifact directory; files whose bytes would not change
        are left alone, so untouched binaries keep their files as they were
        """
        os.makedirs(artifact_dir, exist_ok=True)
        with artifact_lock(artifact_dir):
            for binary, entry in sorted(self._models.items()):
                subdir = os.path.join(artifact_dir, binary)
                os.makedirs(subdir, exist_ok=True)
                _write_if_changed(os.path.join(subdir, VOCAB), dumps_vocabulary(entry.vocab))
                _write_if_changed(os.path.join(subdir, MODEL), dumps_model(entry.classifier))
                _write_if_changed(os.path.join(subdir, METRICS), dumps_metadata(entry.metadata))
            _write_if_changed(os.path.join(artifact_dir, WHITELIST), dumps_whitelist(self._whitelist))
            manifest = json.dumps(self.manifest(), sort_keys=True, indent=2) + '\n'
            _write_if_changed(os.path.join(artifact_dir, MANIFEST), manifest.encode('utf-8'))
        logger.info('saved %d binaries to %s', len(self._models), artifact_dir)

    @classmethod
    def load(cls, artifact_dir):
        path = os.path.join(artifact_dir, MANIFEST)
        if not os.path.isfile(path):
            raise ManifestError('no {} in {}'.format(MANIFEST, artifact_dir))
        with open(path, 'r', encoding='utf-8') as f:
            try:
                manifest = json.load(f)
            except json.JSONDecodeError as e:
                raise ManifestError('{}: {}'.format(path, e))
        if not isinstance(manifest, dict) or manifest.get('version') != cls.manifest_version:
            raise ManifestError('{}: unsupported manifest version {!r}'.format(
                path, manifest.get('version') if isinstance(manifest, dict) else None))
        for key in ('binaries', 'aggregation', 'threshold'):
            if key not in manifest:
                raise ManifestError('{}: missing {!r}'.format(path, key))
        models = dict()
        binaries = manifest['binaries']
        if not isinstance(binaries, list) or not all(isinstance(b, str) for b in binaries):
            raise ManifestError('{}: binaries must be a list of names'.format(path))
        for binary in binaries:
            if not is_supported(binary):
                logger.warning('manifest lists %s, registering it with the generic lexer', binary)
                try:
                    register_binary(binary)
                except ValueError as e:
                    raise ManifestError('{}: {}'.format(path, e)) from e
            models[binary] = cls.load_entry(artifact_dir, binary)
        whitelist = tuple()
        wpath = os.path.join(artifact_dir, WHITELIST)
        if os.path.isfile(wpath):
            with open(wpath, 'r', encoding='utf-8') as f:
                whitelist = parse_whitelist(f.read(), wpath)
        try:
            uni = cls(models, whitelist, manifest['aggregation'], manifest['threshold'],
                      manifest.get('window', DEFAULT_WINDOW))
        except ValueError as e:
            raise ManifestError('{}: {}'.format(path, e))
        logger.info('loaded %d binaries from %s', len(models), artifact_dir)
        return uni

    @staticmethod
    def load_entry(artifact_dir, binary):
        subdir = os.path.join(artifact_dir, binary)
        paths = {name: os.path.join(subdir, name) for name in (VOCAB, MODEL, METRICS)}
        for name, p in paths.items():
            if not os.path.isfile(p):
                raise ManifestError('{}: manifest lists it but {} is missing'.format(binary, p))
        try:
            vocab = load_vocabulary(paths[VOCAB], binary)
            clf = load_model(paths[MODEL])
        except ValueError as e:
            raise ManifestError('{}: damaged artifact: {}'.format(binary, e)) from e
        if clf.binary != binary:
            raise ManifestError('{}: model file belongs to {!r}'.format(binary, clf.binary))
        if len(vocab) != clf.input_dim:
            raise ManifestError('{}: vocabulary of {} entries but model input_dim {}'.format(
                binary, len(vocab), clf.input_dim))
        with open(paths[METRICS], 'r', encoding='utf-8') as f:
            try:
                metadata = json.load(f)
            except json.JSONDecodeError as e:
                raise ManifestError('{}: {}'.format(paths[METRICS], e))
        if not isinstance(metadata, dict):
            raise ManifestError('{}: expected a JSON object'.format(paths[METRICS]))
        return ModelEntry(vocab, clf, metadata)
