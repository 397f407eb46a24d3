"""
per-binary one-hot token corpus with a ``<rare>`` dust-bin entry
"""

import enum
import logging
import os
from collections import defaultdict

from lolguard.lexers.lexer import RARE, TokenizedCommand
from lolguard.tools.errors import FormatError
from lolguard.tools.icy_decorator import icy

logger = logging.getLogger(__name__)

BENIGN_MIN_COMMANDS = 3


class Label(str, enum.Enum):
    BENIGN = 'benign'
    MALICIOUS = 'malicious'

    @property
    def positive(self):
        return self is Label.MALICIOUS


@icy
class vocabulary(object):

    def __init__(self, binary, entries):
        """
        Parameters
        ----------

        binary : str
            Lowercase binary name.

        entries : sequence of str
            Canonical token texts, position is the one-hot index;
            must hold ``<rare>`` exactly once.
        """
        self.binary = binary
        self.entries = entries

    @property
    def binary(self):
        return self._binary

    @property
    def entries(self):
        return self._entries

    @property
    def index_of(self):
        return self._index_of

    @property
    def rare_index(self):
        return self._rare_index

    @binary.setter
    def binary(self, binary):
        assert isinstance(binary, str)
        if not binary or binary != binary.lower():
            raise ValueError('binary name must be lowercase and non-empty: {!r}'.format(binary))
        self._binary = binary

    @entries.setter
    def entries(self, entries):
        entries = tuple(entries)
        index_of = dict()
        for i, e in enumerate(entries):
            assert isinstance(e, str)
            if e in index_of:
                raise ValueError('duplicate vocabulary entry {!r}'.format(e))
            index_of[e] = i
        if RARE not in index_of:
            raise ValueError('vocabulary lacks {}'.format(RARE))
        self._entries = entries
        self._index_of = index_of
        self._rare_index = index_of[RARE]

    def __len__(self):
        return len(self._entries)

    def __contains__(self, text):
        return text in self._index_of

    def __eq__(self, other):
        if not isinstance(other, vocabulary):
            return NotImplemented
        return self._binary == other.binary and self._entries == other.entries

    def __hash__(self):
        return hash((self._binary, self._entries))

    def __repr__(self):
        return 'vocabulary({!r}, {} entries)'.format(self._binary, len(self._entries))

    def encode(self, token):
        """index of a token (or canonical text), the rare index when unseen"""
        text = token if isinstance(token, str) else token.text
        return self._index_of.get(text, self._rare_index)


def encode_token(vocab, token):
    return vocab.encode(token)


def build_vocabulary(binary, samples):
    """
    corpus rule:
    every token of a malicious command is kept, a benign-side token
    is kept once it shows up in at least three distinct tokenized commands;
    distinct means distinct token sequences
    """
    malicious = set()
    benign_commands = defaultdict(set)
    for tc, label in samples:
        assert isinstance(tc, TokenizedCommand)
        if tc.binary != binary:
            raise ValueError('sample for {!r} passed to the {!r} vocabulary'.format(tc.binary, binary))
        texts = tc.texts
        if Label(label) is Label.MALICIOUS:
            malicious.update(texts)
        else:
            for t in set(texts):
                benign_commands[t].add(texts)
    kept = set(malicious)
    kept.update(t for t, cmds in benign_commands.items() if len(cmds) >= BENIGN_MIN_COMMANDS)
    kept.add(RARE)
    vocab = vocabulary(binary, sorted(kept))
    logger.info('%s: vocabulary of %d entries (%d from malicious commands)', binary, len(vocab), len(malicious))
    return vocab


def dumps_vocabulary(vocab):
    """one entry per line, line number is the index"""
    assert isinstance(vocab, vocabulary)
    for e in vocab.entries:
        if '\n' in e or '\r' in e:
            raise ValueError('vocabulary entry {!r} contains a line break'.format(e))
    return ''.join(e + '\n' for e in vocab.entries).encode('utf-8')


def save_vocabulary(vocab, path):
    dirname = os.path.dirname(path)
    if dirname:
        os.makedirs(dirname, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(dumps_vocabulary(vocab))


def load_vocabulary(path, binary=None):
    """
    read a vocabulary file; the binary name defaults to
    the name of the directory holding the file
    """
    if binary is None:
        binary = os.path.basename(os.path.dirname(os.path.abspath(path)))
    with open(path, 'r', encoding='utf-8', newline='') as f:
        content = f.read()
    if content and not content.endswith('\n'):
        content += '\n'
    lines = content.split('\n')[:-1] if content else []
    seen = dict()
    for lineno, line in enumerate(lines, start=1):
        if line.endswith('\r'):
            raise FormatError(path, lineno, 'entry', 'carriage return in entry')
        if not line:
            raise FormatError(path, lineno, 'entry', 'empty entry')
        if line in seen:
            raise FormatError(path, lineno, 'entry', 'duplicate of line {} ({!r})'.format(seen[line], line))
        seen[line] = lineno
    if RARE not in seen:
        raise FormatError(path, len(lines) + 1, 'entry', 'missing {}'.format(RARE))
    return vocabulary(binary, lines)
