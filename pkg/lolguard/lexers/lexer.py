"""
command-line lexer shared by every supported binary

A raw command string goes through three stages:
``split_raw`` (whitespace split honouring double quotes),
``normalize`` (strip quotes/dashes/slashes, lowercase) and
``lexer.apply_patterns`` (swap recognised patterns for special tokens).
"""

import enum
import logging
import os
import re
import tomllib
from dataclasses import dataclass, field

from lolguard.tools.icy_decorator import icy

logger = logging.getLogger(__name__)

STRIP_CHARS = '"\'-/\\'

KEYWORD_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'keywords')


class tokenkind(enum.Enum):
    WORD = 'word'
    URL = 'url'
    FILE = 'file'
    EXT = 'ext'
    ADS = 'ads'
    SHARE = 'share'
    NUMBER = 'number'
    DECIMAL = 'decimal'
    IPADDR = 'ip_addr'
    GUID = 'guid'
    BENIGN_KEYWORD = 'benign_keyword'
    MAL_KEYWORD = 'mal_keyword'
    SCRIPT = 'script'
    JAVASCRIPT = 'javascript'
    DLL = 'dll'
    RARE = 'rare'


RARE = '<rare>'


@dataclass(frozen=True)
class Token:
    kind: tokenkind
    text: str
    raw: str = field(default='', compare=False)

    @classmethod
    def special(cls, k, raw=''):
        assert k not in (tokenkind.WORD, tokenkind.EXT)
        return cls(k, '<{}>'.format(k.value), raw)

    @classmethod
    def ext(cls, name, raw=''):
        return cls(tokenkind.EXT, '<ext_{}>'.format(name.lower()), raw)

    @classmethod
    def word(cls, text, raw=''):
        return cls(tokenkind.WORD, text.lower(), raw)


@dataclass(frozen=True)
class RawCommand:
    binary_name: str
    command_line: str

    def __post_init__(self):
        if not self.binary_name or self.binary_name != self.binary_name.lower():
            raise ValueError('binary_name must be lowercase and non-empty: {!r}'.format(self.binary_name))


@dataclass(frozen=True)
class TokenizedCommand:
    binary: str
    tokens: tuple = ()

    @property
    def texts(self):
        """canonical token texts, the identity used by vocabularies"""
        return tuple(t.text for t in self.tokens)

    def __len__(self):
        return len(self.tokens)


def split_raw(command_line):
    """
    split on whitespace, keeping a double-quoted run (quotes included)
    inside a single raw token; an unterminated quote swallows the rest
    of the line
    """
    tokens = list()
    buf = list()
    quoted = False
    for ch in command_line:
        if ch == '"':
            quoted = not quoted
            buf.append(ch)
        elif ch in '\r\n':
            # a line break always closes the token, quoted or not
            quoted = False
            if buf:
                tokens.append(''.join(buf))
                buf = list()
        elif ch.isspace() and not quoted:
            if buf:
                tokens.append(''.join(buf))
                buf = list()
        else:
            buf.append(ch)
    if buf:
        tokens.append(''.join(buf))
    return tokens


def normalize(raw_token):
    """strip leading/trailing quotes, dashes, slashes and backslashes, then lowercase"""
    return raw_token.strip(STRIP_CHARS).lower()


def clean(raw_token):
    """normalize, keeping the leading ``\\\\`` of a UNC path"""
    text = normalize(raw_token)
    if text and raw_token.strip('"\'').startswith('\\\\'):
        text = '\\\\' + text
    return text


def program_name(raw_token):
    """
    basename of a program token without a trailing ``.exe``,
    e.g. ``"C:\\Windows\\System32\\reg.exe"`` -> ``reg``
    """
    m = PROGRAM_RE.match(raw_token.strip('"\''))
    if m is None:
        return None
    return m.group('name').lower()


PROGRAM_RE = re.compile(r'^(?:.*[\\/])?(?P<name>[^\\/]+?)(?:\.exe)?$', re.IGNORECASE)

URL_RE = re.compile(r'^https?://(?P<host>[^/\s?#]+)(?P<path>/[^?#]*)?(?:[?#].*)?$')
SHARE_RE = re.compile(r'^\\\\(?P<host>[^\\]+)(?P<path>(?:\\[^\\]*)*)$')
ADS_RE = re.compile(r'^(?:[a-z]:)?[^:]*[^:\\/.]\.[a-z0-9]{1,5}:[^:\\/]*[^:\\/.]\.[a-z0-9]{1,5}$')
GUID_RE = re.compile(r'^(?:\{[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}\}'
                     r'|[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12})$')
IP_RE = re.compile(r'^(?:(?:25[0-5]|2[0-4]\d|1\d\d|[1-9]?\d)\.){3}(?:25[0-5]|2[0-4]\d|1\d\d|[1-9]?\d)$')
DECIMAL_RE = re.compile(r'^[+-]?\d+\.\d+$')
NUMBER_RE = re.compile(r'^[+-]?\d+$')
FILE_RE = re.compile(r'^(?P<name>.*[^\\/.:])\.(?P<ext>[a-z0-9]{1,5})$')
EXT_RE = re.compile(r'[^\\/.]\.(?P<ext>[a-z0-9]{1,5})$')


def load_keywords(binary, keyword_dir=None):
    """
    read ``<keyword_dir>/<binary>.toml``, returning (benign, malicious)
    frozensets; an absent file means both lists are empty
    """
    path = os.path.join(keyword_dir or KEYWORD_DIR, '{}.toml'.format(binary))
    if not os.path.isfile(path):
        return frozenset(), frozenset()
    with open(path, 'rb') as f:
        conf = tomllib.load(f)
    lists = list()
    for key in ('benign', 'malicious'):
        words = conf.get(key, [])
        if not isinstance(words, list) or not all(isinstance(w, str) for w in words):
            raise ValueError('{}: {!r} must be a list of strings'.format(path, key))
        lists.append(frozenset(normalize(w) for w in words if normalize(w)))
    logger.debug('loaded keywords for %s: %d benign, %d malicious', binary, len(lists[0]), len(lists[1]))
    return lists[0], lists[1]


@icy
class lexer(object):

    def __init__(self, binary, keyword_dir=None):
        """
        Parameters
        ----------

        binary : str
            Lowercase binary name this lexer serves.

        keyword_dir : str
            Directory holding ``<binary>.toml`` keyword lists,
            the bundled ``keywords`` directory when None.
        """
        self.binary = binary
        self.benign_keywords, self.mal_keywords = load_keywords(binary, keyword_dir)
        self.patterns = self.initpatterns()

    @property
    def binary(self):
        return self._binary

    @property
    def benign_keywords(self):
        return self._benign_keywords

    @property
    def mal_keywords(self):
        return self._mal_keywords

    @property
    def patterns(self):
        return self._patterns

    @binary.setter
    def binary(self, binary):
        assert isinstance(binary, str)
        if not binary or binary != binary.lower():
            raise ValueError('binary name must be lowercase and non-empty: {!r}'.format(binary))
        self._binary = binary

    @benign_keywords.setter
    def benign_keywords(self, benign_keywords):
        assert isinstance(benign_keywords, frozenset)
        self._benign_keywords = benign_keywords

    @mal_keywords.setter
    def mal_keywords(self, mal_keywords):
        assert isinstance(mal_keywords, frozenset)
        self._mal_keywords = mal_keywords

    @patterns.setter
    def patterns(self, patterns):
        assert isinstance(patterns, tuple)
        self._patterns = patterns

    def initpatterns(self):
        """
        ordered pattern cascade, most specific first;
        subclasses prepend their binary-specific matchers
        """
        return self.specific_patterns() + self.common_patterns()

    def specific_patterns(self):
        return tuple()

    def common_patterns(self):
        return (self.match_url, self.match_share, self.match_ads, self.match_guid,
                self.match_ip, self.match_decimal, self.match_number, self.match_file,
                self.match_keyword)

    def pattern_names(self):
        return [p.__name__[len('match_'):] for p in self._patterns]

    def apply_patterns(self, token):
        """
        run a normalized token through the cascade,
        first match wins, no match gives a single word token
        """
        assert token
        for pattern in self._patterns:
            rslt = pattern(token)
            if rslt is not None:
                return rslt
        return [Token.word(token, token)]

    def apply_common(self, token):
        """cascade without the binary-specific matchers"""
        for pattern in self.common_patterns():
            rslt = pattern(token)
            if rslt is not None:
                return rslt
        return [Token.word(token, token)]

    def tokenize(self, cmd):
        """
        split -> normalize -> patterns, dropping empty tokens
        and the leading program token
        """
        assert isinstance(cmd, RawCommand)
        raws = split_raw(cmd.command_line)
        if raws and program_name(raws[0]) == self._binary:
            raws = raws[1:]
        tokens = list()
        for raw in raws:
            text = clean(raw)
            if not text:
                continue
            tokens.extend(self.apply_patterns(text))
        logger.debug('%s: %d raw -> %d tokens', self._binary, len(raws), len(tokens))
        return TokenizedCommand(self._binary, tuple(tokens))

    # common matchers

    def match_url(self, token):
        m = URL_RE.match(token)
        if m is None:
            return None
        rslt = [Token.special(tokenkind.URL, token)]
        path = m.group('path')
        if path:
            e = EXT_RE.search(path)
            if e is not None:
                rslt.append(Token.ext(e.group('ext'), token))
        return rslt

    def match_share(self, token):
        m = SHARE_RE.match(token)
        if m is None:
            return None
        rslt = [Token.special(tokenkind.SHARE, token)]
        e = EXT_RE.search(m.group('path'))
        if e is not None:
            rslt.append(Token.ext(e.group('ext'), token))
        return rslt

    def match_ads(self, token):
        if ADS_RE.match(token) is None:
            return None
        return [Token.special(tokenkind.ADS, token)]

    def match_guid(self, token):
        if GUID_RE.match(token) is None:
            return None
        return [Token.special(tokenkind.GUID, token)]

    def match_ip(self, token):
        if IP_RE.match(token) is None:
            return None
        return [Token.special(tokenkind.IPADDR, token)]

    def match_decimal(self, token):
        if DECIMAL_RE.match(token) is None:
            return None
        return [Token.special(tokenkind.DECIMAL, token)]

    def match_number(self, token):
        if NUMBER_RE.match(token) is None:
            return None
        return [Token.special(tokenkind.NUMBER, token)]

    def match_file(self, token):
        m = FILE_RE.match(token)
        if m is None:
            return None
        return [Token.special(tokenkind.FILE, token), Token.ext(m.group('ext'), token)]

    def match_keyword(self, token):
        if token in self._mal_keywords:
            return [Token.special(tokenkind.MAL_KEYWORD, token)]
        if token in self._benign_keywords:
            return [Token.special(tokenkind.BENIGN_KEYWORD, token)]
        return None
