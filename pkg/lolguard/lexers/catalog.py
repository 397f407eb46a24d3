"""
binary name -> lexer routing
"""

import logging
import threading

from lolguard.lexers.lexer import lexer, RawCommand, program_name, split_raw
from lolguard.lexers.binary_lexers import rundll32lexer, regsvr32lexer
from lolguard.tools.errors import UnsupportedBinary

logger = logging.getLogger(__name__)

SUPPORTED_BINARIES = ('bitsadmin', 'certutil', 'cmstp', 'csc', 'cscript', 'mmc', 'msiexec', 'msxsl',
                      'reg', 'regsvcs', 'regsvr32', 'rundll32', 'schtasks', 'sqlps', 'wmic', 'wscript')

# name: (lexer class, keyword directory or None for the bundled one)
_catalog = {name: (lexer, None) for name in SUPPORTED_BINARIES}
_catalog['rundll32'] = (rundll32lexer, None)
_catalog['regsvr32'] = (regsvr32lexer, None)
_instances = dict()
_lock = threading.Lock()


def supported_binaries():
    return sorted(_catalog)


def is_supported(name):
    return name in _catalog


def register_binary(name, lexer_cls=lexer, keyword_dir=None):
    """
    add (or replace) a binary in the catalog,
    after which it can be tokenized, trained and routed like the bundled ones
    """
    assert isinstance(name, str)
    assert issubclass(lexer_cls, lexer)
    name = name.lower()
    if not name or name != name.strip() or any(c in name for c in '\\/ '):
        raise ValueError('invalid binary name: {!r}'.format(name))
    with _lock:
        _catalog[name] = (lexer_cls, keyword_dir)
        _instances.pop(name, None)
    logger.info('registered binary %s with %s', name, lexer_cls.__name__)


def unregister_binary(name):
    with _lock:
        _catalog.pop(name, None)
        _instances.pop(name, None)


def lexer_for(binary_name):
    """shared lexer instance for a binary, UnsupportedBinary for unknown names"""
    with _lock:
        if binary_name not in _catalog:
            raise UnsupportedBinary(binary_name)
        lex = _instances.get(binary_name)
        if lex is None:
            cls, keyword_dir = _catalog[binary_name]
            lex = cls(binary_name, keyword_dir)
            _instances[binary_name] = lex
        return lex


def apply_patterns(normalized_token, binary):
    return lexer_for(binary).apply_patterns(normalized_token)


def tokenize(cmd):
    if not isinstance(cmd, RawCommand):
        raise TypeError('expected RawCommand, got {}'.format(type(cmd).__name__))
    return lexer_for(cmd.binary_name).tokenize(cmd)


def extract_binary(command_line):
    """
    binary name from the first raw token, accepting bare names,
    ``.exe`` suffixes and full paths, case-insensitively
    """
    raws = split_raw(command_line)
    if not raws:
        raise UnsupportedBinary(command_line)
    name = program_name(raws[0])
    if name is None or not is_supported(name):
        raise UnsupportedBinary(name if name else raws[0])
    return name
