"""
lexers for binaries whose argument syntax needs extra patterns
"""

import re

from lolguard.lexers.lexer import lexer, Token, tokenkind, clean, normalize


JAVASCRIPT_RE = re.compile(r'^javascript:')
DLL_RE = re.compile(r'^(?P<dll>[^,]+?),(?P<entry>[^,]+?),?$')
SCRIPT_RE = re.compile(r'^i:(?P<payload>.+)$')


class rundll32lexer(lexer):
    """javascript protocol handlers and ``dll,entrypoint`` pairs"""

    def specific_patterns(self):
        return (self.match_javascript, self.match_dll)

    def match_javascript(self, token):
        if JAVASCRIPT_RE.match(token) is None:
            return None
        return [Token.special(tokenkind.JAVASCRIPT, token)]

    def match_dll(self, token):
        m = DLL_RE.match(token)
        if m is None:
            return None
        dll = normalize(m.group('dll'))
        entry = normalize(m.group('entry'))
        if not dll or not entry:
            return None
        return [Token.special(tokenkind.DLL, token), Token.word(dll, token), Token.word(entry, token)]


class regsvr32lexer(lexer):
    """``/i:<script>`` install arguments"""

    def specific_patterns(self):
        return (self.match_script,)

    def match_script(self, token):
        m = SCRIPT_RE.match(token)
        if m is None:
            return None
        # the payload is lexed with the common cascade, so a file or url
        # keeps its own tokens behind <script>
        payload = clean(m.group('payload'))
        if not payload:
            return [Token.special(tokenkind.SCRIPT, token)]
        return [Token.special(tokenkind.SCRIPT, token)] + self.apply_common(payload)
