"""Shared tokenizer for the source schema (.odl) and warehouse (.edw) texts.

Identifiers admit any Unicode letter (fixtures use accented French names)
and are matched byte-for-byte, never normalized. Comments run from //
to end of line. All keywords are contextual: the parsers match them by
value, so property names are never reserved.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import ParseError

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>//[^\n]*)
  | (?P<nl>\n)
  | (?P<number>\d+(\.\d+)?)
  | (?P<ident>[^\W\d]\w*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<punct>::|:=|<=|>=|!=|[{}()<>,;:.=\-≠≤≥∋])
    """,
    re.VERBOSE,
)

# Unicode comparison operators normalize to their ASCII spelling.
_PUNCT_ALIASES = {"≠": "!=", "≤": "<=", "≥": ">="}


@dataclass(frozen=True)
class Token:
    kind: str  # ident | number | string | punct | eof
    value: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    line, col, pos = 1, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(line, col, f"a token (found {text[pos]!r})")
        kind = m.lastgroup
        value = m.group()
        if kind == "nl":
            line += 1
            col = 1
        elif kind in ("ws", "comment"):
            col += len(value)
        else:
            if kind == "string":
                value = value[1:-1].replace('\\"', '"').replace("\\\\", "\\")
            elif kind == "punct":
                value = _PUNCT_ALIASES.get(value, value)
            tokens.append(Token(kind, value, line, col))
            col += m.end() - m.start()
        pos = m.end()
    tokens.append(Token("eof", "", line, col))
    return tokens


class TokenStream:
    """Cursor over a token list with expect/accept helpers."""

    def __init__(self, tokens: list[Token]):
        self._tokens = tokens
        self._pos = 0

    def peek(self, ahead: int = 0) -> Token:
        return self._tokens[min(self._pos + ahead, len(self._tokens) - 1)]

    def next(self) -> Token:
        tok = self.peek()
        if tok.kind != "eof":
            self._pos += 1
        return tok

    def at(self, kind: str, value: str | None = None) -> bool:
        tok = self.peek()
        return tok.kind == kind and (value is None or tok.value == value)

    def accept(self, kind: str, value: str | None = None) -> Token | None:
        if self.at(kind, value):
            return self.next()
        return None

    def expect(self, kind: str, value: str | None = None) -> Token:
        tok = self.peek()
        if not self.at(kind, value):
            want = value if value is not None else kind
            found = tok.value or tok.kind
            raise ParseError(tok.line, tok.col, f"{want!r} (found {found!r})")
        return self.next()

    def error(self, expected: str) -> ParseError:
        tok = self.peek()
        return ParseError(tok.line, tok.col, expected)
