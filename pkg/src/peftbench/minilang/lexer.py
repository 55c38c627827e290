"""Longest-match lexer for the mini-language.

Comments run from '#' to end of line. Reserved words that denote control
structure lex as kind "keyword"; the reserved literals true/false lex as
kind "bool". Positions are 1-based (line, col).
"""

from __future__ import annotations

from dataclasses import dataclass

KEYWORDS = frozenset({"fn", "let", "if", "else", "while", "return"})
BOOL_WORDS = frozenset({"true", "false"})

# Longest operators first so '==' wins over '='.
_OPERATORS = ["==", "!=", "<=", ">=", "&&", "||", "<", ">", "+", "-", "*", "/", "%", "!", "="]
_PUNCTUATION = "(){},"


class LexError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} at line {line}, col {col}")
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Token:
    kind: str  # keyword | identifier | int | float | string | bool | operator | punctuation
    lexeme: str  # raw source text (strings keep their quotes)
    line: int
    col: int
    value: str | None = None  # decoded text, string tokens only


_ESCAPES = {"n": "\n", "t": "\t", '"': '"', "\\": "\\"}


def tokenize(source: str) -> list[Token]:
    """Tokenize strictly; illegal characters raise LexError."""
    return _tokenize(source, lenient=False)


def tokenize_lenient(source: str) -> list[Token]:
    """Tokenize for metrics: illegal characters become kind "error" tokens
    instead of failing, so any text yields a token stream."""
    return _tokenize(source, lenient=True)


def _tokenize(source: str, lenient: bool) -> list[Token]:
    tokens: list[Token] = []
    i = 0
    line, col = 1, 1
    n = len(source)

    def advance(steps: int = 1):
        nonlocal i, line, col
        for _ in range(steps):
            if i < n and source[i] == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1

    while i < n:
        c = source[i]
        if c in " \t\r\n":
            advance()
            continue
        if c == "#":
            while i < n and source[i] != "\n":
                advance()
            continue
        tok_line, tok_col = line, col
        if c.isalpha() or c == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            word = source[i:j]
            if word in KEYWORDS:
                kind = "keyword"
            elif word in BOOL_WORDS:
                kind = "bool"
            else:
                kind = "identifier"
            tokens.append(Token(kind, word, tok_line, tok_col))
            advance(j - i)
            continue
        if c.isdigit():
            j = i
            while j < n and source[j].isdigit():
                j += 1
            is_float = False
            if j < n and source[j] == "." and j + 1 < n and source[j + 1].isdigit():
                is_float = True
                j += 1
                while j < n and source[j].isdigit():
                    j += 1
            if j < n and source[j] in "eE":
                # exponent only counts if a well-formed suffix follows
                p = j + 1
                if p < n and source[p] in "+-":
                    p += 1
                if p < n and source[p].isdigit():
                    is_float = True
                    while p < n and source[p].isdigit():
                        p += 1
                    j = p
            lexeme = source[i:j]
            tokens.append(Token("float" if is_float else "int", lexeme, tok_line, tok_col))
            advance(j - i)
            continue
        if c == '"':
            start = i
            advance()
            chars: list[str] = []
            closed = False
            while i < n:
                ch = source[i]
                if ch == '"':
                    advance()
                    closed = True
                    break
                if ch == "\\":
                    advance()
                    if i >= n:
                        break
                    esc = source[i]
                    chars.append(_ESCAPES.get(esc, esc))
                    advance()
                    continue
                if ch == "\n":
                    break
                chars.append(ch)
                advance()
            raw = source[start:i]
            if not closed:
                if lenient:
                    tokens.append(Token("error", raw, tok_line, tok_col))
                    continue
                raise LexError("unterminated string literal", tok_line, tok_col)
            tokens.append(Token("string", raw, tok_line, tok_col, value="".join(chars)))
            continue
        matched = False
        for op in _OPERATORS:
            if source.startswith(op, i):
                tokens.append(Token("operator", op, tok_line, tok_col))
                advance(len(op))
                matched = True
                break
        if matched:
            continue
        if c in _PUNCTUATION:
            tokens.append(Token("punctuation", c, tok_line, tok_col))
            advance()
            continue
        if lenient:
            tokens.append(Token("error", c, tok_line, tok_col))
            advance()
            continue
        raise LexError(f"illegal character {c!r}", line, col)
    return tokens


def lexemes(source: str) -> list[str]:
    """Lenient token lexemes, the code-token stream used by the metrics."""
    return [t.lexeme for t in tokenize_lenient(source)]
