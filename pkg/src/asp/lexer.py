"""Tokenizer for contract, proof-sketch, and script sources."""
from __future__ import annotations

from dataclasses import dataclass

from .diagnostics import LexError, Pos

# Longest match first.
PUNCT = [
    "==>", "??", "!!", "->", ":=", "==", "!=", "<=", ">=", "&&", "||",
    "(", ")", "{", "}", "[", "]", ",", ";", ":", ".", "|", "@",
    "=", "<", ">", "+", "-", "*", "/", "%", "!",
]


@dataclass(frozen=True)
class Token:
    kind: str  # "ident", "number", "eof", or the punctuation lexeme
    text: str
    pos: Pos

    def __repr__(self):
        return f"<{self.kind} {self.text!r} @{self.pos}>"


def tokenize(source: str) -> list[Token]:
    """Split source into tokens, stripping // and /* */ comments."""
    toks: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(source)
    while i < n:
        ch = source[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if source.startswith("//", i):
            while i < n and source[i] != "\n":
                i += 1
            continue
        if source.startswith("/*", i):
            end = source.find("*/", i + 2)
            if end < 0:
                raise LexError("unterminated block comment", Pos(line, col))
            for c in source[i:end + 2]:
                if c == "\n":
                    line += 1
                    col = 1
                else:
                    col += 1
            i = end + 2
            continue
        if ch.isalpha() or ch == "_":
            start = i
            while i < n and (source[i].isalnum() or source[i] == "_"):
                i += 1
            toks.append(Token("ident", source[start:i], Pos(line, col)))
            col += i - start
            continue
        if ch.isdigit():
            start = i
            while i < n and source[i].isdigit():
                i += 1
            toks.append(Token("number", source[start:i], Pos(line, col)))
            col += i - start
            continue
        for p in PUNCT:
            if source.startswith(p, i):
                toks.append(Token(p, p, Pos(line, col)))
                i += len(p)
                col += len(p)
                break
        else:
            raise LexError(f"illegal character {ch!r}", Pos(line, col))
    toks.append(Token("eof", "", Pos(line, col)))
    return toks
