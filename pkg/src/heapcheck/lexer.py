"""Tokenizer for source files and for assertion text inside annotations."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import LexError, Span

RESERVED = {
    "class", "new", "delete", "if", "else", "while", "this", "pred",
    "null", "nil", "exists", "emp", "true", "false", "object",
}

# longest first so that maximal munch works by scan order
_MULTI = ("==", "!=", "<=", ">=", "&&", "||", "->", ":=")
_SINGLE = "{}()[];,.=<>+-*:@"


@dataclass(frozen=True)
class Token:
    kind: str  # "ident", "int", "annot", a reserved word, or a punctuation literal
    text: str
    span: Span
    value: int = 0

    def __repr__(self) -> str:
        return f"Token({self.kind!r}, {self.text!r})"


def tokenize(text: str, base_line: int = 1, base_col: int = 1) -> list[Token]:
    """Lex source text; ``@ ... @`` segments become single raw 'annot' tokens.

    base_line/base_col shift reported positions, so assertion text extracted
    from an annotation can be re-lexed with its original coordinates.
    """
    toks: list[Token] = []
    i = 0
    line, col = base_line, base_col
    n = len(text)

    def here(width: int = 1) -> Span:
        return Span(line, col, line, col + width)

    def advance(k: int) -> None:
        nonlocal i, line, col
        for _ in range(k):
            if i < n and text[i] == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1

    while i < n:
        ch = text[i]
        if ch in " \t\r\n":
            advance(1)
            continue
        if ch == "/" and text[i : i + 2] == "//":
            while i < n and text[i] != "\n":
                advance(1)
            continue
        if ch == "/" and text[i : i + 2] == "/*":
            start = here()
            advance(2)
            while i < n and text[i : i + 2] != "*/":
                advance(1)
            if i >= n:
                raise LexError("unterminated comment", start)
            advance(2)
            continue
        if ch == "@":
            start_line, start_col = line, col
            advance(1)
            seg_line, seg_col = line, col
            j = text.find("@", i)
            if j < 0:
                raise LexError("unterminated '@' annotation", Span(start_line, start_col, line, col))
            raw = text[i:j]
            advance(len(raw) + 1)
            toks.append(
                Token("annot", raw, Span(seg_line, seg_col, line, col), 0)
            )
            continue
        if ch == "'":
            # quoted atom (term files): '...' with \' and \\ escapes
            start = here()
            j = i + 1
            buf = []
            while j < n and text[j] != "'":
                if text[j] == "\\" and j + 1 < n:
                    buf.append(text[j + 1])
                    j += 2
                else:
                    buf.append(text[j])
                    j += 1
            if j >= n:
                raise LexError("unterminated quoted atom", start)
            advance(j + 1 - i)
            toks.append(Token("atomq", "".join(buf), start))
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            lit = text[i:j]
            toks.append(Token("int", lit, here(len(lit)), int(lit)))
            advance(len(lit))
            continue
        if ch.isalpha() or ch in "_$":
            # '$' starts internally generated symbols (chain links, skolems);
            # accepting it keeps pretty-printed output re-parseable
            j = i
            while j < n and (text[j].isalnum() or text[j] in "_$?"):
                j += 1
            word = text[i:j]
            kind = word if word in RESERVED else "ident"
            toks.append(Token(kind, word, here(len(word))))
            advance(len(word))
            continue
        two = text[i : i + 2]
        if two in _MULTI:
            toks.append(Token(two, two, here(2)))
            advance(2)
            continue
        if ch in _SINGLE:
            toks.append(Token(ch, ch, here(1)))
            advance(1)
            continue
        raise LexError(f"illegal character {ch!r}", here())
    return toks
