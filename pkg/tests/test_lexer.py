import pytest

from heapcheck.errors import LexError
from heapcheck.lexer import tokenize


def kinds(text):
    return [t.kind for t in tokenize(text)]


def test_new_call_tokens():
    assert kinds("new(x)") == ["new", "(", "ident", ")"]


def test_empty_input_is_empty_stream():
    assert tokenize("") == []


def test_annotation_captured_raw():
    toks = tokenize("int f() @ a<10 @ {}")
    annots = [t for t in toks if t.kind == "annot"]
    assert len(annots) == 1
    assert annots[0].text.strip() == "a<10"


def test_annotation_span_points_into_input():
    toks = tokenize("@ a<10 @")
    annot = toks[0]
    assert annot.span.line == 1
    assert annot.span.col > 1


def test_unterminated_annotation():
    with pytest.raises(LexError) as e:
        tokenize("int f() @ a<10")
    assert e.value.span.line == 1


def test_illegal_character():
    with pytest.raises(LexError) as e:
        tokenize("a = #;")
    assert e.value.span.col == 5


def test_multi_char_operators():
    assert kinds("a == b != c <= d >= e && f || g -> h") == [
        "ident", "==", "ident", "!=", "ident", "<=", "ident", ">=",
        "ident", "&&", "ident", "||", "ident", "->", "ident",
    ]


def test_comments_skipped():
    assert kinds("a // comment\n b /* c */ d") == ["ident", "ident", "ident"]


def test_line_and_column_tracking():
    toks = tokenize("a\n  bb")
    assert (toks[0].span.line, toks[0].span.col) == (1, 1)
    assert (toks[1].span.line, toks[1].span.col) == (2, 3)


def test_reserved_words_have_own_kinds():
    assert kinds("class while null nil emp exists") == [
        "class", "while", "null", "nil", "emp", "exists",
    ]


def test_quoted_atom_missing_is_error():
    # single quotes only appear in term files; the lexer must not accept a
    # dangling quote silently
    with pytest.raises(LexError):
        tokenize("a'")
