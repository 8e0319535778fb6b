import random
import re

import pytest

from conftest import data_text, rand_term

from heapcheck import termir as tir
from heapcheck.errors import TermShapeError, TermSyntaxError
from heapcheck.parser import parse_program
from heapcheck.astnodes import pretty_program

PAPER_TERM = (
    "function(f, int, [param(a,int), param(b,int)], "
    "[assert(le(a,10)), assign(id,2), assign(a,1), assign(b,6), "
    "assert(a->5 * b->c * c->object(myClass1,15))])"
)


def toks(text: str) -> list[str]:
    return re.findall(r"->|\|\||&&|[A-Za-z_][A-Za-z0-9_]*|\d+|[^\sA-Za-z0-9_]", text)


def test_lower_paper_function_token_for_token():
    program = parse_program(data_text("paper_fn.oc"))
    term = tir.lower_program(program)
    assert toks(tir.emit_text(term)) == toks(PAPER_TERM)


def test_expression_operator_becomes_functor():
    program = parse_program("int f() { j = i+7; }")
    term = tir.lower_program(program)
    assert "assign(j, add(i, 7))" in tir.emit_text(term)


def test_negative_offset_uses_minus():
    program = parse_program("int f() { v = [x - 3]; }")
    text = tir.emit_text(tir.lower_program(program))
    assert "mem(offset(x, minus(0, 3)))" in text


def test_emit_examples():
    assert tir.emit_text(tir.comp("add", tir.Atom("i"), tir.Int(7))) == "add(i, 7)"
    assert tir.emit_text(tir.Int(0)) == "0"
    assert tir.emit_text(tir.TList(())) == "[]"


def test_emit_quotes_non_lowercase_atoms():
    assert tir.emit_text(tir.Atom("MyClass")) == "'MyClass'"
    assert tir.emit_text(tir.Atom("it's")) == "'it\\'s'"
    assert tir.parse_term("'MyClass'", check=False) == tir.Atom("MyClass")


def test_parse_examples():
    assert tir.parse_term("new(x)") == tir.comp("new", tir.Atom("x"))
    ok = tir.parse_term("ite(lt(a,b), [assign(a,1)])")
    assert ok.functor == "ite" and len(ok.args) == 2
    with pytest.raises(TermShapeError):
        tir.parse_term("funcall(f, [1,2,3], extra)")


def test_shape_errors():
    for bad in [
        "ite(lt(a,b), [x], [y], [z])",
        "new(offset(x,1))",
        "assign(1, 2)",
        "while(lt(a,b), [ ], [ ])",
        "offset(x, minus(1, 2))",
    ]:
        with pytest.raises(TermShapeError):
            tir.parse_term(bad)


def test_syntax_errors():
    for bad in ["f(", "f(a,)", "", "f(a)) ", "[a,]"]:
        with pytest.raises(TermSyntaxError):
            tir.parse_term(bad)


def test_term_file_terminator():
    t = tir.comp("new", tir.Atom("x"))
    assert tir.emit_term_file(t) == "new(x).\n"
    assert tir.parse_term("new(x).") == t
    assert tir.parse_term("new(x).\n") == t


def test_roundtrip_property():
    rng = random.Random(23)
    for _ in range(500):
        t = rand_term(rng)
        text = tir.emit_text(t)
        assert tir.parse_term(text, check=False) == t, text


def test_relower_pretty_printed_ast_is_stable():
    for name in ("paper_fn.oc", "ex1.oc", "ex2.oc", "ex4.oc", "append_destructive.oc"):
        program = parse_program(data_text(name))
        direct = tir.lower_program(program)
        again = tir.lower_program(parse_program(pretty_program(program)))
        assert direct == again, name


def test_lowering_total_on_parse_valid_programs():
    from test_parser import _rand_program

    rng = random.Random(47)
    for _ in range(200):
        program = _rand_program(rng)
        term = tir.lower_program(program)  # must not raise LoweringError
        tir.check_shape(term)
        assert tir.parse_term(tir.emit_text(term)) == term


def test_formula_term_roundtrip():
    from heapcheck.parser import parse_assertion
    from heapcheck import formula as fm

    for text in (
        "a->5 * b->c * c->object(myClass1,15)",
        "x->a,b,c",
        "(s==e && emp) || exists t, v. s->object(node, v, t) * list(t, e)",
        "emp",
        "true",
        "x+1->(2*y)",
    ):
        f = parse_assertion(text)
        t = tir.formula_to_term(f)
        back = tir.term_to_formula(tir.parse_term(tir.emit_text(t)))
        assert fm.normalize(back) == fm.normalize(f), text


def test_comparison_functors_bijective():
    assert tir.CMP_TO_FUNCTOR["<"] == "le"  # kept verbatim from the worked example
    assert len(set(tir.CMP_TO_FUNCTOR.values())) == 6
    for op, functor in tir.CMP_TO_FUNCTOR.items():
        assert tir.FUNCTOR_TO_CMP[functor] == op


def test_method_call_lowered_with_receiver_first():
    program = parse_program("class C { int m(int v) {} } int f() { o.m(3); }")
    text = tir.emit_text(tir.lower_program(program))
    assert "funcall(m, [o, 3])" in text
    assert "param(this, 'C')" in text


def test_chained_assignment_lowering_order():
    program = parse_program("int f() { a = b = 6; }")
    text = tir.emit_text(tir.lower_program(program))
    assert text.index("assign(b, 6)") < text.index("assign(a, b)")


def test_program_wrapper_for_multiple_items():
    program = parse_program("int f() {} int g() {}")
    t = tir.lower_program(program)
    assert isinstance(t, tir.Compound) and t.functor == "program"
    assert [fn.args[0].name for fn in tir.term_functions(t)] == ["f", "g"]


def test_split_contracts():
    program = parse_program(data_text("paper_fn.oc"))
    fn = tir.term_functions(tir.lower_program(program))[0]
    pre, body, post = tir.split_contracts(fn)
    from heapcheck import formula as fm

    assert pre == fm.PureAtom("<", fm.Var("a"), fm.IntLit(10))
    assert len(body) == 3
    assert isinstance(post, fm.Star)
