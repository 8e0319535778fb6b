"""Logic-term intermediate representation.

Programs lower to functor/argument trees that serialize to a canonical text
form (``.plt`` files) and re-import through ``parse_term``.  Spatial formulas
embed with infix operators (``->``, ``*``, ``&&``, ``||``) so emitted terms
match the annotation surface syntax; everything else is functional notation.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from . import astnodes as ast
from . import formula as fm
from .errors import NO_SPAN, LoweringError, TermShapeError, TermSyntaxError
from .lexer import RESERVED, Token, tokenize

# --------------------------------------------------------------------------
# term trees
# --------------------------------------------------------------------------


class Term:
    __slots__ = ()


@dataclass(frozen=True)
class Atom(Term):
    name: str

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("empty atom name")


@dataclass(frozen=True)
class Int(Term):
    value: int


@dataclass(frozen=True)
class Compound(Term):
    functor: str
    args: tuple[Term, ...]

    def __post_init__(self) -> None:
        if not self.functor:
            raise ValueError("empty functor name")


@dataclass(frozen=True)
class TList(Term):
    items: tuple[Term, ...]


def comp(functor: str, *args: Term) -> Compound:
    return Compound(functor, tuple(args))


# comparison operator <-> functor table; '<' prints as 'le' (kept verbatim
# from the worked translation), so 'lt' is left denoting '<='
CMP_TO_FUNCTOR = {"<": "le", "<=": "lt", ">": "gt", ">=": "ge", "==": "eq", "!=": "ne"}
FUNCTOR_TO_CMP = {v: k for k, v in CMP_TO_FUNCTOR.items()}

_BARE_ATOM = re.compile(r"[a-z][A-Za-z0-9_]*\Z")

# --------------------------------------------------------------------------
# canonical emission
# --------------------------------------------------------------------------

_P_OR, _P_AND, _P_STAR, _P_PTO, _P_BASE = 1, 2, 3, 4, 5

_INFIX = {"or": ("||", _P_OR), "and": ("&&", _P_AND), "star": ("*", _P_STAR), "pto": ("->", _P_PTO)}


def emit_text(t: Term, level: int = 0) -> str:
    """Render a term in the canonical concrete syntax (deterministic)."""
    if isinstance(t, Atom):
        if _BARE_ATOM.match(t.name):
            return t.name
        escaped = t.name.replace("\\", "\\\\").replace("'", "\\'")
        return f"'{escaped}'"
    if isinstance(t, Int):
        return str(t.value)
    if isinstance(t, TList):
        return "[" + ", ".join(emit_text(x) for x in t.items) + "]"
    if isinstance(t, Compound):
        if t.functor in _INFIX and len(t.args) == 2:
            opsym, prec = _INFIX[t.functor]
            sep = opsym if t.functor == "pto" else f" {opsym} "
            # '->' does not associate, so a nested pto needs parens either side
            right_level = prec if t.functor == "pto" else prec - 1
            text = f"{emit_text(t.args[0], prec)}{sep}{emit_text(t.args[1], right_level)}"
            return f"({text})" if level >= prec else text
        if t.functor == "oa" and len(t.args) == 2:
            return f"oa({emit_text(t.args[0])}.{emit_text(t.args[1])})"
        if t.functor == ":" and len(t.args) == 2:
            return f"{emit_text(t.args[0])}: {emit_text(t.args[1])}"
        head = emit_text(Atom(t.functor)) if not _BARE_ATOM.match(t.functor) else t.functor
        return f"{head}(" + ", ".join(emit_text(a) for a in t.args) + ")"
    raise TypeError(f"unknown term {t!r}")


def emit_term_file(t: Term) -> str:
    """Interchange format: one top-level term, '.'-terminated, newline at EOF."""
    return emit_text(t) + ".\n"


# --------------------------------------------------------------------------
# term text parsing
# --------------------------------------------------------------------------


class _TermParser:
    def __init__(self, toks: list[Token]):
        self.toks = toks
        self.pos = 0

    def peek(self, ahead: int = 0) -> Token:
        i = self.pos + ahead
        if i < len(self.toks):
            return self.toks[i]
        return Token("eof", "<eof>", self.toks[-1].span if self.toks else NO_SPAN)

    def next(self) -> Token:
        t = self.peek()
        self.pos += 1
        return t

    def expect(self, kind: str) -> Token:
        t = self.peek()
        if t.kind != kind:
            raise TermSyntaxError(f"expected {kind!r}, found {t.text!r}", t.span)
        self.pos += 1
        return t

    def parse(self) -> Term:
        t = self._infix(_P_OR)
        if self.peek().kind == ".":
            self.next()
        trailing = self.peek()
        if trailing.kind != "eof":
            raise TermSyntaxError(f"unexpected {trailing.text!r} after term", trailing.span)
        return t

    def _infix(self, prec: int) -> Term:
        if prec > _P_PTO:
            return self._base()
        opsym, functor = {
            _P_OR: ("||", "or"),
            _P_AND: ("&&", "and"),
            _P_STAR: ("*", "star"),
            _P_PTO: ("->", "pto"),
        }[prec]
        parts = [self._infix(prec + 1)]
        while self.peek().kind == opsym:
            self.next()
            parts.append(self._infix(prec + 1))
        if prec == _P_PTO and len(parts) > 2:
            raise TermSyntaxError("'->' does not chain", self.peek().span)
        out = parts[-1]
        for p in reversed(parts[:-1]):
            out = comp(functor, p, out)
        return out

    def _name_token(self) -> Optional[str]:
        t = self.peek()
        if t.kind == "ident" or t.kind in RESERVED:
            return t.text
        if t.kind == "atomq":
            return t.text
        return None

    def _base(self) -> Term:
        t = self.peek()
        if t.kind == "int":
            self.next()
            return Int(t.value)
        if t.kind == "-" and self.peek(1).kind == "int":
            self.next()
            return Int(-self.next().value)
        if t.kind == "(":
            self.next()
            inner = self._infix(_P_OR)
            self.expect(")")
            return inner
        if t.kind == "[":
            self.next()
            items: list[Term] = []
            if self.peek().kind != "]":
                items.append(self._infix(_P_OR))
                while self.peek().kind == ",":
                    self.next()
                    items.append(self._infix(_P_OR))
            self.expect("]")
            return TList(tuple(items))
        name = self._name_token()
        if name is None:
            raise TermSyntaxError(f"expected term, found {t.text!r}", t.span)
        self.next()
        if self.peek().kind != "(":
            return Atom(name)
        self.next()
        if name == "oa":
            left = self._atom_arg()
            self.expect(".")
            right = self._atom_arg()
            self.expect(")")
            return comp("oa", left, right)
        args: list[Term] = []
        if self.peek().kind != ")":
            args.append(self._arg())
            while self.peek().kind == ",":
                self.next()
                args.append(self._arg())
        self.expect(")")
        return Compound(name, tuple(args))

    def _atom_arg(self) -> Atom:
        t = self.peek()
        name = self._name_token()
        if name is None:
            raise TermSyntaxError(f"expected name, found {t.text!r}", t.span)
        self.next()
        return Atom(name)

    def _arg(self) -> Term:
        # record components may be written "name: value"
        t = self.peek()
        if (t.kind == "ident" or t.kind in RESERVED) and self.peek(1).kind == ":":
            name = self.next().text
            self.next()
            return comp(":", Atom(name), self._infix(_P_OR))
        return self._infix(_P_OR)


def parse_term(text: str, check: bool = True) -> Term:
    """Parse canonical (whitespace-tolerant) term text.

    With check=True (the default and the import-path behavior) the term is
    also validated against the statement/expression shape tables.
    """
    try:
        toks = tokenize(text)
    except Exception as e:  # LexError carries position info already
        raise TermSyntaxError(str(e)) from None
    if not toks:
        raise TermSyntaxError("empty term text")
    term = _TermParser(toks).parse()
    if check:
        check_shape(term)
    return term


# --------------------------------------------------------------------------
# shape validation (the internal checks applied to imported terms)
# --------------------------------------------------------------------------

_CMP_FUNCTORS = tuple(FUNCTOR_TO_CMP)


_STMT_FUNCTORS = ("assign", "new", "delete", "funcall", "ite", "while", "assert")


def check_shape(t: Term) -> None:
    """Validate a top-level term: program, class, function, statement, or formula."""
    if isinstance(t, Compound) and t.functor == "program" and len(t.args) == 1:
        items = _want_list(t, 0, "program items")
        for item in items.items:
            _check_program_item(item)
        return
    if isinstance(t, Compound) and (
        t.functor in ("class", "function") or (t.functor == "pred" and len(t.args) == 3)
    ):
        _check_program_item(t)
        return
    if isinstance(t, TList) or (isinstance(t, Compound) and t.functor in _STMT_FUNCTORS):
        _check_stmt(t)
        return
    _check_formula(t)


def _fail(msg: str) -> None:
    raise TermShapeError(msg)


def _want_list(t: Compound, i: int, what: str) -> TList:
    if not isinstance(t.args[i], TList):
        _fail(f"{t.functor}: {what} must be a list")
    return t.args[i]  # type: ignore[return-value]


def _check_program_item(t: Term) -> None:
    if not isinstance(t, Compound):
        _fail("program items must be class/function/pred terms")
        return
    if t.functor == "class":
        if len(t.args) != 3 or not isinstance(t.args[0], Atom):
            _fail("class takes (name, [fields], [methods])")
        for f in _want_list(t, 1, "fields").items:
            if not (
                isinstance(f, Compound)
                and f.functor == "field"
                and len(f.args) == 2
                and all(isinstance(a, Atom) for a in f.args)
            ):
                _fail("class field entries are field(name, type)")
        for m in _want_list(t, 2, "methods").items:
            _check_program_item(m)
        return
    if t.functor == "function":
        if len(t.args) != 4 or not isinstance(t.args[0], Atom) or not isinstance(t.args[1], Atom):
            _fail("function takes (name, type, [params], [stmts])")
        for p in _want_list(t, 2, "params").items:
            if not (
                isinstance(p, Compound)
                and p.functor == "param"
                and len(p.args) == 2
                and all(isinstance(a, Atom) for a in p.args)
            ):
                _fail("function params are param(name, type)")
        for s in _want_list(t, 3, "body").items:
            _check_stmt(s)
        return
    if t.functor == "pred":
        if len(t.args) != 3 or not isinstance(t.args[0], Atom):
            _fail("pred takes (name, [params], body)")
        for p in _want_list(t, 1, "params").items:
            if not isinstance(p, Atom):
                _fail("pred params are atoms")
        _check_formula(t.args[2])
        return
    _fail(f"unknown program item '{t.functor}/{len(t.args)}'")


def _check_block(t: Term, what: str) -> None:
    if not isinstance(t, TList):
        _fail(f"{what} must be a statement list")
        return
    for s in t.items:
        _check_stmt(s)


def _check_stmt(t: Term) -> None:
    if isinstance(t, TList):  # bare block
        _check_block(t, "block")
        return
    if not isinstance(t, Compound):
        _fail(f"statement expected, found {emit_text(t)}")
        return
    f, n = t.functor, len(t.args)
    if f == "assign" and n == 2:
        _check_lhs(t.args[0])
        _check_expr(t.args[1])
        return
    if f in ("new", "delete") and n == 1:
        _check_loc1(t.args[0])
        return
    if f == "funcall" and n in (1, 2):
        if not isinstance(t.args[0], Atom):
            _fail("funcall name must be an atom")
        if n == 2:
            for a in _want_list(t, 1, "actuals").items:
                _check_expr(a)
        return
    if f == "ite" and n in (2, 3):
        _check_cond(t.args[0])
        _check_block(t.args[1], "ite then-block")
        if n == 3:
            _check_block(t.args[2], "ite else-block")
        return
    if f == "while" and n == 3:
        _check_cond(t.args[0])
        inv = t.args[1]
        if not (isinstance(inv, Compound) and inv.functor == "assert" and len(inv.args) == 1):
            _fail("while invariant must be assert(formula)")
        _check_formula(inv.args[0])  # type: ignore[union-attr]
        _check_block(t.args[2], "while body")
        return
    if f == "assert" and n == 1:
        _check_formula(t.args[0])
        return
    _fail(f"unknown statement '{f}/{n}'")


def _check_lhs(t: Term) -> None:
    if isinstance(t, Atom):
        return
    if isinstance(t, Compound) and t.functor == "oa":
        _check_loc1(t)
        return
    if isinstance(t, Compound) and t.functor == "mem" and len(t.args) == 1:
        _check_loc(t.args[0])
        return
    _fail(f"assignment target must be a variable, oa(o.f), or mem(...): {emit_text(t)}")


def _check_loc1(t: Term) -> None:
    if isinstance(t, Atom):
        return
    if (
        isinstance(t, Compound)
        and t.functor == "oa"
        and len(t.args) == 2
        and all(isinstance(a, Atom) for a in t.args)
    ):
        return
    _fail(f"location must be name or oa(o.f): {emit_text(t)}")


def _check_loc(t: Term) -> None:
    if not (isinstance(t, Compound) and t.functor == "offset" and len(t.args) in (1, 2)):
        _fail(f"heap location must be offset(loc1[, displacement]): {emit_text(t)}")
        return
    _check_loc1(t.args[0])
    if len(t.args) == 2:
        d = t.args[1]
        if isinstance(d, Int) and d.value >= 0:
            return
        if (
            isinstance(d, Compound)
            and d.functor == "minus"
            and len(d.args) == 2
            and d.args[0] == Int(0)
            and isinstance(d.args[1], Int)
        ):
            return
        _fail("offset displacement must be int or minus(0, int)")


def _check_expr(t: Term) -> None:
    if isinstance(t, (Int, Atom)):
        return
    if isinstance(t, Compound):
        f, n = t.functor, len(t.args)
        if f == "oa" and n == 2:
            _check_loc1(t)
            return
        if f in ("add", "sub", "mul") and n == 2:
            _check_expr(t.args[0])
            _check_expr(t.args[1])
            return
        if f == "mem" and n == 1:
            _check_loc(t.args[0])
            return
        if f == "funcall" and n in (1, 2):
            _check_stmt(t)  # same shape rule as statement position
            return
    _fail(f"expression expected, found {emit_text(t)}")


def _check_cond(t: Term) -> None:
    if isinstance(t, Compound):
        f, n = t.functor, len(t.args)
        if f in ("and", "or") and n == 2:
            _check_cond(t.args[0])
            _check_cond(t.args[1])
            return
        if f in _CMP_FUNCTORS and n == 2:
            _check_expr(t.args[0])
            _check_expr(t.args[1])
            return
    _fail(f"condition expected, found {emit_text(t)}")


def _check_formula(t: Term) -> None:
    if isinstance(t, Atom) and t.name in ("emp", "true", "false"):
        return
    if isinstance(t, Compound):
        f, n = t.functor, len(t.args)
        if f == "pto" and n == 2:
            _check_fexpr(t.args[0])
            _check_fexpr(t.args[1])
            return
        if f in ("star", "and", "or") and n == 2:
            _check_formula(t.args[0])
            _check_formula(t.args[1])
            return
        if f == "exists" and n == 2:
            if not isinstance(t.args[0], Atom):
                _fail("exists binder must be an atom")
            _check_formula(t.args[1])
            return
        if f == "pred" and n == 2:
            if not isinstance(t.args[0], Atom):
                _fail("pred name must be an atom")
            for a in _want_list(t, 1, "pred args").items:
                _check_fexpr(a)
            return
        if f in _CMP_FUNCTORS and n == 2:
            _check_fexpr(t.args[0])
            _check_fexpr(t.args[1])
            return
    _fail(f"formula expected, found {emit_text(t)}")


def _check_fexpr(t: Term) -> None:
    if isinstance(t, (Int, Atom)):
        return
    if isinstance(t, Compound):
        f, n = t.functor, len(t.args)
        if f == "oa" and n == 2:
            return
        if f in ("add", "sub", "mul") and n == 2:
            _check_fexpr(t.args[0])
            _check_fexpr(t.args[1])
            return
        if f == "offset" and n in (1, 2):
            _check_loc(t)
            return
        if f == "object" and n >= 1:
            if not isinstance(t.args[0], Atom):
                _fail("object tag must be an atom")
            for a in t.args[1:]:
                if isinstance(a, Compound) and a.functor == ":" and len(a.args) == 2:
                    _check_fexpr(a.args[1])
                else:
                    _check_fexpr(a)
            return
    _fail(f"assertion expression expected, found {emit_text(t)}")


# --------------------------------------------------------------------------
# lowering: AST -> Term
# --------------------------------------------------------------------------


SpanMap = dict[int, "object"]  # id(term) -> Span, kept alive by the term tree


def lower_program(p: ast.SourceProgram, span_map: Optional[SpanMap] = None) -> Term:
    """Lower a parsed program; a lone bare function lowers to its own term.

    When span_map is given, every produced statement term is keyed by object
    identity to its source span for later diagnostics.
    """
    items: list[Term] = []
    for d in p.predicates:
        items.append(
            comp(
                "pred",
                Atom(d.pred.name),
                TList(tuple(Atom(x) for x in d.pred.params)),
                formula_to_term(d.pred.body),
            )
        )
    for c in p.classes:
        fields = TList(tuple(comp("field", Atom(n), Atom(t)) for n, t in c.fields))
        methods = TList(
            tuple(_lower_function(m, span_map, this_class=c.name) for m in c.methods)
        )
        items.append(comp("class", Atom(c.name), fields, methods))
    for fn in p.functions:
        items.append(_lower_function(fn, span_map))
    if len(items) == 1 and len(p.functions) == 1:
        return items[0]
    return comp("program", TList(tuple(items)))


def _lower_function(
    m: ast.MethodDecl, span_map: Optional[SpanMap] = None, this_class: Optional[str] = None
) -> Term:
    body: list[Term] = []
    if m.precondition != fm.TrueF():
        body.append(comp("assert", formula_to_term(m.precondition)))
    for s in m.body.stmts:
        body.extend(lower_stmt(s, span_map))
    if m.postcondition != fm.TrueF():
        post = comp("assert", formula_to_term(m.postcondition))
        if span_map is not None:
            span_map[id(post)] = m.span
        body.append(post)
    params = [comp("param", Atom(n), Atom(t)) for n, t in m.params]
    if this_class is not None:
        params.insert(0, comp("param", Atom("this"), Atom(this_class)))
    return comp(
        "function", Atom(m.name), Atom(m.return_type), TList(tuple(params)), TList(tuple(body))
    )


def _lower_base(b: ast.LocBase) -> Term:
    if isinstance(b, ast.VarBase):
        return Atom(b.name)
    return comp("oa", Atom(b.obj), Atom(b.field))


def _lower_location(loc: ast.Location) -> Term:
    base = _lower_base(loc.base)
    offset = loc.offset or 0
    if offset == 0:
        return comp("offset", base)
    if offset > 0:
        return comp("offset", base, Int(offset))
    return comp("offset", base, comp("minus", Int(0), Int(-offset)))


def lower_expr(e: ast.Expr) -> Term:
    if isinstance(e, ast.IntExpr):
        return Int(e.value)
    if isinstance(e, ast.NullExpr):
        return Atom("nil")
    if isinstance(e, ast.LocExpr):
        return _lower_base(e.base)
    if isinstance(e, ast.MemReadExpr):
        return comp("mem", _lower_location(e.loc))
    if isinstance(e, ast.NegExpr):
        return comp("sub", Int(0), lower_expr(e.operand))
    if isinstance(e, ast.BinExpr):
        functor = {"+": "add", "-": "sub", "*": "mul"}[e.op]
        return comp(functor, lower_expr(e.left), lower_expr(e.right))
    if isinstance(e, ast.CallExpr):
        return _lower_call(e)
    raise LoweringError(f"expression has no term image: {e!r}", getattr(e, "span", NO_SPAN))


def _lower_call(e: ast.CallExpr) -> Term:
    args = [lower_expr(a) for a in e.args]
    if e.receiver is not None:
        args.insert(0, Atom(e.receiver))  # receiver becomes the implicit first actual
    if args:
        return comp("funcall", Atom(e.name), TList(tuple(args)))
    return comp("funcall", Atom(e.name))


def lower_cond(c: ast.Cond) -> Term:
    if isinstance(c, ast.CmpCond):
        return comp(CMP_TO_FUNCTOR[c.op], lower_expr(c.left), lower_expr(c.right))
    if isinstance(c, ast.AndCond):
        return comp("and", lower_cond(c.left), lower_cond(c.right))
    if isinstance(c, ast.OrCond):
        return comp("or", lower_cond(c.left), lower_cond(c.right))
    raise LoweringError(f"condition has no term image: {c!r}")


def lower_stmt(s: ast.Stmt, span_map: Optional[SpanMap] = None) -> list[Term]:
    out = _lower_stmt(s, span_map)
    if span_map is not None:
        for t in out:
            span_map.setdefault(id(t), s.span)
    return out


def _lower_stmt(s: ast.Stmt, span_map: Optional[SpanMap]) -> list[Term]:
    if isinstance(s, ast.AssignStmt):
        out: list[Term] = []
        targets = list(s.targets)
        value = lower_expr(s.value)
        # rightmost target is assigned first; earlier targets then read it back
        for i in reversed(range(len(targets))):
            lhs = targets[i]
            if lhs.heap:
                lhs_term: Term = comp("mem", _lower_location(lhs.target))  # type: ignore[arg-type]
            else:
                lhs_term = _lower_base(lhs.target)  # type: ignore[arg-type]
            out.append(comp("assign", lhs_term, value))
            value = lhs_term
        return out
    if isinstance(s, ast.NewStmt):
        return [comp("new", _lower_base(s.target))]
    if isinstance(s, ast.DeleteStmt):
        return [comp("delete", _lower_base(s.target))]
    if isinstance(s, ast.CallStmt):
        return [_lower_call(s.call)]
    if isinstance(s, ast.AssertStmt):
        return [comp("assert", formula_to_term(s.formula))]
    if isinstance(s, ast.BlockStmt):
        return [TList(tuple(_lower_block(s.block, span_map)))]
    if isinstance(s, ast.IfStmt):
        then_block = TList(tuple(_lower_block(s.then_block, span_map)))
        if s.else_block is None:
            return [comp("ite", lower_cond(s.cond), then_block)]
        return [
            comp(
                "ite",
                lower_cond(s.cond),
                then_block,
                TList(tuple(_lower_block(s.else_block, span_map))),
            )
        ]
    if isinstance(s, ast.WhileStmt):
        return [
            comp(
                "while",
                lower_cond(s.cond),
                comp("assert", formula_to_term(s.invariant)),
                TList(tuple(_lower_block(s.body, span_map))),
            )
        ]
    raise LoweringError(f"statement has no term image: {s!r}", getattr(s, "span", NO_SPAN))


def _lower_block(b: ast.Block, span_map: Optional[SpanMap] = None) -> list[Term]:
    out: list[Term] = []
    for s in b.stmts:
        out.extend(lower_stmt(s, span_map))
    return out


# --------------------------------------------------------------------------
# formulas <-> terms
# --------------------------------------------------------------------------


def formula_to_term(f: fm.Formula) -> Term:
    if isinstance(f, fm.Emp):
        return Atom("emp")
    if isinstance(f, fm.TrueF):
        return Atom("true")
    if isinstance(f, fm.FalseF):
        return Atom("false")
    if isinstance(f, fm.PointsTo):
        return comp("pto", expr_to_term(f.loc), expr_to_term(f.val))
    if isinstance(f, fm.Star):
        return comp("star", formula_to_term(f.left), formula_to_term(f.right))
    if isinstance(f, fm.And):
        return comp("and", formula_to_term(f.left), formula_to_term(f.right))
    if isinstance(f, fm.Or):
        return comp("or", formula_to_term(f.left), formula_to_term(f.right))
    if isinstance(f, fm.Exists):
        return comp("exists", Atom(f.var), formula_to_term(f.body))
    if isinstance(f, fm.PredApp):
        return comp("pred", Atom(f.name), TList(tuple(expr_to_term(a) for a in f.args)))
    if isinstance(f, fm.PureAtom):
        return comp(CMP_TO_FUNCTOR[f.op], expr_to_term(f.left), expr_to_term(f.right))
    raise LoweringError(f"formula has no term image: {f!r}")


def expr_to_term(e: fm.SymExpr) -> Term:
    if isinstance(e, fm.IntLit):
        return Int(e.value)
    if isinstance(e, fm.Var):
        return Atom(e.name)
    if isinstance(e, fm.Nil):
        return Atom("nil")
    if isinstance(e, fm.FieldRef):
        if isinstance(e.obj, fm.Var):
            return comp("oa", Atom(e.obj.name), Atom(e.field))
        raise LoweringError("field reference base must be a variable")
    if isinstance(e, fm.OffsetOf):
        base = expr_to_term(e.base)
        if e.offset == 0:
            return comp("offset", base)
        if e.offset > 0:
            return comp("offset", base, Int(e.offset))
        return comp("offset", base, comp("minus", Int(0), Int(-e.offset)))
    if isinstance(e, fm.ArithExpr):
        functor = {"+": "add", "-": "sub", "*": "mul"}[e.op]
        return comp(functor, expr_to_term(e.left), expr_to_term(e.right))
    if isinstance(e, fm.Record):
        args: list[Term] = [Atom(e.tag if e.tag is not None else "_")]
        if fm._positional_record(e):
            args.extend(expr_to_term(v) for _, v in e.fields)
        else:
            args.extend(comp(":", Atom(n), expr_to_term(v)) for n, v in e.fields)
        return Compound("object", tuple(args))
    raise LoweringError(f"expression has no term image: {e!r}")


def term_to_formula(t: Term, class_fields: Optional[dict[str, tuple[str, ...]]] = None) -> fm.Formula:
    fields = class_fields or {}
    if isinstance(t, Atom):
        if t.name == "emp":
            return fm.Emp()
        if t.name == "true":
            return fm.TrueF()
        if t.name == "false":
            return fm.FalseF()
        raise TermShapeError(f"formula expected, found {emit_text(t)}")
    if isinstance(t, Compound):
        f, n = t.functor, len(t.args)
        if f == "pto" and n == 2:
            return fm.PointsTo(term_to_expr(t.args[0], fields), term_to_expr(t.args[1], fields))
        if f == "star" and n == 2:
            return fm.Star(term_to_formula(t.args[0], fields), term_to_formula(t.args[1], fields))
        if f == "and" and n == 2:
            return fm.And(term_to_formula(t.args[0], fields), term_to_formula(t.args[1], fields))
        if f == "or" and n == 2:
            return fm.Or(term_to_formula(t.args[0], fields), term_to_formula(t.args[1], fields))
        if f == "exists" and n == 2 and isinstance(t.args[0], Atom):
            return fm.Exists(t.args[0].name, term_to_formula(t.args[1], fields))
        if f == "pred" and n == 2 and isinstance(t.args[0], Atom) and isinstance(t.args[1], TList):
            args = tuple(term_to_expr(a, fields) for a in t.args[1].items)
            return fm.PredApp(t.args[0].name, args)
        if f in FUNCTOR_TO_CMP and n == 2:
            return fm.PureAtom(
                FUNCTOR_TO_CMP[f], term_to_expr(t.args[0], fields), term_to_expr(t.args[1], fields)
            )
    raise TermShapeError(f"formula expected, found {emit_text(t)}")


def term_to_expr(t: Term, class_fields: Optional[dict[str, tuple[str, ...]]] = None) -> fm.SymExpr:
    fields = class_fields or {}
    if isinstance(t, Int):
        return fm.IntLit(t.value)
    if isinstance(t, Atom):
        if t.name == "nil":
            return fm.Nil()
        return fm.Var(t.name)
    if isinstance(t, Compound):
        f, n = t.functor, len(t.args)
        if f == "oa" and n == 2 and all(isinstance(a, Atom) for a in t.args):
            return fm.FieldRef(fm.Var(t.args[0].name), t.args[1].name)  # type: ignore[union-attr]
        if f == "offset" and n in (1, 2):
            base = term_to_expr(t.args[0], fields)
            if n == 1:
                return fm.OffsetOf(base, 0)
            return fm.OffsetOf(base, _offset_value(t.args[1]))
        if f in ("add", "sub", "mul") and n == 2:
            op = {"add": "+", "sub": "-", "mul": "*"}[f]
            return fm.ArithExpr(op, term_to_expr(t.args[0], fields), term_to_expr(t.args[1], fields))
        if f == "object" and n >= 1 and isinstance(t.args[0], Atom):
            tag: Optional[str] = t.args[0].name
            if tag == "_":
                tag = None
            named: list[tuple[str, fm.SymExpr]] = []
            positional: list[fm.SymExpr] = []
            for a in t.args[1:]:
                if isinstance(a, Compound) and a.functor == ":" and len(a.args) == 2:
                    named.append((a.args[0].name, term_to_expr(a.args[1], fields)))  # type: ignore[union-attr]
                else:
                    positional.append(term_to_expr(a, fields))
            if named and positional:
                raise TermShapeError("record mixes positional and named components")
            if named:
                return fm.Record(tag, tuple(named))
            names = _positional_names(tag, len(positional), fields)
            return fm.Record(tag, tuple(zip(names, positional)))
    raise TermShapeError(f"assertion expression expected, found {emit_text(t)}")


def _positional_names(
    tag: Optional[str], count: int, class_fields: dict[str, tuple[str, ...]]
) -> list[str]:
    if tag == fm.NODE_TAG:
        if count != len(fm.NODE_FIELDS):
            raise TermShapeError(f"'{fm.NODE_TAG}' records take {len(fm.NODE_FIELDS)} components")
        return list(fm.NODE_FIELDS)
    if tag is not None and tag in class_fields:
        declared = class_fields[tag]
        if count != len(declared):
            raise TermShapeError(f"class '{tag}' declares {len(declared)} fields, record has {count}")
        return list(declared)
    return [f"_{i}" for i in range(count)]


def _offset_value(t: Term) -> int:
    if isinstance(t, Int):
        return t.value
    if (
        isinstance(t, Compound)
        and t.functor == "minus"
        and len(t.args) == 2
        and isinstance(t.args[1], Int)
    ):
        return -t.args[1].value
    raise TermShapeError("offset displacement must be int or minus(0, int)")


# --------------------------------------------------------------------------
# program-level term access helpers
# --------------------------------------------------------------------------


def program_items(t: Term) -> list[Term]:
    """Flatten a checked top-level term into its item list."""
    if isinstance(t, Compound) and t.functor == "program":
        return list(t.args[0].items)  # type: ignore[union-attr]
    return [t]


def term_functions(t: Term) -> list[Compound]:
    """All function terms, including those nested in classes."""
    out: list[Compound] = []
    for item in program_items(t):
        if isinstance(item, Compound) and item.functor == "function":
            out.append(item)
        elif isinstance(item, Compound) and item.functor == "class":
            for m in item.args[2].items:  # type: ignore[union-attr]
                if isinstance(m, Compound) and m.functor == "function":
                    out.append(m)
    return out


def term_predicates(t: Term) -> list[fm.PredDef]:
    out: list[fm.PredDef] = []
    for item in program_items(t):
        if isinstance(item, Compound) and item.functor == "pred":
            name = item.args[0].name  # type: ignore[union-attr]
            params = tuple(a.name for a in item.args[1].items)  # type: ignore[union-attr]
            out.append(fm.PredDef(name, params, term_to_formula(item.args[2], term_class_fields(t))))
    return out


def term_class_fields(t: Term) -> dict[str, tuple[str, ...]]:
    out: dict[str, tuple[str, ...]] = {}
    for item in program_items(t):
        if isinstance(item, Compound) and item.functor == "class":
            name = item.args[0].name  # type: ignore[union-attr]
            fields = tuple(f.args[0].name for f in item.args[1].items)  # type: ignore[union-attr]
            out[name] = fields
    return out


def split_contracts(
    fn: Compound, class_fields: Optional[dict[str, tuple[str, ...]]] = None
) -> tuple[fm.Formula, list[Term], fm.Formula]:
    """Pop the leading/trailing assert entries off a function body.

    Returns (precondition, executable statements, postcondition); missing
    asserts default to true.
    """
    body = list(fn.args[3].items)  # type: ignore[union-attr]
    pre: fm.Formula = fm.TrueF()
    post: fm.Formula = fm.TrueF()
    if body and isinstance(body[0], Compound) and body[0].functor == "assert":
        pre = term_to_formula(body[0].args[0], class_fields)
        body = body[1:]
    if body and isinstance(body[-1], Compound) and body[-1].functor == "assert":
        post = term_to_formula(body[-1].args[0], class_fields)
        body = body[:-1]
    return pre, body, post
