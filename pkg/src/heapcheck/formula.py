"""Assertion language: spatial formulas, symbolic expressions, and their algebra.

Formulas are immutable trees.  ``normalize`` flattens and sorts star/and/or
chains into a canonical shape and alpha-renames binders so that structural
equality coincides with canonical form; ``pretty`` prints text that reparses
to the same normalized formula.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

from .errors import AssertionSyntaxError

# --------------------------------------------------------------------------
# symbolic expressions
# --------------------------------------------------------------------------


class SymExpr:
    """Base class for expression trees appearing inside formulas."""

    __slots__ = ()


@dataclass(frozen=True)
class IntLit(SymExpr):
    value: int


@dataclass(frozen=True)
class Var(SymExpr):
    name: str


@dataclass(frozen=True)
class Nil(SymExpr):
    """The null address; evaluates to 0 and is never allocated."""


@dataclass(frozen=True)
class FieldRef(SymExpr):
    """Unresolved object-field reference ``obj.field``."""

    obj: SymExpr
    field: str


@dataclass(frozen=True)
class OffsetOf(SymExpr):
    """Address displacement ``base + offset`` with a literal offset."""

    base: SymExpr
    offset: int


@dataclass(frozen=True)
class ArithExpr(SymExpr):
    op: str  # one of + - *
    left: SymExpr
    right: SymExpr


@dataclass(frozen=True)
class Record(SymExpr):
    """Structured cell value: optional class tag plus named components.

    Components keep their declaration / write order; equality of record
    *values* is decided field-name-wise by the matching layers, not here.
    """

    tag: str | None
    fields: tuple[tuple[str, SymExpr], ...]

    def field_map(self) -> dict[str, SymExpr]:
        return dict(self.fields)


# Builtin class backing the ``,``-chain sugar and the list predicate: a list
# node is one cell holding a (value, next) record.
NODE_TAG = "node"
NODE_FIELDS = ("value", "next")

CMP_OPS = ("==", "!=", "<", "<=", ">", ">=")

NEGATED_CMP = {"==": "!=", "!=": "==", "<": ">=", "<=": ">", ">": "<=", ">=": "<"}


def node_record(value: SymExpr, nxt: SymExpr) -> Record:
    return Record(NODE_TAG, (("value", value), ("next", nxt)))


# --------------------------------------------------------------------------
# formulas
# --------------------------------------------------------------------------


class Formula:
    __slots__ = ()


@dataclass(frozen=True)
class Emp(Formula):
    pass


@dataclass(frozen=True)
class TrueF(Formula):
    pass


@dataclass(frozen=True)
class FalseF(Formula):
    pass


@dataclass(frozen=True)
class PointsTo(Formula):
    loc: SymExpr
    val: SymExpr


@dataclass(frozen=True)
class Star(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Exists(Formula):
    var: str
    body: Formula


@dataclass(frozen=True)
class PredApp(Formula):
    name: str
    args: tuple[SymExpr, ...]


@dataclass(frozen=True)
class PureAtom(Formula):
    """Heap-independent comparison admitted inside spatial formulas."""

    op: str
    left: SymExpr
    right: SymExpr


@dataclass(frozen=True)
class PredDef:
    name: str
    params: tuple[str, ...]
    body: Formula
    builtin: bool = False


# --------------------------------------------------------------------------
# free variables
# --------------------------------------------------------------------------


def expr_free_vars(e: SymExpr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, (IntLit, Nil)):
        return set()
    if isinstance(e, FieldRef):
        return expr_free_vars(e.obj)
    if isinstance(e, OffsetOf):
        return expr_free_vars(e.base)
    if isinstance(e, ArithExpr):
        return expr_free_vars(e.left) | expr_free_vars(e.right)
    if isinstance(e, Record):
        out: set[str] = set()
        for _, v in e.fields:
            out |= expr_free_vars(v)
        return out
    raise TypeError(f"unknown expression {e!r}")


def free_vars(f: Formula) -> set[str]:
    if isinstance(f, (Emp, TrueF, FalseF)):
        return set()
    if isinstance(f, PointsTo):
        return expr_free_vars(f.loc) | expr_free_vars(f.val)
    if isinstance(f, (Star, And, Or)):
        return free_vars(f.left) | free_vars(f.right)
    if isinstance(f, Exists):
        return free_vars(f.body) - {f.var}
    if isinstance(f, PredApp):
        out: set[str] = set()
        for a in f.args:
            out |= expr_free_vars(a)
        return out
    if isinstance(f, PureAtom):
        return expr_free_vars(f.left) | expr_free_vars(f.right)
    raise TypeError(f"unknown formula {f!r}")


# --------------------------------------------------------------------------
# substitution (capture avoiding)
# --------------------------------------------------------------------------


def substitute_expr(e: SymExpr, mapping: Mapping[str, SymExpr]) -> SymExpr:
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, (IntLit, Nil)):
        return e
    if isinstance(e, FieldRef):
        return FieldRef(substitute_expr(e.obj, mapping), e.field)
    if isinstance(e, OffsetOf):
        return OffsetOf(substitute_expr(e.base, mapping), e.offset)
    if isinstance(e, ArithExpr):
        return ArithExpr(e.op, substitute_expr(e.left, mapping), substitute_expr(e.right, mapping))
    if isinstance(e, Record):
        return Record(e.tag, tuple((n, substitute_expr(v, mapping)) for n, v in e.fields))
    raise TypeError(f"unknown expression {e!r}")


def _fresh_name(base: str, taken: set[str]) -> str:
    i = 1
    while f"{base}_{i}" in taken:
        i += 1
    return f"{base}_{i}"


def substitute(f: Formula, mapping: Mapping[str, SymExpr]) -> Formula:
    if not mapping:
        return f
    if isinstance(f, (Emp, TrueF, FalseF)):
        return f
    if isinstance(f, PointsTo):
        return PointsTo(substitute_expr(f.loc, mapping), substitute_expr(f.val, mapping))
    if isinstance(f, Star):
        return Star(substitute(f.left, mapping), substitute(f.right, mapping))
    if isinstance(f, And):
        return And(substitute(f.left, mapping), substitute(f.right, mapping))
    if isinstance(f, Or):
        return Or(substitute(f.left, mapping), substitute(f.right, mapping))
    if isinstance(f, Exists):
        inner = {k: v for k, v in mapping.items() if k != f.var}
        if not inner:
            return f
        clash = set()
        for v in inner.values():
            clash |= expr_free_vars(v)
        if f.var in clash:
            taken = clash | free_vars(f.body) | set(inner)
            renamed = _fresh_name(f.var, taken)
            body = substitute(f.body, {f.var: Var(renamed)})
            return Exists(renamed, substitute(body, inner))
        return Exists(f.var, substitute(f.body, inner))
    if isinstance(f, PredApp):
        return PredApp(f.name, tuple(substitute_expr(a, mapping) for a in f.args))
    if isinstance(f, PureAtom):
        return PureAtom(f.op, substitute_expr(f.left, mapping), substitute_expr(f.right, mapping))
    raise TypeError(f"unknown formula {f!r}")


# --------------------------------------------------------------------------
# pretty printing
# --------------------------------------------------------------------------

_ADD_LEVEL = 1
_MUL_LEVEL = 2
_ATOM_LEVEL = 3


def pretty_expr(e: SymExpr, level: int = 0) -> str:
    if isinstance(e, IntLit):
        return str(e.value) if e.value >= 0 else f"(0-{-e.value})"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Nil):
        return "nil"
    if isinstance(e, FieldRef):
        return f"{pretty_expr(e.obj, _ATOM_LEVEL)}.{e.field}"
    if isinstance(e, OffsetOf):
        sign = "+" if e.offset >= 0 else "-"
        text = f"{pretty_expr(e.base, _ATOM_LEVEL)}{sign}{abs(e.offset)}"
        return f"({text})" if level >= _MUL_LEVEL else text
    if isinstance(e, ArithExpr):
        mine = _MUL_LEVEL if e.op == "*" else _ADD_LEVEL
        # left-associative: the left child tolerates equal precedence unparenthesized
        left = pretty_expr(e.left, mine - 1)
        right = pretty_expr(e.right, mine)
        text = f"{left}{e.op}{right}"
        return f"({text})" if level >= mine else text
    if isinstance(e, Record):
        if _positional_record(e):
            inner = ", ".join(pretty_expr(v) for _, v in e.fields)
        else:
            inner = ", ".join(f"{n}: {pretty_expr(v)}" for n, v in e.fields)
        tag = e.tag if e.tag is not None else "_"
        return f"object({tag}, {inner})" if inner else f"object({tag})"
    raise TypeError(f"unknown expression {e!r}")


def _positional_record(e: Record) -> bool:
    names = tuple(n for n, _ in e.fields)
    if e.tag == NODE_TAG:
        return names == NODE_FIELDS
    return names == tuple(f"_{i}" for i in range(len(names)))


# formula precedence: or/exists (0) < and (1) < star (2) < atoms (3);
# `level` is the minimum precedence printable without parentheses
_F_OR, _F_AND, _F_STAR = 0, 1, 2


def pretty(f: Formula, level: int = 0) -> str:
    if isinstance(f, Emp):
        return "emp"
    if isinstance(f, TrueF):
        return "true"
    if isinstance(f, FalseF):
        return "false"
    if isinstance(f, PointsTo):
        # products need parens here: bare '*' reads as separating conjunction
        return f"{pretty_expr(f.loc, _MUL_LEVEL)}->{pretty_expr(f.val, _MUL_LEVEL)}"
    if isinstance(f, Star):
        text = f"{pretty(f.left, _F_STAR + 1)} * {pretty(f.right, _F_STAR)}"
        return f"({text})" if level > _F_STAR else text
    if isinstance(f, And):
        text = f"{pretty(f.left, _F_AND + 1)} && {pretty(f.right, _F_AND)}"
        return f"({text})" if level > _F_AND else text
    if isinstance(f, Or):
        text = f"{pretty(f.left, _F_OR + 1)} || {pretty(f.right, _F_OR)}"
        return f"({text})" if level > _F_OR else text
    if isinstance(f, Exists):
        binders = [f.var]
        body = f.body
        while isinstance(body, Exists):
            binders.append(body.var)
            body = body.body
        text = f"exists {', '.join(binders)}. {pretty(body)}"
        return f"({text})" if level > _F_OR else text
    if isinstance(f, PredApp):
        return f"{f.name}({', '.join(pretty_expr(a) for a in f.args)})"
    if isinstance(f, PureAtom):
        return f"{pretty_expr(f.left, _MUL_LEVEL)}{f.op}{pretty_expr(f.right, _MUL_LEVEL)}"
    raise TypeError(f"unknown formula {f!r}")


# --------------------------------------------------------------------------
# normalization
# --------------------------------------------------------------------------


def _flatten(f: Formula, cls: type) -> list[Formula]:
    if isinstance(f, cls):
        return _flatten(f.left, cls) + _flatten(f.right, cls)  # type: ignore[attr-defined]
    return [f]


def _atom_rank(f: Formula) -> int:
    if isinstance(f, PureAtom):
        return 0
    if isinstance(f, PointsTo):
        return 1
    if isinstance(f, PredApp):
        return 2
    return 3


def _star_key(f: Formula) -> tuple:
    if isinstance(f, PointsTo):
        return (1, pretty_expr(f.loc), pretty_expr(f.val))
    if isinstance(f, PredApp):
        return (2, f.name, tuple(pretty_expr(a) for a in f.args))
    return (_atom_rank(f), pretty(f))


def _rebuild(parts: list[Formula], cls: type) -> Formula:
    out = parts[-1]
    for p in reversed(parts[:-1]):
        out = cls(p, out)
    return out


def fold_expr(e: SymExpr) -> SymExpr:
    """Context-free constant folding; offsets canonicalize into arithmetic so
    canonical text reparses to the identical tree."""
    if isinstance(e, ArithExpr):
        l, r = fold_expr(e.left), fold_expr(e.right)
        lv = l.value if isinstance(l, IntLit) else 0 if isinstance(l, Nil) else None
        rv = r.value if isinstance(r, IntLit) else 0 if isinstance(r, Nil) else None
        if lv is not None and rv is not None:
            return IntLit(lv + rv if e.op == "+" else lv - rv if e.op == "-" else lv * rv)
        if e.op in ("+", "-") and rv == 0:
            return l
        if e.op == "+" and lv == 0:
            return r
        if e.op == "*" and (lv == 0 or rv == 0):
            return IntLit(0)
        if e.op == "*" and lv == 1:
            return r
        if e.op == "*" and rv == 1:
            return l
        return ArithExpr(e.op, l, r)
    if isinstance(e, OffsetOf):
        b = fold_expr(e.base)
        if isinstance(b, IntLit):
            return IntLit(b.value + e.offset)
        if isinstance(b, Nil):
            return IntLit(e.offset)
        if e.offset == 0:
            return b
        if e.offset > 0:
            return ArithExpr("+", b, IntLit(e.offset))
        return ArithExpr("-", b, IntLit(-e.offset))
    if isinstance(e, Record):
        return Record(e.tag, tuple((n, fold_expr(v)) for n, v in e.fields))
    if isinstance(e, FieldRef):
        return FieldRef(fold_expr(e.obj), e.field)
    return e


def normalize(f: Formula) -> Formula:
    """Canonical form: unit/absorption rewrites, folded constants, sorted flat
    chains, canonical binders."""
    g = _normalize1(_fold_formula(f))
    while True:
        h = _normalize1(g)
        if h == g:
            return _canon_binders(g)
        g = h


def _fold_formula(f: Formula) -> Formula:
    if isinstance(f, PointsTo):
        return PointsTo(fold_expr(f.loc), fold_expr(f.val))
    if isinstance(f, PureAtom):
        return PureAtom(f.op, fold_expr(f.left), fold_expr(f.right))
    if isinstance(f, PredApp):
        return PredApp(f.name, tuple(fold_expr(a) for a in f.args))
    if isinstance(f, (Star, And, Or)):
        cls = type(f)
        return cls(_fold_formula(f.left), _fold_formula(f.right))
    if isinstance(f, Exists):
        return Exists(f.var, _fold_formula(f.body))
    return f


def _normalize1(f: Formula) -> Formula:
    if isinstance(f, (Emp, TrueF, FalseF, PointsTo, PredApp, PureAtom)):
        return f
    if isinstance(f, Exists):
        body = _normalize1(f.body)
        if f.var not in free_vars(body):
            return body
        return Exists(f.var, body)
    if isinstance(f, Star):
        parts = [_normalize1(p) for p in _flatten(f, Star)]
        if any(isinstance(p, FalseF) for p in parts):
            return FalseF()
        parts = [p for p in parts if not isinstance(p, Emp)]
        if not parts:
            return Emp()
        parts.sort(key=_star_key)
        return _rebuild(parts, Star)
    if isinstance(f, And):
        parts = [_normalize1(p) for p in _flatten(f, And)]
        if any(isinstance(p, FalseF) for p in parts):
            return FalseF()
        parts = [p for p in parts if not isinstance(p, TrueF)]
        if not parts:
            return TrueF()
        uniq: list[Formula] = []
        for p in sorted(parts, key=_star_key):
            if not uniq or uniq[-1] != p:
                uniq.append(p)
        return _rebuild(uniq, And)
    if isinstance(f, Or):
        parts = [_normalize1(p) for p in _flatten(f, Or)]
        if any(isinstance(p, TrueF) for p in parts):
            return TrueF()
        parts = [p for p in parts if not isinstance(p, FalseF)]
        if not parts:
            return FalseF()
        uniq = []
        for p in sorted(parts, key=_star_key):
            if not uniq or uniq[-1] != p:
                uniq.append(p)
        return _rebuild(uniq, Or)
    raise TypeError(f"unknown formula {f!r}")


def _canon_binders(f: Formula) -> Formula:
    """Rename every Exists binder to e0, e1, ... in traversal order."""
    free = free_vars(f)
    counter = [0]

    def next_name() -> str:
        while True:
            name = f"e{counter[0]}"
            counter[0] += 1
            if name not in free:
                return name

    def walk(g: Formula) -> Formula:
        if isinstance(g, Exists):
            fresh = next_name()
            body = substitute(g.body, {g.var: Var(fresh)}) if g.var != fresh else g.body
            return Exists(fresh, walk(body))
        if isinstance(g, Star):
            return Star(walk(g.left), walk(g.right))
        if isinstance(g, And):
            return And(walk(g.left), walk(g.right))
        if isinstance(g, Or):
            return Or(walk(g.left), walk(g.right))
        return g

    out = walk(f)
    # renaming can disturb the sorted chain order; re-sort once more
    return out if out == f else _normalize1(out)


# --------------------------------------------------------------------------
# chain sugar and builtin predicates
# --------------------------------------------------------------------------


def chain_points_to(loc: SymExpr, values: list[SymExpr]) -> Formula:
    """Desugar ``loc->v1,...,vn`` into a nil-terminated linked chain.

    A single value stays a plain points-to; longer chains thread fresh
    existential link variables through (value, next) node records.
    """
    if len(values) == 1:
        return PointsTo(loc, values[0])
    links = [Var(f"$l{i}") for i in range(1, len(values))]
    atoms: list[Formula] = []
    cur = loc
    for i, v in enumerate(values):
        nxt: SymExpr = links[i] if i < len(links) else Nil()
        atoms.append(PointsTo(cur, node_record(v, nxt)))
        cur = nxt
    out = _rebuild(atoms, Star)
    for link in reversed(links):
        out = Exists(link.name, out)
    return out


def builtin_preds() -> dict[str, PredDef]:
    s, e, t, v = Var("s"), Var("e"), Var("t"), Var("v")
    body = Or(
        And(PureAtom("==", s, e), Emp()),
        Exists(
            "t",
            Exists(
                "v",
                Star(PointsTo(s, node_record(v, t)), PredApp("list", (t, e))),
            ),
        ),
    )
    return {"list": PredDef("list", ("s", "e"), body, builtin=True)}


def or_free(f: Formula) -> list[Formula]:
    """Distribute Or upward, yielding disjunction-free formulas."""
    if isinstance(f, Or):
        return or_free(f.left) + or_free(f.right)
    if isinstance(f, (Star, And)):
        cls = type(f)
        return [cls(l, r) for l in or_free(f.left) for r in or_free(f.right)]
    if isinstance(f, Exists):
        return [Exists(f.var, b) for b in or_free(f.body)]
    return [f]


def is_pure_only(f: Formula) -> bool:
    """Heap-independent formulas (emp is heap-dependent, hence excluded)."""
    if isinstance(f, (PureAtom, TrueF, FalseF)):
        return True
    if isinstance(f, (And, Or)):
        return is_pure_only(f.left) and is_pure_only(f.right)
    if isinstance(f, Exists):
        return is_pure_only(f.body)
    return False


def check_pred_table(defs: Iterable[PredDef]) -> dict[str, PredDef]:
    """Validate user definitions and merge them with the builtins."""
    table = builtin_preds()
    for d in defs:
        if d.name in table:
            raise AssertionSyntaxError(f"predicate '{d.name}' is already defined")
        if len(set(d.params)) != len(d.params):
            raise AssertionSyntaxError(f"predicate '{d.name}' repeats a parameter name")
        extra = free_vars(d.body) - set(d.params)
        if extra:
            names = ", ".join(sorted(extra))
            raise AssertionSyntaxError(
                f"predicate '{d.name}' body uses variables outside its parameters: {names}"
            )
        table[d.name] = d
    for d in list(table.values()):
        check_arities(d.body, table, d.name)
    return table


def check_arities(f: Formula, table: dict[str, PredDef], context: str) -> None:
    if isinstance(f, PredApp):
        d = table.get(f.name)
        if d is not None and len(d.params) != len(f.args):
            raise AssertionSyntaxError(
                f"predicate '{f.name}' used with {len(f.args)} arguments in '{context}' "
                f"but defined with {len(d.params)}"
            )
        return
    if isinstance(f, (Star, And, Or)):
        check_arities(f.left, table, context)
        check_arities(f.right, table, context)
    elif isinstance(f, Exists):
        check_arities(f.body, table, context)
