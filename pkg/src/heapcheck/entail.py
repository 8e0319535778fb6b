"""Entailment prover and frame inference over symbolic heaps.

``prove`` runs a deterministic subtraction-style search: consequent atoms are
consumed against provably-matching antecedent atoms (unifying consequent
existentials), inductive predicates fold on the consequent side and unfold on
the antecedent side within a depth bound, and leftovers become the frame.
Unknown pure answers always count as failure, never success.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Union

from . import formula as fm
from .arith import PureSet, YES, UNSAT
from .errors import UnknownPredicateError, UnsupportedFormulaError
from .prooftree import FAILED, OK, PRUNED, ProofBuilder, ProofNode

DEFAULT_UNFOLD_DEPTH = 4


class FreshNames:
    """Deterministic supply of symbol names that no source program can shadow
    ('$' never lexes inside identifiers).

    Distinct prefixes give disjoint namespaces; the prover reserves '?' so its
    internal instantiations can never collide with caller-made symbols.
    """

    def __init__(self, prefix: str = "") -> None:
        self._n = 0
        self.prefix = prefix

    def var(self, hint: str = "v") -> str:
        self._n += 1
        return f"${self.prefix}{hint}{self._n}"


# --------------------------------------------------------------------------
# symbolic heaps
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PtoAtom:
    loc: fm.SymExpr
    val: fm.SymExpr

    def subst(self, mapping) -> "PtoAtom":
        return PtoAtom(fm.substitute_expr(self.loc, mapping), fm.substitute_expr(self.val, mapping))

    def to_formula(self) -> fm.Formula:
        return fm.PointsTo(self.loc, self.val)


@dataclass(frozen=True)
class PredAtom:
    name: str
    args: tuple[fm.SymExpr, ...]

    def subst(self, mapping) -> "PredAtom":
        return PredAtom(self.name, tuple(fm.substitute_expr(a, mapping) for a in self.args))

    def to_formula(self) -> fm.Formula:
        return fm.PredApp(self.name, self.args)


SpatialAtom = Union[PtoAtom, PredAtom]


def _atom_key(a: SpatialAtom) -> tuple:
    if isinstance(a, PtoAtom):
        return (0, fm.pretty_expr(a.loc), fm.pretty_expr(a.val))
    return (1, a.name, tuple(fm.pretty_expr(x) for x in a.args))


@dataclass(frozen=True)
class SymHeap:
    """Pure constraints plus a multiset of spatial atoms.

    Well-separation (pairwise distinct points-to locations, none nil) is not
    stored but derived on demand by ``sep_pure``.
    """

    pure: PureSet = PureSet()
    spatial: tuple[SpatialAtom, ...] = ()
    existentials: frozenset[str] = frozenset()

    @staticmethod
    def emp() -> "SymHeap":
        return SymHeap()

    def with_atom(self, atom: SpatialAtom) -> "SymHeap":
        return SymHeap(self.pure, self.spatial + (atom,), self.existentials)

    def without(self, atom: SpatialAtom) -> "SymHeap":
        out = list(self.spatial)
        out.remove(atom)
        return SymHeap(self.pure, tuple(out), self.existentials)

    def replace_atom(self, old: SpatialAtom, new: SpatialAtom) -> "SymHeap":
        out = [new if a == old else a for a in self.spatial]
        return SymHeap(self.pure, tuple(out), self.existentials)

    def add_pure(self, op: str, l: fm.SymExpr, r: fm.SymExpr) -> "SymHeap":
        return SymHeap(self.pure.add(op, l, r), self.spatial, self.existentials)

    def sep_pure(self) -> PureSet:
        """Pure part extended with the separation axioms of the spatial part."""
        p = self.pure
        ptos = [a for a in self.spatial if isinstance(a, PtoAtom)]
        for a in ptos:
            p = p.add("!=", a.loc, fm.Nil())
        for a, b in itertools.combinations(ptos, 2):
            p = p.add("!=", a.loc, b.loc)
        return p

    def consistent(self) -> bool:
        return self.sep_pure().check_sat().status != UNSAT

    def to_formula(self) -> fm.Formula:
        spatial = [a.to_formula() for a in self.spatial]
        pure = [fm.PureAtom(op, l, r) for op, l, r in self.pure.atoms]
        out: Optional[fm.Formula] = None
        if spatial:
            out = spatial[-1]
            for s in reversed(spatial[:-1]):
                out = fm.Star(s, out)
        else:
            out = fm.Emp()
        for p in reversed(pure):
            out = fm.And(p, out)
        for v in sorted(self.existentials):
            out = fm.Exists(v, out)
        return out

    def pretty(self) -> str:
        return fm.pretty(fm.normalize(self.to_formula()))

    def sorted_spatial(self) -> list[SpatialAtom]:
        return sorted(self.spatial, key=_atom_key)


# --------------------------------------------------------------------------
# formulas -> symbolic heaps
# --------------------------------------------------------------------------


def formula_to_symheaps(
    f: fm.Formula,
    fresh: FreshNames,
    skolemize: bool = False,
) -> list[SymHeap]:
    """Convert to the symbolic-heap fragment; Or yields one heap per disjunct.

    Raises UnsupportedFormulaError on conjunction of two spatial parts or on
    field references, which have no heap-cell meaning of their own.
    """
    out: list[SymHeap] = []
    for disjunct in fm.or_free(f):
        pure: list[tuple[str, fm.SymExpr, fm.SymExpr]] = []
        spatial: list[SpatialAtom] = []
        existentials: set[str] = set()

        def walk(g: fm.Formula, spatial_ok: bool) -> None:
            if isinstance(g, (fm.Emp, fm.TrueF)):
                return
            if isinstance(g, fm.FalseF):
                pure.append(("==", fm.IntLit(0), fm.IntLit(1)))
                return
            if isinstance(g, fm.PureAtom):
                pure.append((g.op, _rn(g.left), _rn(g.right)))
                return
            if isinstance(g, fm.PointsTo):
                if not spatial_ok:
                    raise UnsupportedFormulaError(
                        "spatial conjunction (&&) outside the symbolic-heap fragment"
                    )
                spatial.append(PtoAtom(_rn(g.loc), _rn(g.val)))
                return
            if isinstance(g, fm.PredApp):
                if not spatial_ok:
                    raise UnsupportedFormulaError(
                        "spatial conjunction (&&) outside the symbolic-heap fragment"
                    )
                spatial.append(PredAtom(g.name, tuple(_rn(a) for a in g.args)))
                return
            if isinstance(g, fm.Star):
                walk(g.left, spatial_ok)
                walk(g.right, spatial_ok)
                return
            if isinstance(g, fm.And):
                left_pure = fm.is_pure_only(g.left)
                right_pure = fm.is_pure_only(g.right)
                if not left_pure and not right_pure:
                    raise UnsupportedFormulaError(
                        "conjunction of two spatial formulas is not supported"
                    )
                walk(g.left, spatial_ok)
                walk(g.right, spatial_ok)
                return
            if isinstance(g, fm.Exists):
                name = fresh.var("e")
                if not skolemize:
                    existentials.add(name)
                body = fm.substitute(g.body, {g.var: fm.Var(name)})
                walk(body, spatial_ok)
                return
            raise UnsupportedFormulaError(f"formula outside the supported fragment: {g!r}")

        def _rn(e: fm.SymExpr) -> fm.SymExpr:
            if isinstance(e, fm.FieldRef):
                raise UnsupportedFormulaError(
                    "field references inside assertions are not supported; "
                    "assert record values instead"
                )
            if isinstance(e, fm.Record):
                return fm.Record(e.tag, tuple((n, _rn(v)) for n, v in e.fields))
            if isinstance(e, fm.ArithExpr):
                return fm.ArithExpr(e.op, _rn(e.left), _rn(e.right))
            if isinstance(e, fm.OffsetOf):
                return fm.OffsetOf(_rn(e.base), e.offset)
            return e

        walk(disjunct, True)
        ps = PureSet()
        for op, l, r in pure:
            ps = ps.add(op, l, r)
        out.append(SymHeap(ps, tuple(spatial), frozenset(existentials)))
    return out


# --------------------------------------------------------------------------
# entailment results
# --------------------------------------------------------------------------


@dataclass
class Proved:
    frame: SymHeap
    binding: dict[str, fm.SymExpr]
    tree: ProofNode

    status = "proved"


@dataclass
class Failed:
    residue_antecedent: tuple[SpatialAtom, ...]
    residue_consequent: tuple[SpatialAtom, ...]
    nearest_rule: str
    tree: ProofNode

    status = "failed"


EntailmentResult = Union[Proved, Failed]


# --------------------------------------------------------------------------
# the prover
# --------------------------------------------------------------------------


class _Prover:
    def __init__(
        self,
        preds: dict[str, fm.PredDef],
        builder: ProofBuilder,
        depth: int,
    ):
        self.preds = preds
        # reserved namespace: caller-made names never start with '$?'
        self.qfresh = FreshNames("?")
        self.builder = builder
        self.depth = depth

    def pred_def(self, name: str, arity: Optional[int] = None) -> fm.PredDef:
        d = self.preds.get(name)
        if d is None:
            raise UnknownPredicateError(f"unknown predicate '{name}'")
        if arity is not None and arity != len(d.params):
            raise UnknownPredicateError(
                f"predicate '{name}' takes {len(d.params)} arguments, got {arity}"
            )
        return d

    def instantiate(self, name: str, args: tuple[fm.SymExpr, ...], skolemize: bool) -> list[SymHeap]:
        """Predicate body disjuncts with formals replaced by actuals."""
        d = self.pred_def(name, len(args))
        body = fm.substitute(d.body, dict(zip(d.params, args)))
        return formula_to_symheaps(body, self.qfresh, skolemize=skolemize)

    # unification ---------------------------------------------------------

    def unify(
        self,
        pattern: fm.SymExpr,
        target: fm.SymExpr,
        binding: dict[str, fm.SymExpr],
        exist: frozenset[str],
        pure: PureSet,
    ) -> Optional[dict[str, fm.SymExpr]]:
        p = fm.substitute_expr(pattern, binding)
        if isinstance(p, fm.Var) and p.name in exist:
            out = dict(binding)
            out[p.name] = target
            return out
        if isinstance(p, fm.Record) and isinstance(target, fm.Record):
            if p.tag is not None and target.tag is not None and p.tag != target.tag:
                return None
            pm, tm = dict(p.fields), dict(target.fields)
            if set(pm) != set(tm):
                return None
            b = binding
            for name in sorted(pm):
                b = self.unify(pm[name], tm[name], b, exist, pure)
                if b is None:
                    return None
            return b
        if isinstance(p, fm.Record) != isinstance(target, fm.Record):
            return None
        if pure.equal(p, target):
            return binding
        return None

    # spatial matching ------------------------------------------------------

    def match(
        self,
        ant_pure: PureSet,
        ant_atoms: tuple[SpatialAtom, ...],
        con_atoms: tuple[SpatialAtom, ...],
        con_pure: tuple[tuple[str, fm.SymExpr, fm.SymExpr], ...],
        exist: frozenset[str],
        binding: dict[str, fm.SymExpr],
        depth: int,
        nodes: list[ProofNode],
    ) -> Union[tuple[tuple[SpatialAtom, ...], dict[str, fm.SymExpr]], str]:
        """Consume all consequent atoms; returns (leftover, binding) or the
        name of the rule nearest to the failure."""
        if not con_atoms:
            for op, l, r in con_pure:
                ls = fm.substitute_expr(l, binding)
                rs = fm.substitute_expr(r, binding)
                unbound = (fm.expr_free_vars(ls) | fm.expr_free_vars(rs)) & exist
                if unbound:
                    nodes.append(
                        self.builder.node(
                            "pure-check",
                            f"unbound existential {sorted(unbound)} in {fm.pretty(fm.PureAtom(op, ls, rs))}",
                            FAILED,
                        )
                    )
                    return "pure-check"
                if ant_pure.entails(op, ls, rs) != YES:
                    nodes.append(
                        self.builder.node(
                            "pure-check", fm.pretty(fm.PureAtom(op, ls, rs)), FAILED
                        )
                    )
                    return "pure-check"
                nodes.append(
                    self.builder.node("pure-check", fm.pretty(fm.PureAtom(op, ls, rs)), OK)
                )
            return ant_atoms, binding
        atom, rest = con_atoms[0], con_atoms[1:]
        if isinstance(atom, PtoAtom):
            nearest = "points-to"
            candidates = [a for a in ant_atoms if isinstance(a, PtoAtom)]
            for cand in candidates:
                b2 = self.unify(atom.loc, cand.loc, binding, exist, ant_pure)
                if b2 is None:
                    continue
                b3 = self.unify(atom.val, cand.val, b2, exist, ant_pure)
                if b3 is None:
                    continue
                remaining = tuple(a for a in ant_atoms if a is not cand)
                mark = len(nodes)
                nodes.append(
                    self.builder.node(
                        "points-to",
                        f"{fm.pretty(atom.to_formula())} matches {fm.pretty(cand.to_formula())}",
                    )
                )
                res = self.match(ant_pure, remaining, rest, con_pure, exist, b3, depth, nodes)
                if not isinstance(res, str):
                    return res
                nearest = res
                del nodes[mark:]
            # fall through to antecedent unfolding handled by caller
            return nearest
        assert isinstance(atom, PredAtom)
        nearest = "pred-match"
        for cand in ant_atoms:
            if not isinstance(cand, PredAtom) or cand.name != atom.name:
                continue
            b2: Optional[dict[str, fm.SymExpr]] = binding
            for pa, ca in zip(atom.args, cand.args):
                b2 = self.unify(pa, ca, b2, exist, ant_pure)
                if b2 is None:
                    break
            if b2 is None:
                continue
            remaining = tuple(a for a in ant_atoms if a is not cand)
            mark = len(nodes)
            nodes.append(self.builder.node("pred-match", fm.pretty(atom.to_formula())))
            res = self.match(ant_pure, remaining, rest, con_pure, exist, b2, depth, nodes)
            if not isinstance(res, str):
                return res
            nearest = res
            del nodes[mark:]
        if depth <= 0:
            nodes.append(
                self.builder.node(
                    "fold", f"depth bound hit at {fm.pretty(atom.to_formula())}", FAILED
                )
            )
            return "depth-exceeded"
        # fold: replace the consequent predicate by one of its body disjuncts
        args = tuple(fm.substitute_expr(a, binding) for a in atom.args)
        for i, disjunct in enumerate(self.instantiate(atom.name, args, skolemize=False)):
            new_exist = exist | disjunct.existentials
            new_con = disjunct.spatial + rest
            new_pure = con_pure + disjunct.pure.atoms
            mark = len(nodes)
            nodes.append(
                self.builder.node("fold", f"{fm.pretty(atom.to_formula())} via case {i + 1}")
            )
            res = self.match(
                ant_pure, ant_atoms, new_con, new_pure, new_exist, binding, depth - 1, nodes
            )
            if not isinstance(res, str):
                return res
            if res == "depth-exceeded":
                nearest = res
            del nodes[mark:]
        return nearest if nearest != "pred-match" else "fold"

    # full proofs -----------------------------------------------------------

    def prove(self, ant: SymHeap, con: SymHeap, depth: int) -> EntailmentResult:
        for h in (ant, con):
            for a in h.spatial:
                if isinstance(a, PredAtom):
                    self.pred_def(a.name, len(a.args))
        # rename consequent existentials into the reserved namespace so they
        # can never alias antecedent symbols
        rename = {v: fm.Var(f"$?{i}") for i, v in enumerate(sorted(con.existentials), 1)}
        con_pure = tuple(
            (op, fm.substitute_expr(l, rename), fm.substitute_expr(r, rename))
            for op, l, r in con.pure.atoms
        )
        con_spatial = tuple(a.subst(rename) for a in con.spatial)
        exist = frozenset(v.name for v in rename.values())
        result = self._prove(ant, con_pure, con_spatial, exist, con.pretty(), depth)
        if isinstance(result, Proved):
            result.binding = {
                orig: result.binding[renamed.name]
                for orig, renamed in rename.items()
                if renamed.name in result.binding
            }
        return result

    def _prove(
        self,
        ant: SymHeap,
        con_pure: tuple,
        con_spatial: tuple[SpatialAtom, ...],
        exist: frozenset[str],
        con_text: str,
        depth: int,
    ) -> EntailmentResult:
        ant_pure = ant.sep_pure()
        if ant_pure.check_sat().status == UNSAT:
            node = self.builder.node("pure-contradiction", ant.pretty())
            return Proved(SymHeap.emp(), {}, node)
        nodes: list[ProofNode] = []
        con_sorted = tuple(sorted(con_spatial, key=_atom_key))
        res = self.match(ant_pure, ant.spatial, con_sorted, con_pure, exist, {}, depth, nodes)
        if not isinstance(res, str):
            leftover, binding = res
            frame = SymHeap(ant.pure, leftover, frozenset())
            root = self.builder.node("entail", f"{ant.pretty()} |- {con_text}", OK, nodes)
            return Proved(frame, binding, root)
        nearest = res
        # antecedent unfolding: case-split on the first predicate instance
        preds_in_ant = [a for a in ant.spatial if isinstance(a, PredAtom)]
        if preds_in_ant and depth > 0:
            inst = preds_in_ant[0]
            cases = unfold(ant, inst, self.preds, self.qfresh, prune=False)
            case_results: list[ProofNode] = list(nodes)
            frames: list[SymHeap] = []
            bindings: list[dict[str, fm.SymExpr]] = []
            all_ok = True
            for i, case in enumerate(cases):
                if not case.consistent():
                    case_results.append(
                        self.builder.node("unfold", f"case {i + 1}: {case.pretty()}", PRUNED)
                    )
                    continue
                sub = self._prove(case, con_pure, con_spatial, exist, con_text, depth - 1)
                case_results.append(
                    self.builder.node(
                        "unfold",
                        f"{fm.pretty(inst.to_formula())} case {i + 1}",
                        OK if isinstance(sub, Proved) else FAILED,
                        [sub.tree],
                    )
                )
                if isinstance(sub, Proved):
                    frames.append(sub.frame)
                    bindings.append(sub.binding)
                else:
                    all_ok = False
                    nearest = "unfold"
                    break
            if all_ok and frames:
                canon = {fm.pretty(fm.normalize(f.to_formula())) for f in frames}
                if len(canon) == 1:
                    root = self.builder.node(
                        "entail", f"{ant.pretty()} |- {con_text}", OK, case_results
                    )
                    return Proved(frames[0], bindings[0], root)
                nearest = "frame-mismatch-across-cases"
            nodes = case_results
        root = self.builder.node("entail", f"{ant.pretty()} |- {con_text}", FAILED, nodes)
        return Failed(ant.spatial, con_sorted, nearest, root)


def prove(
    antecedent: SymHeap,
    consequent: SymHeap,
    preds: Optional[dict[str, fm.PredDef]] = None,
    depth: int = DEFAULT_UNFOLD_DEPTH,
    builder: Optional[ProofBuilder] = None,
) -> EntailmentResult:
    """Decide antecedent |- consequent * frame; sound, deterministic."""
    table = preds if preds is not None else fm.builtin_preds()
    prover = _Prover(table, builder or ProofBuilder(), depth)
    return prover.prove(antecedent, consequent, depth)


def infer_frame(
    caller: SymHeap,
    precondition: SymHeap,
    preds: Optional[dict[str, fm.PredDef]] = None,
    depth: int = DEFAULT_UNFOLD_DEPTH,
    builder: Optional[ProofBuilder] = None,
) -> EntailmentResult:
    """Frame inference is entailment with the precondition as consequent; the
    frame is everything the match did not consume."""
    return prove(caller, precondition, preds, depth, builder)


def unfold(
    h: SymHeap,
    inst: PredAtom,
    preds: Optional[dict[str, fm.PredDef]] = None,
    fresh: Optional[FreshNames] = None,
    prune: bool = True,
) -> list[SymHeap]:
    """One SymHeap per body disjunct of ``inst``, existentials freshened.

    With prune=True, disjuncts whose pure part is unsatisfiable are dropped.
    """
    table = preds if preds is not None else fm.builtin_preds()
    fresh = fresh or FreshNames()
    d = table.get(inst.name)
    if d is None:
        raise UnknownPredicateError(f"unknown predicate '{inst.name}'")
    if len(d.params) != len(inst.args):
        raise UnknownPredicateError(
            f"predicate '{inst.name}' takes {len(d.params)} arguments, got {len(inst.args)}"
        )
    if inst not in h.spatial:
        raise UnknownPredicateError(f"predicate instance not present: {inst.name}")
    body = fm.substitute(d.body, dict(zip(d.params, inst.args)))
    base = h.without(inst)
    out: list[SymHeap] = []
    for disjunct in formula_to_symheaps(body, fresh, skolemize=True):
        merged = SymHeap(
            base.pure.extend(disjunct.pure),
            base.spatial + disjunct.spatial,
            base.existentials,
        )
        if prune and not merged.consistent():
            continue
        out.append(merged)
    return out
