"""Forward symbolic execution of term programs against their contracts.

States carry a stack store, a symbolic heap, and per-block local registries.
Heap requirements that fail become diagnostics, never exceptions; faulting
paths stop, leak paths continue with the lost chunk quarantined so each bug
is reported once.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

from . import formula as fm
from .arith import SAT, UNKNOWN, UNSAT, simplify_expr
from .entail import (
    Failed,
    FreshNames,
    PredAtom,
    Proved,
    PtoAtom,
    SymHeap,
    formula_to_symheaps,
    infer_frame,
    prove,
    unfold,
)
from .errors import NO_SPAN, Span, UnsupportedFormulaError
from .prooftree import FAILED, OK, PRUNED, ProofBuilder, ProofNode, ProofTree
from .termir import (
    Atom,
    Compound,
    FUNCTOR_TO_CMP,
    Int,
    SpanMap,
    Term,
    TList,
    emit_text,
    split_contracts,
    term_class_fields,
    term_functions,
    term_predicates,
    term_to_formula,
)

MEMORY_LEAK = "MemoryLeak"
UNREACHABLE_MEMORY = "UnreachableMemory"
INVALID_ACCESS = "InvalidAccess"
INVALID_FREE = "InvalidFree"
CONTRACT_VIOLATION = "ContractViolation"
INVARIANT_VIOLATION = "InvariantViolation"
UNKNOWN_KIND = "Unknown"

REFUTING_KINDS = (
    MEMORY_LEAK,
    UNREACHABLE_MEMORY,
    INVALID_ACCESS,
    INVALID_FREE,
    CONTRACT_VIOLATION,
    INVARIANT_VIOLATION,
)

VERIFIED, REFUTED, INCONCLUSIVE = "Verified", "Refuted", "Inconclusive"


@dataclass(frozen=True)
class Diagnostic:
    kind: str
    span: Span
    message: str
    counterexample: str = ""
    proof_ref: int = -1

    def format(self, filename: str = "") -> str:
        where = f"{filename}:{self.span}" if filename else str(self.span)
        out = f"{where}: {self.kind}: {self.message}"
        if self.counterexample:
            out += f" [counter-example: {self.counterexample}]"
        return out


@dataclass
class Stats:
    rule_applications: int = 0
    branches: int = 0
    seconds: float = 0.0


@dataclass
class Verdict:
    function: str
    status: str
    diagnostics: list[Diagnostic]
    proof: ProofTree
    stats: Stats
    inconclusive_reason: str = ""


@dataclass
class SymState:
    store: dict[str, fm.SymExpr]
    heap: SymHeap
    path: list[Span]
    scopes: list[set[str]]
    node: ProofNode
    tainted: bool = False
    taint_reason: str = ""
    partial_heap: bool = False
    # chunks already diagnosed as lost: they stay allocated (a leak does not
    # deallocate) but are never reported twice
    reported: frozenset = frozenset()

    def fork(self, node: Optional[ProofNode] = None) -> "SymState":
        return SymState(
            dict(self.store),
            self.heap,
            list(self.path),
            [set(s) for s in self.scopes],
            node if node is not None else self.node,
            self.tainted,
            self.taint_reason,
            self.partial_heap,
            self.reported,
        )

    def taint(self, reason: str) -> None:
        if not self.tainted:
            self.tainted = True
            self.taint_reason = reason


class _PathFault(Exception):
    """Raised to abandon the current path after a fault diagnostic."""


@dataclass(frozen=True)
class Contract:
    name: str
    params: tuple[str, ...]
    pre: fm.Formula
    post: fm.Formula


def contract_table(program: Term) -> dict[str, Contract]:
    """Bare-name contract lookup; the first definition of a name wins."""
    fields = term_class_fields(program)
    out: dict[str, Contract] = {}
    for fn in term_functions(program):
        name = fn.args[0].name  # type: ignore[union-attr]
        if name in out:
            continue
        pre, _, post = split_contracts(fn, fields)
        params = tuple(p.args[0].name for p in fn.args[2].items)  # type: ignore[union-attr]
        out[name] = Contract(name, params, pre, post)
    return out


# --------------------------------------------------------------------------
# the engine
# --------------------------------------------------------------------------


class _Engine:
    def __init__(
        self,
        fn: Compound,
        contracts: dict[str, Contract],
        preds: dict[str, fm.PredDef],
        class_fields: dict[str, tuple[str, ...]],
        depth: int,
        span_map: Optional[SpanMap] = None,
    ):
        self.fn = fn
        self.contracts = contracts
        self.preds = preds
        self.class_fields = class_fields
        self.depth = depth
        self.span_map = span_map or {}
        self.fresh = FreshNames()
        self.builder = ProofBuilder()
        self.diagnostics: list[Diagnostic] = []
        self.taints: list[str] = []
        self.stats = Stats()

    # -- small helpers -------------------------------------------------------

    def span_of(self, t: Term) -> Span:
        return self.span_map.get(id(t), NO_SPAN)  # type: ignore[return-value]

    def counterexample(self, state: SymState) -> str:
        res = state.heap.sep_pure().check_sat()
        if res.status != SAT or res.witness is None:
            return ""
        binds = ", ".join(f"{k}={v}" for k, v in sorted(res.witness.items()) if "$" not in k)
        cells = "; ".join(fm.pretty(a.to_formula()) for a in state.heap.sorted_spatial())
        out = f"store: {binds or 'any'}"
        if cells:
            out += f"; heap: {cells}"
        return out

    def taint_state(self, state: SymState, reason: str) -> None:
        state.taint(reason)
        self.taints.append(reason)

    def diag(
        self,
        state: SymState,
        kind: str,
        span: Span,
        message: str,
        node: Optional[ProofNode] = None,
    ) -> None:
        if state.tainted:
            # evidence from a tainted path is unreliable either way
            self.taints.append(f"suppressed {kind} on tainted path: {message}")
            return
        ref = node.id if node is not None else -1
        self.diagnostics.append(
            Diagnostic(kind, span, message, self.counterexample(state), ref)
        )

    def fault(self, state: SymState, kind: str, span: Span, message: str) -> None:
        node = self.builder.node("fault", message, FAILED)
        state.node.children.append(node)
        self.diag(state, kind, span, message, node)
        raise _PathFault()

    def ambiguous_or_fault(self, state: SymState, addr: fm.SymExpr, kind: str, span: Span, message: str) -> None:
        """Fault when the address is provably outside the heap; otherwise the
        access may or may not hit a cell, which only taints the verdict."""
        pure = state.heap.sep_pure()
        provably_absent = True
        for atom in state.heap.spatial:
            if isinstance(atom, PredAtom):
                provably_absent = False  # a predicate may hide the cell
                break
            if not pure.distinct(addr, atom.loc):
                provably_absent = False
                break
        if provably_absent:
            self.fault(state, kind, span, message)
        self.taint_state(state, f"{message} (address not decidable)")
        raise _PathFault()

    def note(self, state: SymState, rule: str, text: str, outcome: str = OK) -> ProofNode:
        node = self.builder.node(rule, text, outcome)
        state.node.children.append(node)
        self.stats.rule_applications += 1
        return node

    def declare(self, state: SymState, name: str) -> None:
        if name not in state.store:
            state.scopes[-1].add(name)

    def fresh_sym(self, hint: str) -> fm.Var:
        return fm.Var(self.fresh.var(hint))

    # -- heap access ----------------------------------------------------------

    def find_cell(self, state: SymState, addr: fm.SymExpr) -> Optional[PtoAtom]:
        pure = state.heap.sep_pure()
        for atom in state.heap.spatial:
            if isinstance(atom, PtoAtom) and pure.equal(atom.loc, addr):
                return atom
        return None

    def try_unfold_at(self, state: SymState, addr: fm.SymExpr, span: Span) -> list[SymState]:
        """Expose a cell hidden in a predicate instance whose root is addr."""
        pure = state.heap.sep_pure()
        for atom in state.heap.spatial:
            if isinstance(atom, PredAtom) and atom.args and pure.equal(atom.args[0], addr):
                cases = unfold(state.heap, atom, self.preds, self.fresh, prune=True)
                out = []
                for i, case in enumerate(cases):
                    child = self.note(state, "unfold", f"{fm.pretty(atom.to_formula())} case {i + 1}")
                    st = state.fork(child)
                    st.heap = case
                    out.append(st)
                return out
        return []

    def resolve_cell(
        self, state: SymState, addr: fm.SymExpr, span: Span
    ) -> Optional[PtoAtom]:
        """Find the cell at addr, unfolding a predicate rooted there if needed."""
        cell = self.find_cell(state, addr)
        if cell is None:
            forked = self.try_unfold_at(state, addr, span)
            if len(forked) == 1:
                state.heap = forked[0].heap
                cell = self.find_cell(state, addr)
        return cell

    def read_cell(self, state: SymState, addr: fm.SymExpr, span: Span, what: str) -> fm.SymExpr:
        if state.heap.pure.equal(addr, fm.Nil()):
            self.fault(state, INVALID_ACCESS, span, f"{what} dereferences nil")
        cell = self.resolve_cell(state, addr, span)
        if cell is not None:
            return cell.val
        if state.partial_heap:
            self.taint_state(state, f"{what} reads memory not covered by the loop invariant")
            return self.fresh_sym("u")
        message = f"{what} reads unallocated location {fm.pretty_expr(addr)}"
        if self._provably_absent(state, addr):
            self.fault(state, INVALID_ACCESS, span, message)
        self.taint_state(state, f"{message} (address not decidable)")
        return self.fresh_sym("u")

    def _provably_absent(self, state: SymState, addr: fm.SymExpr) -> bool:
        pure = state.heap.sep_pure()
        for atom in state.heap.spatial:
            if isinstance(atom, PredAtom):
                return False  # a predicate instance may hide the cell
            if not pure.distinct(addr, atom.loc):
                return False
        return True

    def write_cell(self, state: SymState, addr: fm.SymExpr, value: fm.SymExpr, span: Span) -> None:
        if state.heap.pure.equal(addr, fm.Nil()):
            self.fault(state, INVALID_ACCESS, span, "write dereferences nil")
        cell = self.resolve_cell(state, addr, span)
        if cell is None:
            message = f"write to unallocated location {fm.pretty_expr(addr)}"
            if not state.partial_heap and self._provably_absent(state, addr):
                self.fault(state, INVALID_ACCESS, span, message)
            self.taint_state(state, f"{message} (address not decidable)")
            raise _PathFault()
        old = cell.val
        state.heap = state.heap.replace_atom(cell, PtoAtom(cell.loc, value))
        self.leak_check(state, [old], span)

    # -- reachability and leaks ------------------------------------------------

    def _reachable_atoms(self, state: SymState) -> set[int]:
        """Indices of spatial atoms reachable from the store roots."""
        pure = state.heap.sep_pure()
        atoms = list(state.heap.spatial)
        values: list[fm.SymExpr] = list(state.store.values())
        reached: set[int] = set()
        changed = True

        def expand(v: fm.SymExpr) -> list[fm.SymExpr]:
            if isinstance(v, fm.Record):
                out = []
                for _, x in v.fields:
                    out.extend(expand(x))
                return out
            return [v]

        flat: list[fm.SymExpr] = []
        for v in values:
            flat.extend(expand(v))
        while changed:
            changed = False
            for i, atom in enumerate(atoms):
                if i in reached:
                    continue
                anchors = [atom.loc] if isinstance(atom, PtoAtom) else list(atom.args)
                if any(pure.equal(a, v) for a in anchors for v in flat):
                    reached.add(i)
                    if isinstance(atom, PtoAtom):
                        flat.extend(expand(atom.val))
                    else:
                        flat.extend(atom.args)
                    changed = True
        return reached

    def check_reachability(self, state: SymState, span: Span, origin: str) -> None:
        if state.partial_heap:
            return  # framed-out cells may still root these chunks
        reached = self._reachable_atoms(state)
        atoms = list(state.heap.spatial)
        lost = [
            a for i, a in enumerate(atoms) if i not in reached and a not in state.reported
        ]
        for a in lost:
            node = self.note(state, "leak-check", fm.pretty(a.to_formula()), FAILED)
            self.diag(
                state,
                UNREACHABLE_MEMORY,
                span,
                f"chunk {fm.pretty(a.to_formula())} is unreachable {origin}",
                node,
            )
            state.reported = state.reported | {a}
        if not lost:
            self.note(state, "leak-check", origin, OK)

    def leak_check(self, state: SymState, old_values: list[fm.SymExpr], span: Span) -> None:
        """After an overwrite: chunks only rooted by the old value leak."""
        if state.partial_heap:
            return
        candidates = []
        for v in old_values:
            vs = [v]
            if isinstance(v, fm.Record):
                vs = [x for _, x in v.fields]
            for x in vs:
                cell = self.find_cell(state, x)
                if cell is not None:
                    candidates.append(x)
                else:
                    for atom in state.heap.spatial:
                        if isinstance(atom, PredAtom) and atom.args and state.heap.pure.equal(
                            atom.args[0], x
                        ):
                            candidates.append(x)
                            break
        if not candidates:
            return
        reached = self._reachable_atoms(state)
        atoms = list(state.heap.spatial)
        pure = state.heap.sep_pure()
        for x in candidates:
            for i, atom in enumerate(atoms):
                if i in reached or atom in state.reported:
                    continue
                anchors = [atom.loc] if isinstance(atom, PtoAtom) else list(atom.args[:1])
                if any(pure.equal(a, x) for a in anchors):
                    node = self.note(state, "leak-check", fm.pretty(atom.to_formula()), FAILED)
                    self.diag(
                        state,
                        MEMORY_LEAK,
                        span,
                        f"last reference to chunk {fm.pretty(atom.to_formula())} was overwritten",
                        node,
                    )
                    state.reported = state.reported | {atom}
                    # follow-on losses (a lost record may root further chunks)
                    if isinstance(atom, PtoAtom):
                        self.leak_check(state, [atom.val], span)

    # -- expression evaluation --------------------------------------------------

    def eval(self, e: Term, state: SymState, span: Span) -> fm.SymExpr:
        if isinstance(e, Int):
            return fm.IntLit(e.value)
        if isinstance(e, Atom):
            if e.name == "nil":
                return fm.Nil()
            if e.name not in state.store:
                self.fault(state, INVALID_ACCESS, span, f"read of undeclared variable '{e.name}'")
            return state.store[e.name]
        assert isinstance(e, Compound)
        f = e.functor
        if f == "oa":
            return self.field_read(e, state, span)
        if f == "mem":
            addr = self.eval_address(e.args[0], state, span)
            return self.read_cell(state, addr, span, "heap read")
        if f in ("add", "sub", "mul"):
            l = self.eval(e.args[0], state, span)
            r = self.eval(e.args[1], state, span)
            if isinstance(l, fm.Record) or isinstance(r, fm.Record):
                self.fault(state, INVALID_ACCESS, span, "arithmetic on a record value")
            op = {"add": "+", "sub": "-", "mul": "*"}[f]
            return simplify_expr(fm.ArithExpr(op, l, r), state.heap.pure)
        if f == "funcall":
            return self.call(e, state, span)
        self.fault(state, INVALID_ACCESS, span, f"bad expression {emit_text(e)}")
        raise AssertionError("unreachable")

    def eval_address(self, loc: Term, state: SymState, span: Span) -> fm.SymExpr:
        assert isinstance(loc, Compound) and loc.functor == "offset"
        base = self.eval(loc.args[0], state, span)
        if isinstance(base, fm.Record):
            self.fault(state, INVALID_ACCESS, span, "address arithmetic on a record")
        disp = 0
        if len(loc.args) == 2:
            d = loc.args[1]
            disp = d.value if isinstance(d, Int) else -d.args[1].value  # type: ignore[union-attr]
        if disp == 0:
            return base
        return simplify_expr(fm.OffsetOf(base, disp), state.heap.pure)

    def field_read(self, e: Compound, state: SymState, span: Span) -> fm.SymExpr:
        objname = e.args[0].name  # type: ignore[union-attr]
        fieldname = e.args[1].name  # type: ignore[union-attr]
        if objname not in state.store:
            self.fault(state, INVALID_ACCESS, span, f"read of undeclared variable '{objname}'")
        obj = state.store[objname]
        if state.heap.pure.equal(obj, fm.Nil()):
            self.fault(
                state, INVALID_ACCESS, span, f"field read '{objname}.{fieldname}' dereferences nil"
            )
        cell = self.resolve_cell(state, obj, span)
        if cell is None:
            message = f"field read '{objname}.{fieldname}' on unallocated object"
            if state.partial_heap:
                self.taint_state(
                    state, f"field read '{objname}.{fieldname}' outside the loop invariant"
                )
                return self.fresh_sym("u")
            if self._provably_absent(state, obj):
                self.fault(state, INVALID_ACCESS, span, message)
            self.taint_state(state, f"{message} (address not decidable)")
            return self.fresh_sym("u")
        val = cell.val
        if isinstance(val, fm.Record):
            m = val.field_map()
            if fieldname in m:
                return m[fieldname]
        self.fault(
            state,
            INVALID_ACCESS,
            span,
            f"field '{fieldname}' is not a component of the object at {fm.pretty_expr(obj)}",
        )
        raise AssertionError("unreachable")

    def field_write(self, e: Compound, value: fm.SymExpr, state: SymState, span: Span) -> None:
        objname = e.args[0].name  # type: ignore[union-attr]
        fieldname = e.args[1].name  # type: ignore[union-attr]
        if objname not in state.store:
            self.fault(state, INVALID_ACCESS, span, f"write to undeclared variable '{objname}'")
        obj = state.store[objname]
        if state.heap.pure.equal(obj, fm.Nil()):
            self.fault(
                state, INVALID_ACCESS, span, f"field write '{objname}.{fieldname}' dereferences nil"
            )
        cell = self.resolve_cell(state, obj, span)
        if cell is None:
            message = f"field write '{objname}.{fieldname}' on unallocated object"
            if not state.partial_heap and self._provably_absent(state, obj):
                self.fault(state, INVALID_ACCESS, span, message)
            self.taint_state(state, f"{message} (address not decidable)")
            raise _PathFault()
        old = cell.val
        if isinstance(old, fm.Record):
            kept = tuple((n, v) for n, v in old.fields if n != fieldname)
            newval = fm.Record(old.tag, kept + ((fieldname, value),))
            lost = [v for n, v in old.fields if n == fieldname]
        else:
            # the first field write displaces whatever scalar was there
            newval = fm.Record(None, ((fieldname, value),))
            lost = [old]
        state.heap = state.heap.replace_atom(cell, PtoAtom(cell.loc, newval))
        self.leak_check(state, lost, span)

    # -- contracts ---------------------------------------------------------------

    def call(self, e: Compound, state: SymState, span: Span) -> fm.SymExpr:
        name = e.args[0].name  # type: ignore[union-attr]
        actuals = (
            [self.eval(a, state, span) for a in e.args[1].items] if len(e.args) == 2 else []
        )
        contract = self.contracts.get(name)
        if contract is None:
            self.note(state, "call", f"{name} (unknown function, heap-neutral)")
            return self.fresh_sym("r")
        if len(actuals) != len(contract.params):
            self.fault(
                state,
                CONTRACT_VIOLATION,
                span,
                f"call to {name} with {len(actuals)} arguments, expected {len(contract.params)}",
            )
        sigma: dict[str, fm.SymExpr] = dict(zip(contract.params, actuals))
        ghosts = (fm.free_vars(contract.pre) | fm.free_vars(contract.post)) - set(contract.params)
        for g in sorted(ghosts):
            sigma[g] = self.fresh_sym("g")
        pre_inst = fm.substitute(contract.pre, sigma)
        try:
            pre_heaps = formula_to_symheaps(pre_inst, self.fresh, skolemize=False)
        except UnsupportedFormulaError as ex:
            self.taint_state(state, f"call to {name}: {ex.message}")
            return self.fresh_sym("r")
        last_failure = None
        for pre_heap in pre_heaps:
            res = infer_frame(state.heap, pre_heap, self.preds, self.depth, self.builder)
            if isinstance(res, Proved):
                node = self.builder.node(
                    "frame", f"call {name}: frame {res.frame.pretty()}", OK, [res.tree]
                )
                state.node.children.append(node)
                post_inst = fm.substitute(contract.post, {**sigma, **res.binding})
                try:
                    post_heaps = formula_to_symheaps(post_inst, self.fresh, skolemize=True)
                except UnsupportedFormulaError as ex:
                    self.taint_state(state, f"call to {name}: {ex.message}")
                    return self.fresh_sym("r")
                post_heap = post_heaps[0]
                if len(post_heaps) > 1:
                    self.taint_state(
                        state,
                        f"call to {name}: disjunctive postcondition narrowed to its first case",
                    )
                state.heap = SymHeap(
                    res.frame.pure.extend(post_heap.pure),
                    res.frame.spatial + post_heap.spatial,
                    frozenset(),
                )
                return self.fresh_sym("r")
            last_failure = res
        node = self.builder.node(
            "frame",
            f"call {name}: precondition not satisfied",
            FAILED,
            [last_failure.tree] if last_failure is not None else [],
        )
        state.node.children.append(node)
        residue = (
            ", ".join(fm.pretty(a.to_formula()) for a in last_failure.residue_consequent)
            if isinstance(last_failure, Failed)
            else ""
        )
        self.diag(
            state,
            CONTRACT_VIOLATION,
            span,
            f"call to {name}: unmatched precondition part: {residue or 'pure conditions'}",
            node,
        )
        raise _PathFault()

    # -- conditions ---------------------------------------------------------------

    def cond_cases(
        self, c: Term, state: SymState, span: Span, negate: bool
    ) -> list[list[tuple[str, fm.SymExpr, fm.SymExpr]]]:
        """DNF cases of the condition (or its negation) with operands evaluated."""

        def conv(t: Term) -> tuple:
            assert isinstance(t, Compound)
            if t.functor in ("and", "or"):
                return (t.functor, conv(t.args[0]), conv(t.args[1]))
            op = FUNCTOR_TO_CMP[t.functor]
            l = self.eval(t.args[0], state, span)
            r = self.eval(t.args[1], state, span)
            return ("cmp", op, l, r)

        def pos(n: tuple) -> list[list]:
            if n[0] == "and":
                return [a + b for a in pos(n[1]) for b in pos(n[2])]
            if n[0] == "or":
                return pos(n[1]) + pos(n[2])
            return [[(n[1], n[2], n[3])]]

        def neg(n: tuple) -> list[list]:
            if n[0] == "and":
                return neg(n[1]) + neg(n[2])
            if n[0] == "or":
                return [a + b for a in neg(n[1]) for b in neg(n[2])]
            return [[(fm.NEGATED_CMP[n[1]], n[2], n[3])]]

        tree = conv(c)
        return neg(tree) if negate else pos(tree)

    def assume_cases(
        self, state: SymState, cases: list[list[tuple[str, fm.SymExpr, fm.SymExpr]]], label: str
    ) -> list[SymState]:
        out = []
        for i, case in enumerate(cases):
            text = " && ".join(fm.pretty(fm.PureAtom(op, l, r)) for op, l, r in case) or "true"
            heap = state.heap
            for op, l, r in case:
                heap = heap.add_pure(op, l, r)
            status = heap.sep_pure().check_sat().status
            if status == UNSAT:
                node = self.builder.node("assume", f"{label} case {text}", PRUNED)
                state.node.children.append(node)
                continue
            node = self.builder.node("assume", f"{label} case {text}", OK)
            state.node.children.append(node)
            st = state.fork(node)
            st.heap = heap
            if status == UNKNOWN:
                self.taint_state(st, f"feasibility of path condition '{text}' is undecided")
            out.append(st)
        return out

    # -- statements ------------------------------------------------------------------

    def exec_stmt(self, s: Term, state: SymState) -> list[SymState]:
        span = self.span_of(s)
        state.path.append(span)
        try:
            if isinstance(s, TList):
                return self.exec_block(list(s.items), state)
            assert isinstance(s, Compound)
            f = s.functor
            if f == "assign":
                return self.exec_assign(s, state, span)
            if f == "new":
                return self.exec_new(s, state, span)
            if f == "delete":
                return self.exec_delete(s, state, span)
            if f == "funcall":
                self.note(state, "stmt", emit_text(s))
                self.call(s, state, span)
                return [state]
            if f == "assert":
                return self.exec_assert(s, state, span)
            if f == "ite":
                return self.exec_ite(s, state, span)
            if f == "while":
                return self.exec_while(s, state, span)
        except _PathFault:
            return []
        raise AssertionError(f"statement shape not checked: {s!r}")

    def exec_assign(self, s: Compound, state: SymState, span: Span) -> list[SymState]:
        self.note(state, "stmt", emit_text(s))
        value = self.eval(s.args[1], state, span)
        lhs = s.args[0]
        if isinstance(lhs, Atom):
            old = state.store.get(lhs.name)
            self.declare(state, lhs.name)
            state.store[lhs.name] = value
            if old is not None:
                self.leak_check(state, [old], span)
            return [state]
        assert isinstance(lhs, Compound)
        if lhs.functor == "oa":
            self.field_write(lhs, value, state, span)
            return [state]
        if lhs.functor == "mem":
            addr = self.eval_address(lhs.args[0], state, span)
            self.write_cell(state, addr, value, span)
            return [state]
        raise AssertionError(f"bad assignment target {lhs!r}")

    def exec_new(self, s: Compound, state: SymState, span: Span) -> list[SymState]:
        self.note(state, "stmt", emit_text(s))
        addr = self.fresh_sym("a")
        content = self.fresh_sym("v")
        # persist freshness so absence stays provable after a later delete
        heap = state.heap.add_pure("!=", addr, fm.Nil())
        for atom in heap.spatial:
            if isinstance(atom, PtoAtom):
                heap = heap.add_pure("!=", addr, atom.loc)
        state.heap = heap
        target = s.args[0]
        if isinstance(target, Atom):
            old = state.store.get(target.name)
            self.declare(state, target.name)
            state.heap = state.heap.with_atom(PtoAtom(addr, content))
            state.store[target.name] = addr
            if old is not None:
                self.leak_check(state, [old], span)
        else:
            state.heap = state.heap.with_atom(PtoAtom(addr, content))
            self.field_write(target, addr, state, span)  # type: ignore[arg-type]
        return [state]

    def exec_delete(self, s: Compound, state: SymState, span: Span) -> list[SymState]:
        self.note(state, "stmt", emit_text(s))
        target = s.args[0]
        value = self.eval(target, state, span)
        if state.heap.pure.equal(value, fm.Nil()):
            self.fault(state, INVALID_FREE, span, "delete of nil")
        cell = self.resolve_cell(state, value, span)
        if cell is None:
            message = f"delete of unallocated location {fm.pretty_expr(value)}"
            if not state.partial_heap and self._provably_absent(state, value):
                self.fault(state, INVALID_FREE, span, message)
            self.taint_state(state, f"{message} (address not decidable)")
            return []
        state.heap = state.heap.without(cell)
        self.leak_check(state, [cell.val], span)
        return [state]

    def exec_assert(self, s: Compound, state: SymState, span: Span) -> list[SymState]:
        goal = term_to_formula(s.args[0], self.class_fields)
        inst = self.instantiate_formula(goal, state)
        try:
            goals = formula_to_symheaps(inst, self.fresh, skolemize=False)
        except UnsupportedFormulaError as ex:
            self.taint_state(state, f"assert: {ex.message}")
            return [state]
        for goal_heap in goals:
            res = prove(state.heap, goal_heap, self.preds, self.depth, self.builder)
            if isinstance(res, Proved):
                node = self.builder.node("assert", fm.pretty(goal), OK, [res.tree])
                state.node.children.append(node)
                return [state]
        node = self.builder.node("assert", fm.pretty(goal), FAILED, [res.tree])
        state.node.children.append(node)
        self.diag(state, CONTRACT_VIOLATION, span, f"assertion not established: {fm.pretty(goal)}", node)
        return []

    def instantiate_formula(self, f: fm.Formula, state: SymState) -> fm.Formula:
        mapping: dict[str, fm.SymExpr] = dict(state.store)
        for g in sorted(fm.free_vars(f) - set(mapping)):
            mapping[g] = self.fresh_sym("g")
        return fm.substitute(f, mapping)

    def exec_ite(self, s: Compound, state: SymState, span: Span) -> list[SymState]:
        self.note(state, "stmt", f"ite({emit_text(s.args[0])}, ...)")
        try:
            then_cases = self.cond_cases(s.args[0], state, span, negate=False)
            else_cases = self.cond_cases(s.args[0], state, span, negate=True)
        except _PathFault:
            return []
        out: list[SymState] = []
        for st in self.assume_cases(state, then_cases, "if-then"):
            out.extend(self.exec_block(list(s.args[1].items), st))  # type: ignore[union-attr]
        for st in self.assume_cases(state, else_cases, "if-else"):
            if len(s.args) == 3:
                out.extend(self.exec_block(list(s.args[2].items), st))  # type: ignore[union-attr]
            else:
                out.append(st)
        return out

    def exec_while(self, s: Compound, state: SymState, span: Span) -> list[SymState]:
        self.note(state, "stmt", f"while({emit_text(s.args[0])}, ...)")
        cond_term = s.args[0]
        inv_formula = term_to_formula(s.args[1].args[0], self.class_fields)  # type: ignore[union-attr]
        body = list(s.args[2].items)  # type: ignore[union-attr]

        # entry: current state must provide the invariant footprint
        inv_entry = self.instantiate_formula(inv_formula, state)
        try:
            inv_heaps = formula_to_symheaps(inv_entry, self.fresh, skolemize=False)
        except UnsupportedFormulaError as ex:
            self.taint_state(state, f"loop invariant: {ex.message}")
            return [state]
        entry = None
        for ih in inv_heaps:
            res = infer_frame(state.heap, ih, self.preds, self.depth, self.builder)
            if isinstance(res, Proved):
                entry = res
                break
        if entry is None:
            node = self.builder.node("invariant", "entry check failed", FAILED, [res.tree])
            state.node.children.append(node)
            self.diag(
                state,
                INVARIANT_VIOLATION,
                span,
                f"loop invariant does not hold on entry: {fm.pretty(inv_formula)}",
                node,
            )
            return []
        frame = entry.frame
        node = self.builder.node("invariant", f"entry ok, frame {frame.pretty()}", OK, [entry.tree])
        state.node.children.append(node)

        modified = sorted(_assigned_vars(body))

        def havoc(st: SymState) -> None:
            for v in modified:
                if v in st.store:
                    st.store[v] = self.fresh_sym("h")

        # body: havoc modified vars, assume invariant and condition, run once
        body_state = state.fork()
        havoc(body_state)
        inv_assumed = self.instantiate_formula(inv_formula, body_state)
        try:
            assumed = formula_to_symheaps(inv_assumed, self.fresh, skolemize=True)
        except UnsupportedFormulaError as ex:
            self.taint_state(state, f"loop invariant: {ex.message}")
            return [state]
        preserved_failures = 0
        for ah in assumed:
            bs = body_state.fork()
            bs.heap = ah
            bs.partial_heap = True
            try:
                cases = self.cond_cases(cond_term, bs, span, negate=False)
            except _PathFault:
                continue
            for st in self.assume_cases(bs, cases, "loop"):
                for terminal in self.exec_block(body, st):
                    inv_back = self.instantiate_formula(inv_formula, terminal)
                    try:
                        goals = formula_to_symheaps(inv_back, self.fresh, skolemize=False)
                    except UnsupportedFormulaError as ex:
                        self.taint_state(terminal, f"loop invariant: {ex.message}")
                        continue
                    ok = False
                    for gh in goals:
                        pres = prove(terminal.heap, gh, self.preds, self.depth, self.builder)
                        if isinstance(pres, Proved):
                            leftovers = pres.frame.spatial
                            if leftovers:
                                node = self.builder.node(
                                    "invariant", "preserved with leftover chunks", FAILED, [pres.tree]
                                )
                                terminal.node.children.append(node)
                                for a in leftovers:
                                    self.diag(
                                        terminal,
                                        MEMORY_LEAK,
                                        span,
                                        f"loop body allocates {fm.pretty(a.to_formula())} "
                                        "not claimed by the invariant",
                                        node,
                                    )
                            else:
                                node = self.builder.node("invariant", "preserved", OK, [pres.tree])
                                terminal.node.children.append(node)
                            ok = True
                            break
                    if not ok:
                        preserved_failures += 1
                        node = self.builder.node("invariant", "preservation failed", FAILED, [pres.tree])
                        terminal.node.children.append(node)
                        self.diag(
                            terminal,
                            INVARIANT_VIOLATION,
                            span,
                            f"loop invariant not preserved: {fm.pretty(inv_formula)}",
                            node,
                        )
                    if terminal.tainted and not state.tainted:
                        self.taint_state(state, terminal.taint_reason)

        # after the loop: invariant * frame, condition negated
        after = state.fork()
        havoc(after)
        inv_after = self.instantiate_formula(inv_formula, after)
        try:
            after_heaps = formula_to_symheaps(inv_after, self.fresh, skolemize=True)
        except UnsupportedFormulaError as ex:
            self.taint_state(state, f"loop invariant: {ex.message}")
            return [state]
        out: list[SymState] = []
        for ah in after_heaps:
            st = after.fork()
            st.heap = SymHeap(
                frame.pure.extend(ah.pure), frame.spatial + ah.spatial, frozenset()
            )
            try:
                cases = self.cond_cases(cond_term, st, span, negate=True)
            except _PathFault:
                continue
            out.extend(self.assume_cases(st, cases, "loop-exit"))
        return out

    # -- blocks and functions -----------------------------------------------------

    def exec_block(self, stmts: list[Term], state: SymState) -> list[SymState]:
        state.scopes.append(set())
        states = [state]
        for s in stmts:
            nxt: list[SymState] = []
            for st in states:
                nxt.extend(self.exec_stmt(s, st))
            states = nxt
            if not states:
                break
        out = []
        last_span = self.span_of(stmts[-1]) if stmts else NO_SPAN
        for st in states:
            dying = st.scopes.pop()
            for name in sorted(dying):
                st.store.pop(name, None)
            self.check_reachability(st, last_span, "at block exit")
            out.append(st)
        return out

    def verify(self) -> Verdict:
        t0 = time.perf_counter()
        name = self.fn.args[0].name  # type: ignore[union-attr]
        pre, body, post = split_contracts(self.fn, self.class_fields)
        params = [p.args[0].name for p in self.fn.args[2].items]  # type: ignore[union-attr]
        root = self.builder.node("function", name)

        store: dict[str, fm.SymExpr] = {}
        for p in params:
            store[p] = self.fresh_sym("p")
        ghosts = sorted((fm.free_vars(pre) | fm.free_vars(post)) - set(params))
        gmap = {g: self.fresh_sym("g") for g in ghosts}

        try:
            pre_inst = fm.substitute(pre, {**store, **gmap})
            init_heaps = formula_to_symheaps(pre_inst, self.fresh, skolemize=True)
        except UnsupportedFormulaError as ex:
            self.stats.seconds = time.perf_counter() - t0
            return Verdict(
                name,
                INCONCLUSIVE,
                [],
                ProofTree(root),
                self.stats,
                f"precondition outside the supported fragment: {ex.message}",
            )

        terminals: list[SymState] = []
        for ih in init_heaps:
            if not ih.consistent():
                root.children.append(self.builder.node("assume", "precondition case", PRUNED))
                continue
            node = self.builder.node("assume", f"precondition {ih.pretty()}", OK)
            root.children.append(node)
            st = SymState(dict(store), ih, [], [set(params)], node)
            terminals.extend(self.exec_block(list(body), st))
        self.stats.branches = max(0, len(terminals) - 1)

        for st in terminals:
            post_inst = fm.substitute(post, {**st.store, **gmap})
            try:
                goals = formula_to_symheaps(post_inst, self.fresh, skolemize=False)
            except UnsupportedFormulaError as ex:
                self.taint_state(st, f"postcondition outside the supported fragment: {ex.message}")
                continue
            proved = None
            last = None
            for gh in goals:
                res = prove(st.heap, gh, self.preds, self.depth, self.builder)
                last = res
                if isinstance(res, Proved):
                    proved = res
                    break
            if proved is None:
                node = self.builder.node("postcondition", fm.pretty(post), FAILED, [last.tree])
                st.node.children.append(node)
                residue = (
                    ", ".join(fm.pretty(a.to_formula()) for a in last.residue_consequent)
                    if isinstance(last, Failed)
                    else ""
                )
                self.diag(
                    st,
                    CONTRACT_VIOLATION,
                    self.span_of(self.fn),
                    f"postcondition not established; unmatched: {residue or fm.pretty(post)}",
                    node,
                )
            else:
                node = self.builder.node("postcondition", fm.pretty(post), OK, [proved.tree])
                st.node.children.append(node)
                for a in proved.frame.spatial:
                    if a in st.reported:
                        continue
                    leak_node = self.builder.node("leak-check", fm.pretty(a.to_formula()), FAILED)
                    st.node.children.append(leak_node)
                    self.diag(
                        st,
                        MEMORY_LEAK,
                        self.span_of(self.fn),
                        f"chunk {fm.pretty(a.to_formula())} is still allocated at return "
                        "and not claimed by the postcondition",
                        leak_node,
                    )
        self.stats.seconds = time.perf_counter() - t0
        seen = set()
        unique: list[Diagnostic] = []
        for d in self.diagnostics:
            key = (d.kind, d.span, d.message)
            if key not in seen:
                seen.add(key)
                unique.append(d)
        refuting = [d for d in unique if d.kind in REFUTING_KINDS]
        if refuting:
            status = REFUTED
        elif self.taints:
            status = INCONCLUSIVE
        else:
            status = VERIFIED
        return Verdict(
            name,
            status,
            unique,
            ProofTree(root),
            self.stats,
            self.taints[0] if self.taints else "",
        )


def _assigned_vars(stmts: list[Term]) -> set[str]:
    out: set[str] = set()
    for s in stmts:
        if isinstance(s, TList):
            out |= _assigned_vars(list(s.items))
            continue
        if not isinstance(s, Compound):
            continue
        if s.functor == "assign" and isinstance(s.args[0], Atom):
            out.add(s.args[0].name)
        elif s.functor == "new" and isinstance(s.args[0], Atom):
            out.add(s.args[0].name)
        elif s.functor == "ite":
            out |= _assigned_vars(list(s.args[1].items))  # type: ignore[union-attr]
            if len(s.args) == 3:
                out |= _assigned_vars(list(s.args[2].items))  # type: ignore[union-attr]
        elif s.functor == "while":
            out |= _assigned_vars(list(s.args[2].items))  # type: ignore[union-attr]
    return out


# --------------------------------------------------------------------------
# public entry points
# --------------------------------------------------------------------------


def verify_function(
    fn: Compound,
    contracts: dict[str, Contract],
    preds: dict[str, fm.PredDef],
    class_fields: Optional[dict[str, tuple[str, ...]]] = None,
    depth: int = 4,
    span_map: Optional[SpanMap] = None,
) -> Verdict:
    engine = _Engine(fn, contracts, preds, class_fields or {}, depth, span_map)
    return engine.verify()


def verify_program_term(
    program: Term, depth: int = 4, span_map: Optional[SpanMap] = None
) -> list[Verdict]:
    """Verify every function in a checked program term, in source order."""
    preds = fm.check_pred_table(term_predicates(program))
    contracts = contract_table(program)
    fields = term_class_fields(program)
    out = []
    for fn in term_functions(program):
        out.append(verify_function(fn, contracts, preds, fields, depth, span_map))
    return out
