"""Decision procedure for the pure part of symbolic heaps.

Sound but deliberately incomplete: congruence closure over equalities, a
disequality table, and all-pairs shortest paths over unit-coefficient
difference constraints (x - y <= c).  Everything outside that fragment
degrades to Unknown, never to a wrong verdict.  Sat answers always carry a
verified witness.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .formula import (
    ArithExpr,
    FieldRef,
    IntLit,
    Nil,
    OffsetOf,
    Record,
    SymExpr,
    Var,
)

SAT, UNSAT, UNKNOWN = "sat", "unsat", "unknown"
YES, NO = "yes", "no"

_INF = float("inf")

PureAtomT = tuple[str, SymExpr, SymExpr]  # (op, left, right)


def canon_key(e: SymExpr):
    """Hashable canonical key; nil folds to 0 and offsets to additions."""
    if isinstance(e, IntLit):
        return ("int", e.value)
    if isinstance(e, Nil):
        return ("int", 0)
    if isinstance(e, Var):
        return ("var", e.name)
    if isinstance(e, FieldRef):
        return ("field", canon_key(e.obj), e.field)
    if isinstance(e, OffsetOf):
        return _canon_arith("+", canon_key(e.base), ("int", e.offset))
    if isinstance(e, ArithExpr):
        return _canon_arith(e.op, canon_key(e.left), canon_key(e.right))
    if isinstance(e, Record):
        return ("rec", e.tag, tuple(sorted((n, canon_key(v)) for n, v in e.fields)))
    raise TypeError(f"unknown expression {e!r}")


def _canon_arith(op: str, lk, rk):
    if lk[0] == "int" and rk[0] == "int":
        a, b = lk[1], rk[1]
        return ("int", a + b if op == "+" else a - b if op == "-" else a * b)
    if op in ("+", "*") and rk < lk:
        lk, rk = rk, lk
    return (op, lk, rk)


def linear_form(e: SymExpr) -> Optional[tuple[int, dict]]:
    """(constant, {leaf-key: coefficient}) for linear terms, else None."""
    if isinstance(e, (IntLit, Nil)):
        return (0 if isinstance(e, Nil) else e.value, {})
    if isinstance(e, OffsetOf):
        base = linear_form(e.base)
        if base is None:
            return None
        return (base[0] + e.offset, base[1])
    if isinstance(e, ArithExpr):
        lf, rf = linear_form(e.left), linear_form(e.right)
        if lf is None or rf is None:
            return None
        if e.op == "+":
            return (lf[0] + rf[0], _merge(lf[1], rf[1], 1))
        if e.op == "-":
            return (lf[0] - rf[0], _merge(lf[1], rf[1], -1))
        if e.op == "*":
            if not lf[1]:
                return (lf[0] * rf[0], {k: lf[0] * c for k, c in rf[1].items() if lf[0] * c})
            if not rf[1]:
                return (lf[0] * rf[0], {k: rf[0] * c for k, c in lf[1].items() if rf[0] * c})
            return None
        return None
    # opaque leaf (variable, field, record)
    try:
        return (0, {canon_key(e): 1})
    except TypeError:
        return None


def _merge(a: dict, b: dict, sign: int) -> dict:
    out = dict(a)
    for k, c in b.items():
        out[k] = out.get(k, 0) + sign * c
        if out[k] == 0:
            del out[k]
    return out


@dataclass(frozen=True)
class SatResult:
    status: str
    witness: Optional[dict[str, int]] = None


class _Solver:
    """Congruence closure + difference-constraint graph for one atom set."""

    ZERO = ("int", 0)

    def __init__(self, atoms: tuple[PureAtomT, ...]):
        self.atoms = atoms
        self.parent: dict = {}
        self.const: dict = {}  # rep -> pinned integer
        self.sig: dict = {}  # (functor-ish, child reps) -> rep
        self.parents_of: dict = {}  # rep -> set of composite keys using it
        self.contradiction = False
        self.diseqs: list[tuple] = []
        self.edges: list[tuple] = []  # (x, y, c) meaning x - y <= c, over keys
        self.opaque: list[PureAtomT] = []
        self._build()

    # union-find ------------------------------------------------------------

    def _intern(self, key) -> None:
        if key in self.parent:
            return
        self.parent[key] = key
        if key[0] == "int":
            self.const[key] = key[1]
        if key[0] in ("+", "-", "*", "field"):
            children = [k for k in key[1:] if isinstance(k, tuple)]
            for ch in children:
                self._intern(ch)
                self.parents_of.setdefault(self.find(ch), set()).add(key)
            self._update_sig(key)
        if key[0] == "rec":
            for _, vk in key[2]:
                self._intern(vk)
                self.parents_of.setdefault(self.find(vk), set()).add(key)
            self._update_sig(key)

    def _signature(self, key):
        if key[0] in ("+", "-", "*"):
            return (key[0], self.find(key[1]), self.find(key[2]))
        if key[0] == "field":
            return ("field", self.find(key[1]), key[2])
        if key[0] == "rec":
            return ("rec", key[1], tuple((n, self.find(vk)) for n, vk in key[2]))
        return None

    def _update_sig(self, key) -> None:
        sig = self._signature(key)
        if sig is None:
            return
        other = self.sig.get(sig)
        if other is None:
            self.sig[sig] = key
        elif self.find(other) != self.find(key):
            self._union(other, key)

    def find(self, key):
        root = key
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[key] != root:
            self.parent[key], key = root, self.parent[key]
        return root

    def _union(self, a, b) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        ca, cb = self.const.get(ra), self.const.get(rb)
        if ca is not None and cb is not None and ca != cb:
            self.contradiction = True
            return
        # keep constants as representatives so const lookups stay O(1)
        if cb is None and ca is not None:
            ra, rb = rb, ra
        self.parent[ra] = rb
        if self.const.get(ra) is not None:
            self.const[rb] = self.const[ra]
        moved = self.parents_of.pop(ra, set())
        self.parents_of.setdefault(rb, set()).update(moved)
        for composite in list(moved | self.parents_of.get(rb, set())):
            self._update_sig(composite)

    # construction ------------------------------------------------------------

    def _build(self) -> None:
        for op, l, r in self.atoms:
            try:
                lk, rk = canon_key(l), canon_key(r)
            except TypeError:
                self.opaque.append((op, l, r))
                continue
            self._intern(lk)
            self._intern(rk)
            if op == "==":
                self._union(lk, rk)
            elif op == "!=":
                self.diseqs.append((lk, rk))
            self._add_linear(op, l, r)
            if self.contradiction:
                return
        for lk, rk in self.diseqs:
            if self.find(lk) == self.find(rk):
                self.contradiction = True
                return

    def _add_linear(self, op: str, l: SymExpr, r: SymExpr) -> None:
        lf = linear_form(ArithExpr("-", l, r))
        if lf is None:
            if op != "!=":
                self.opaque.append((op, l, r))
            return
        const, coeffs = lf
        # normalize to: coeffs + const OP 0
        bounds = {"<": -1 - const, "<=": -const, "==": -const}
        if op in ("<", "<=", "=="):
            self._add_diff(coeffs, bounds[op])
            if op == "==":
                self._add_diff({k: -c for k, c in coeffs.items()}, const)
        elif op in (">", ">="):
            flipped = {k: -c for k, c in coeffs.items()}
            self._add_diff(flipped, const - 1 if op == ">" else const)
        elif op == "!=" and not coeffs and const == 0:
            self.contradiction = True

    def _add_diff(self, coeffs: dict, c: int) -> None:
        """Record sum(coeffs) <= c when it is a difference constraint."""
        if not coeffs:
            if 0 > c:
                self.contradiction = True
            return
        items = sorted(coeffs.items())
        if len(items) == 1:
            (k, a) = items[0]
            if a == 1:
                self.edges.append((k, self.ZERO, c))
                self._intern(k)
                self._intern(self.ZERO)
                return
            if a == -1:
                self.edges.append((self.ZERO, k, c))
                self._intern(k)
                self._intern(self.ZERO)
                return
        if len(items) == 2:
            (k1, a1), (k2, a2) = items
            if a1 == 1 and a2 == -1:
                self.edges.append((k1, k2, c))
                self._intern(k1)
                self._intern(k2)
                return
            if a1 == -1 and a2 == 1:
                self.edges.append((k2, k1, c))
                self._intern(k1)
                self._intern(k2)
                return
        self.opaque.append(("<=", _coeffs_expr(coeffs), IntLit(c)))

    # difference graph ----------------------------------------------------------

    def _graph(self):
        """All-pairs shortest paths over representative nodes."""
        reps = sorted({self.find(k) for k in self.parent})
        index = {r: i for i, r in enumerate(reps)}
        n = len(reps)
        dist = [[0 if i == j else _INF for j in range(n)] for i in range(n)]
        # x - y <= c: edge y -> x with weight c
        for x, y, c in self.edges:
            i, j = index[self.find(y)], index[self.find(x)]
            if c < dist[i][j]:
                dist[i][j] = c
        # pinned constants are mutual offsets from the zero node
        zero = self.find(self.ZERO) if self.ZERO in self.parent else None
        if zero is not None:
            zi = index[zero]
            for r in reps:
                cval = self.const.get(r)
                if cval is not None and r != zero:
                    ri = index[r]
                    dist[zi][ri] = min(dist[zi][ri], cval)
                    dist[ri][zi] = min(dist[ri][zi], -cval)
        for k in range(n):
            dk = dist[k]
            for i in range(n):
                dik = dist[i][k]
                if dik == _INF:
                    continue
                di = dist[i]
                for j in range(n):
                    alt = dik + dk[j]
                    if alt < di[j]:
                        di[j] = alt
        return reps, index, dist

    def check(self) -> SatResult:
        if self.contradiction:
            return SatResult(UNSAT)
        reps, index, dist = self._graph()
        n = len(reps)
        for i in range(n):
            if dist[i][i] < 0:
                return SatResult(UNSAT)
        for lk, rk in self.diseqs:
            i, j = index[self.find(lk)], index[self.find(rk)]
            if i == j:
                return SatResult(UNSAT)
            # dist bounds force equality exactly when both directions close at 0
            if dist[i][j] == 0 and dist[j][i] == 0:
                return SatResult(UNSAT)
        witness = self._witness(reps, index, dist)
        if witness is not None:
            return SatResult(SAT, witness)
        return SatResult(UNKNOWN)

    def provably_equal(self, lk, rk) -> bool:
        # interning is monotone: it extends the congruence closure with the
        # queried terms without changing satisfiability
        self._intern(lk)
        self._intern(rk)
        if self.contradiction:
            return True  # inconsistent context proves anything
        if self.find(lk) == self.find(rk):
            return True
        _, index, dist = self._graph()
        i, j = index[self.find(lk)], index[self.find(rk)]
        return dist[i][j] == 0 and dist[j][i] == 0

    # witness construction ----------------------------------------------------

    def _witness(self, reps, index, dist) -> Optional[dict[str, int]]:
        n = len(reps)
        if n == 0:
            return {} if self._verify({}) else None
        # supersource potentials: min over rows
        pot = [min(dist[i][j] for i in range(n)) for j in range(n)]
        zero = self.find(self.ZERO) if self.ZERO in self.parent else None
        shift = pot[index[zero]] if zero is not None else 0
        values = {r: int(pot[index[r]] - shift) for r in reps}
        for r in reps:
            if self.const.get(r) is not None:
                values[r] = self.const[r]
        if self._try(values):
            return self._assignment(values)
        # spread classes that no difference edge touches to break collisions
        touched = {self.find(k) for x, y, _ in self.edges for k in (x, y)}
        if zero is not None:
            touched.add(zero)
        spread = dict(values)
        step = 1_000_003
        for i, r in enumerate(sorted(set(reps) - touched)):
            if self.const.get(r) is None:
                spread[r] = step * (i + 1)
        if self._try(spread):
            return self._assignment(spread)
        return None

    def _assignment(self, values: dict) -> dict[str, int]:
        out = {}
        for key in self.parent:
            if key[0] == "var":
                out[key[1]] = values[self.find(key)]
        return out

    def _try(self, values: dict) -> bool:
        env = {}
        for key in self.parent:
            if key[0] in ("var", "field", "rec"):
                env[key] = values[self.find(key)]
        return self._verify(env)

    def _verify(self, env: dict) -> bool:
        for op, l, r in self.atoms:
            lv, rv = _eval_key(l, env), _eval_key(r, env)
            if lv is None or rv is None:
                return False
            if not _cmp(op, lv, rv):
                return False
        return True


def _coeffs_expr(coeffs: dict) -> SymExpr:
    # placeholder expression reconstructed only for opaque-atom bookkeeping
    out: Optional[SymExpr] = None
    for key, c in sorted(coeffs.items()):
        leaf: SymExpr = Var(str(key)) if key[0] != "var" else Var(key[1])
        piece = leaf if c == 1 else ArithExpr("*", IntLit(c), leaf)
        out = piece if out is None else ArithExpr("+", out, piece)
    return out if out is not None else IntLit(0)


def _eval_key(e: SymExpr, env: dict) -> Optional[int]:
    if isinstance(e, IntLit):
        return e.value
    if isinstance(e, Nil):
        return 0
    if isinstance(e, (Var, FieldRef, Record)):
        try:
            return env.get(canon_key(e))
        except TypeError:
            return None
    if isinstance(e, OffsetOf):
        b = _eval_key(e.base, env)
        return None if b is None else b + e.offset
    if isinstance(e, ArithExpr):
        l, r = _eval_key(e.left, env), _eval_key(e.right, env)
        if l is None or r is None:
            return None
        return l + r if e.op == "+" else l - r if e.op == "-" else l * r
    return None


def _cmp(op: str, a: int, b: int) -> bool:
    return {
        "==": a == b,
        "!=": a != b,
        "<": a < b,
        "<=": a <= b,
        ">": a > b,
        ">=": a >= b,
    }[op]


# --------------------------------------------------------------------------
# public immutable pure-constraint sets
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PureSet:
    atoms: tuple[PureAtomT, ...] = ()

    def add(self, op: str, left: SymExpr, right: SymExpr) -> "PureSet":
        return PureSet(self.atoms + ((op, left, right),))

    def extend(self, more: "PureSet") -> "PureSet":
        return PureSet(self.atoms + more.atoms)

    def _solver(self) -> _Solver:
        cached = _solver_cache.get(self.atoms)
        if cached is None:
            cached = _Solver(self.atoms)
            _solver_cache[self.atoms] = cached
            if len(_solver_cache) > 4096:
                _solver_cache.clear()
        return cached

    def check_sat(self) -> SatResult:
        return self._solver().check()

    def entails(self, op: str, left: SymExpr, right: SymExpr) -> str:
        """yes / no / unknown for this set entailing the comparison atom."""
        from .formula import NEGATED_CMP

        negated = self.add(NEGATED_CMP[op], left, right)
        res = negated.check_sat()
        if res.status == UNSAT:
            return YES
        if res.status == SAT:
            return NO
        return UNKNOWN

    def equal(self, a: SymExpr, b: SymExpr) -> bool:
        """Provable equality (congruence or zero-weight constraint cycle)."""
        try:
            ka, kb = canon_key(a), canon_key(b)
        except TypeError:
            return False
        if ka == kb:
            return True
        return self._solver().provably_equal(ka, kb)

    def distinct(self, a: SymExpr, b: SymExpr) -> bool:
        return self.entails("!=", a, b) == YES

    def const_of(self, e: SymExpr) -> Optional[int]:
        try:
            key = canon_key(e)
        except TypeError:
            return None
        if key[0] == "int":
            return key[1]
        solver = self._solver()
        if key not in solver.parent:
            return None
        return solver.const.get(solver.find(key))


_solver_cache: dict[tuple, _Solver] = {}


# --------------------------------------------------------------------------
# expression simplification
# --------------------------------------------------------------------------


def simplify_expr(e: SymExpr, ctx: Optional[PureSet] = None) -> SymExpr:
    """Constant-fold and substitute context-known constants to a fixed point."""
    ctx = ctx or PureSet()
    cur = e
    for _ in range(32):
        nxt = _simp(cur, ctx)
        if nxt == cur:
            return cur
        cur = nxt
    return cur


def _simp(e: SymExpr, ctx: PureSet) -> SymExpr:
    if isinstance(e, (IntLit, Nil)):
        return e
    if isinstance(e, (Var, FieldRef)):
        c = ctx.const_of(e)
        return IntLit(c) if c is not None else e
    if isinstance(e, OffsetOf):
        base = _simp(e.base, ctx)
        if isinstance(base, IntLit):
            return IntLit(base.value + e.offset)
        if isinstance(base, Nil):
            return IntLit(e.offset)
        if e.offset == 0:
            return base
        return OffsetOf(base, e.offset)
    if isinstance(e, ArithExpr):
        l, r = _simp(e.left, ctx), _simp(e.right, ctx)
        lv = l.value if isinstance(l, IntLit) else 0 if isinstance(l, Nil) else None
        rv = r.value if isinstance(r, IntLit) else 0 if isinstance(r, Nil) else None
        if lv is not None and rv is not None:
            return IntLit(lv + rv if e.op == "+" else lv - rv if e.op == "-" else lv * rv)
        if e.op == "*" and (lv == 0 or rv == 0):
            return IntLit(0)
        if e.op == "*" and lv == 1:
            return r
        if e.op == "*" and rv == 1:
            return l
        if e.op == "+" and lv == 0:
            return r
        if e.op in ("+", "-") and rv == 0:
            return l
        return ArithExpr(e.op, l, r)
    if isinstance(e, Record):
        return Record(e.tag, tuple((n, _simp(v, ctx)) for n, v in e.fields))
    return e
