from conftest import data_text

from heapcheck import formula as fm
from heapcheck.entail import PtoAtom, SymHeap
from heapcheck.parser import parse_program
from heapcheck.prooftree import FAILED
from heapcheck.symexec import (
    CONTRACT_VIOLATION,
    INVALID_ACCESS,
    INVALID_FREE,
    INCONCLUSIVE,
    MEMORY_LEAK,
    REFUTED,
    UNREACHABLE_MEMORY,
    VERIFIED,
    verify_program_term,
)
from heapcheck.termir import lower_program


def verify_source(src: str, depth: int = 4):
    span_map: dict = {}
    term = lower_program(parse_program(src), span_map)
    return verify_program_term(term, depth=depth, span_map=span_map)


def only_verdict(src: str, depth: int = 4):
    out = verify_source(src, depth)
    assert len(out) == 1
    return out[0]


def test_example1_memory_leak_at_second_new():
    v = only_verdict(data_text("ex1.oc"))
    assert v.status == REFUTED
    assert [d.kind for d in v.diagnostics] == [MEMORY_LEAK]
    assert v.diagnostics[0].span.line == 4


def test_example2_unreachable_at_block_exit():
    v = only_verdict(data_text("ex2.oc"))
    assert v.status == REFUTED
    assert [d.kind for d in v.diagnostics] == [UNREACHABLE_MEMORY]
    assert v.diagnostics[0].span.line == 6


def test_example3_invalid_access_through_nil():
    v = only_verdict(data_text("ex3.oc"))
    assert v.status == REFUTED
    assert [d.kind for d in v.diagnostics] == [INVALID_ACCESS]
    assert v.diagnostics[0].span.line == 5


def test_example4_inconclusive_under_trivial_invariant():
    import time

    t0 = time.perf_counter()
    v = only_verdict(data_text("ex4.oc"))
    assert time.perf_counter() - t0 < 10.0
    assert v.status == INCONCLUSIVE
    assert not v.diagnostics


def test_pure_assignment_touches_nothing():
    v = only_verdict("int f(int a) { a = 1; }")
    assert v.status == VERIFIED


def test_leak_counterexample_is_genuine_model():
    v = only_verdict(data_text("ex1.oc"))
    assert "heap" in v.diagnostics[0].counterexample


def test_new_delete_verified():
    assert only_verdict("int f() { new(x); delete(x); }").status == VERIFIED


def test_block_local_new_is_unreachable_at_exit():
    v = only_verdict("int f() { { new(x); } }")
    assert [d.kind for d in v.diagnostics] == [UNREACHABLE_MEMORY]


def test_empty_block_is_noop():
    assert only_verdict("int f() { { } }").status == VERIFIED


def test_param_rooted_chunk_leaks_at_return():
    v = only_verdict("int f(int x) { new(x); }")
    assert v.status == REFUTED
    assert [d.kind for d in v.diagnostics] == [MEMORY_LEAK]


def test_double_delete_invalid_free():
    v = only_verdict("int f() { new(x); delete(x); delete(x); }")
    assert [d.kind for d in v.diagnostics] == [INVALID_FREE]


def test_write_after_free_invalid_access():
    v = only_verdict("int f() { new(x); delete(x); [x] = 1; }")
    assert [d.kind for d in v.diagnostics] == [INVALID_ACCESS]


def test_paper_function_literal_snippet_is_contract_violation():
    v = only_verdict(data_text("paper_fn.oc"))
    assert v.status == REFUTED
    assert [d.kind for d in v.diagnostics] == [CONTRACT_VIOLATION]
    assert "object(myClass1, 15)" in v.diagnostics[0].message


def test_paper_function_verifies_when_pre_supplies_chunks():
    src = """
int f(int a, int b)
@ a<10 * a->5 * b->c * c->object(myClass1,15) @
{
  id = 2;
} @ a->5 * b->c * c->object(myClass1,15) @
"""
    assert only_verdict(src).status == VERIFIED


def test_empty_function_with_default_contracts():
    assert only_verdict("int f() {}").status == VERIFIED


def test_reachability_direct_and_transitive():
    # transitive reach keeps both cells: independently checked by a BFS oracle
    src = "int f(int x) @ exists a, b. x->a * a->b * b->3 @ { } @ true @"
    v = only_verdict(src)
    kinds = [d.kind for d in v.diagnostics]
    # chunks remain reachable, so the only report is the unclaimed-at-return leak
    assert UNREACHABLE_MEMORY not in kinds
    assert kinds.count(MEMORY_LEAK) == 3


def bfs_reachable(store: dict, heap_edges: dict) -> set:
    seen, work = set(), [v for v in store.values()]
    while work:
        cur = work.pop()
        if cur in seen or cur not in heap_edges:
            continue
        seen.add(cur)
        work.extend(heap_edges[cur])
    return seen


def test_reachability_matches_bfs_oracle():
    # independent graph-reachability oracle over a concrete points-to graph
    store = {"x": "a"}
    edges = {"a": ["b"], "b": [], "c": ["b"]}
    assert bfs_reachable(store, edges) == {"a", "b"}
    src = "int f(int x, int c) @ exists b. x->b * b->3 * c->b @ { } @ true @"
    v = only_verdict(src)
    assert UNREACHABLE_MEMORY not in [d.kind for d in v.diagnostics]


def test_contract_call_applies_post_and_frame():
    src = """
int alloc_one(int p) @ emp @ { new(p); } @ exists a, v. a->v @
int f() { new(q); alloc_one(3); delete(q); }
"""
    verdicts = verify_source(src)
    caller = [v for v in verdicts if v.function == "f"][0]
    # the callee's postcondition chunk arrives with no store root: it is
    # reported lost the moment the scope closes
    assert [d.kind for d in caller.diagnostics] == [UNREACHABLE_MEMORY]
    assert [v.status for v in verdicts] == [VERIFIED, REFUTED]


def test_call_precondition_violation():
    src = """
int takes_cell(int p) @ p->5 @ { } @ p->5 @
int f() { takes_cell(1); }
"""
    verdicts = verify_source(src)
    caller = [v for v in verdicts if v.function == "f"][0]
    assert [d.kind for d in caller.diagnostics] == [CONTRACT_VIOLATION]


def test_unknown_function_is_heap_neutral():
    assert only_verdict("int f() { printf(1); }").status == VERIFIED


def test_ite_forks_and_prunes():
    src = """
int f(int a) {
  if (a < 0) { a = 1; } else { a = 2; }
}
"""
    v = only_verdict(src)
    assert v.status == VERIFIED
    assert v.stats.branches >= 1


def test_path_coverage_matches_branch_combinations():
    src = """
int f(int a, int b) {
  if (a < 0) { a = 1; } else { a = 2; }
  if (b < 0) { b = 1; } else { b = 2; }
}
"""
    v = only_verdict(src)
    assert v.status == VERIFIED
    assert v.stats.branches == 3  # 2 forks: 1 + 2 extra terminals


def test_infeasible_branch_pruned():
    src = """
int f(int a) {
  a = 1;
  if (a == 2) { new(leak); }
}
"""
    v = only_verdict(src)
    assert v.status == VERIFIED


def test_fork_isolation():
    # a leak on one branch must not contaminate the sibling branch
    src = """
int f(int a) {
  if (a < 0) { new(x); new(x); delete(x); } else { a = 2; }
}
"""
    v = only_verdict(src)
    leaks = [d for d in v.diagnostics if d.kind == MEMORY_LEAK]
    assert len(leaks) == 1


def test_while_invariant_preserved_heap():
    src = """
int f(int x, int n)
@ x->0 @
{
  while (n > 0) @ exists v. x->v @ {
    [x] = n;
    n = n - 1;
  }
} @ exists v. x->v @
"""
    assert only_verdict(src).status == VERIFIED


def test_while_invariant_violated_on_entry():
    src = """
int f(int n) @ emp @ {
  while (n > 0) @ x->1 @ { n = n - 1; }
} @ true @
"""
    v = only_verdict(src)
    assert any(d.kind == "InvariantViolation" for d in v.diagnostics)


def test_while_body_leak_reported():
    src = """
int f(int n) @ emp @ {
  while (n > 0) @ emp @ {
    new(t);
    n = n - 1;
  }
} @ emp @
"""
    v = only_verdict(src)
    assert any(d.kind in (MEMORY_LEAK, UNREACHABLE_MEMORY) for d in v.diagnostics)


def test_proof_tree_has_failed_leak_check_node():
    v = only_verdict(data_text("ex1.oc"))
    failed = [n for n in v.proof.root.walk() if n.rule == "leak-check" and n.outcome == FAILED]
    assert failed
    assert v.diagnostics[0].proof_ref in {n.id for n in v.proof.root.walk()}


def test_overwrite_without_loss_is_fine():
    src = "int f() { new(x); y = x; new(x); delete(x); delete(y); }"
    assert only_verdict(src).status == VERIFIED


def test_field_overwrite_leak():
    src = """
int f() {
  new(a);
  {
    new(b);
    a.ref = b;
  }
  a.ref = null;
  delete(a);
}
"""
    v = only_verdict(src)
    assert [d.kind for d in v.diagnostics] == [MEMORY_LEAK]
    assert v.diagnostics[0].span.line == 8


def test_verdict_invariant_verified_means_no_refuting_diagnostics():
    for name in ("ex1.oc", "ex2.oc", "ex3.oc", "ex4.oc"):
        v = only_verdict(data_text(name))
        if v.status == VERIFIED:
            assert not v.diagnostics


def test_read_through_predicate_unfolds_on_access():
    src = """
int f(int x)
@ x!=nil && list(x, nil) @
{
  v = x.value;
} @ exists t, w. x->object(node, w, t) * list(t, nil) @
"""
    assert only_verdict(src).status == VERIFIED


def test_recursive_walk_with_contract():
    src = """
int walk(int p) @ list(p, nil) @ {
  if (p != null) {
    q = p.next;
    walk(q);
  }
} @ list(p, nil) @
"""
    assert only_verdict(src).status == VERIFIED


def test_statement_assert_checkpoint():
    ok = only_verdict("int f() @ emp @ { new(x); @ exists v. x->v @; delete(x); } @ emp @")
    assert ok.status == VERIFIED
    bad = only_verdict("int f() @ emp @ { new(x); @ x->7 @; delete(x); } @ emp @")
    assert [d.kind for d in bad.diagnostics] == [CONTRACT_VIOLATION]


def test_new_through_field():
    src = """
int f() {
  new(o);
  new(o.child);
  c = o.child;
  delete(c);
  delete(o);
}
"""
    assert only_verdict(src).status == VERIFIED


def test_leaked_chunk_stays_allocated():
    # a quarantined chunk is still memory: later writes through a numeric
    # alias must stay inconclusive, not provably invalid
    src = "int f(int y) { new(y); y = 1; [y] = 1; }"
    v = only_verdict(src)
    assert v.status != REFUTED or all(
        d.kind not in (INVALID_ACCESS, INVALID_FREE) for d in v.diagnostics
    )
