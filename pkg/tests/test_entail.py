import random

import pytest

from conftest import check_entailment_sound, enumerate_models, heap_of

from heapcheck import formula as fm
from heapcheck.entail import (
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
from heapcheck.errors import UnknownPredicateError, UnsupportedFormulaError
from heapcheck.parser import parse_assertion
from heapcheck.prooftree import ProofTree, to_structured

PREDS = fm.builtin_preds()


def con(text: str) -> SymHeap:
    return heap_of(text, skolemize=False)


def test_reflexivity_frame_emp():
    r = prove(heap_of("a->5 * b->c"), con("a->5 * b->c"), PREDS)
    assert isinstance(r, Proved)
    assert fm.normalize(r.frame.to_formula()) == fm.Emp()


def test_frame_inference_example():
    r = prove(heap_of("x->3 * y->4"), con("y->4"), PREDS)
    assert isinstance(r, Proved)
    assert r.frame.pretty() == "x->3"
    # independent finite-model check of the spec's derived example
    assert check_entailment_sound(heap_of("x->3 * y->4"), con("y->4"), r.frame) is None


def test_nothing_to_consume_fails_with_residue():
    r = prove(heap_of("emp"), con("exists v. x->v"), PREDS)
    assert isinstance(r, Failed)
    assert len(r.residue_consequent) == 1
    assert isinstance(r.residue_consequent[0], PtoAtom)


def test_paper_chain_entails_list_with_leftover():
    r = prove(heap_of("x->a,b,c,d,e,f * y->f"), con("list(x, nil)"), PREDS, depth=8)
    assert isinstance(r, Proved)
    assert r.frame.pretty() == "y->f"


def test_depth_bound_reports_failure_never_proved():
    r = prove(heap_of("x->1,2,3"), con("list(x, nil)"), PREDS, depth=2)
    assert isinstance(r, Failed)
    assert r.nearest_rule in ("depth-exceeded", "fold")


def test_pred_instance_exact_match():
    r = prove(heap_of("list(a, nil) * z->9"), con("list(a, nil)"), PREDS)
    assert isinstance(r, Proved)
    assert r.frame.pretty() == "z->9"
    assert check_entailment_sound(heap_of("list(a, nil) * z->9"), con("list(a, nil)"), r.frame) is None


def test_infer_frame_one_atom():
    r = infer_frame(heap_of("x->3 * y->4"), con("x->3"), PREDS)
    assert isinstance(r, Proved)
    assert r.frame.pretty() == "y->4"


def test_infer_frame_failure_residue_is_raw_material():
    r = infer_frame(heap_of("emp"), con("exists v. x->v"), PREDS)
    assert isinstance(r, Failed)
    assert r.residue_consequent


def test_unfold_list_two_disjuncts():
    h = heap_of("list(x, e)")
    inst = next(a for a in h.spatial if isinstance(a, PredAtom))
    cases = unfold(h, inst, PREDS, FreshNames("u"))
    assert len(cases) == 2
    base, step = cases
    assert not base.spatial
    assert any(isinstance(a, PtoAtom) for a in step.spatial)
    assert any(isinstance(a, PredAtom) for a in step.spatial)


def test_unfold_prunes_contradictory_case():
    h = heap_of("list(x, e)").add_pure("!=", fm.Var("x"), fm.Var("e"))
    inst = next(a for a in h.spatial if isinstance(a, PredAtom))
    cases = unfold(h, inst, PREDS, FreshNames("u"))
    assert len(cases) == 1
    assert any(isinstance(a, PtoAtom) for a in cases[0].spatial)


def test_unfold_non_recursive_pred():
    table = dict(PREDS)
    table["single"] = fm.PredDef("single", ("a",), parse_assertion("a->1"))
    h = SymHeap(spatial=(PredAtom("single", (fm.Var("q"),)),))
    cases = unfold(h, h.spatial[0], table, FreshNames("u"))
    assert len(cases) == 1
    assert cases[0].spatial == (PtoAtom(fm.Var("q"), fm.IntLit(1)),)


def test_unknown_predicate_raises():
    h = SymHeap(spatial=(PredAtom("mystery", (fm.Var("q"),)),))
    with pytest.raises(UnknownPredicateError):
        unfold(h, h.spatial[0], PREDS, FreshNames("u"))
    with pytest.raises(UnknownPredicateError):
        prove(h, con("emp"), PREDS)


def test_vacuous_entailment_from_contradiction():
    h = heap_of("x->1").add_pure("==", fm.Var("x"), fm.Nil())
    r = prove(h, con("y->2 * z->3"), PREDS)
    assert isinstance(r, Proved)
    assert r.tree.rule == "pure-contradiction"


def test_pure_side_condition_unknown_is_failure():
    # consequent demands a pure fact the antecedent cannot establish
    r = prove(heap_of("x->1"), con("x->1 && y<z"), PREDS)
    assert isinstance(r, Failed)
    assert r.nearest_rule == "pure-check"


def test_existential_binding_reported():
    goal = con("exists v. x->v")
    r = prove(heap_of("x->7"), goal, PREDS)
    assert isinstance(r, Proved)
    assert list(r.binding.values()) == [fm.IntLit(7)]
    assert set(r.binding) <= goal.existentials


def test_antecedent_unfold_case_split():
    h = heap_of("list(x, nil)").add_pure("!=", fm.Var("x"), fm.IntLit(0))
    goal = con("exists v, t. x->object(node, v, t) * list(t, nil)")
    r = prove(h, goal, PREDS)
    assert isinstance(r, Proved)


def test_deterministic_proof_trees():
    def run():
        r = prove(heap_of("x->3 * y->4 * z->5"), con("y->4 * exists v. z->v"), PREDS)
        return to_structured(ProofTree(r.tree))

    assert run() == run()


def test_well_separation_derived():
    h = heap_of("x->1 * y->2")
    assert h.sep_pure().entails("!=", fm.Var("x"), fm.Var("y")) == "yes"
    assert h.sep_pure().entails("!=", fm.Var("x"), fm.IntLit(0)) == "yes"


def test_unsupported_formula_rejected():
    with pytest.raises(UnsupportedFormulaError):
        formula_to_symheaps(parse_assertion("x->1 && y->2"), FreshNames())
    with pytest.raises(UnsupportedFormulaError):
        formula_to_symheaps(parse_assertion("x.f->1"), FreshNames())


def test_or_forks_into_disjunct_heaps():
    heaps = formula_to_symheaps(parse_assertion("x->1 || y->2"), FreshNames())
    assert len(heaps) == 2


def test_frame_rule_closure_sample():
    rng = random.Random(31)
    base_cases = [
        ("x->3", "x->3"),
        ("x->3 * y->4", "y->4"),
        ("x->object(node, 1, nil)", "list(x, nil)"),
        ("list(a, nil) * z->9", "list(a, nil)"),
    ]
    for ant_text, con_text in base_cases:
        r = prove(heap_of(ant_text), con(con_text), PREDS)
        assert isinstance(r, Proved)
        for i in range(5):
            extra_var = f"w{i}"
            extra = f"{extra_var}->{rng.randint(0, 4)}"
            r2 = prove(
                heap_of(f"{ant_text} * {extra}"), con(f"{con_text} * {extra}"), PREDS
            )
            assert isinstance(r2, Proved), (ant_text, extra)


def test_soundness_spot_check_against_models():
    # a handful of named instances, each validated by exhaustive enumeration
    cases = [
        ("x->3 * y->4", "y->4"),
        ("x->0 * y->x", "exists v. y->v"),
        ("x->object(node, 1, nil)", "list(x, nil)"),
        ("x==1 && x->2", "x->2"),
        ("list(a, nil)", "list(a, nil)"),
    ]
    for ant_text, con_text in cases:
        ant = heap_of(ant_text)
        r = prove(ant, con(con_text), PREDS)
        assert isinstance(r, Proved), ant_text
        assert check_entailment_sound(ant, con(con_text), r.frame) is None, ant_text


def test_enumerate_models_is_exact():
    models = list(enumerate_models(heap_of("x->1")))
    assert models
    assert all(len(m.heap) == 1 for m in models)
    empty_or_one = list(enumerate_models(heap_of("list(x, nil)")))
    lens = {len(m.heap) for m in empty_or_one}
    assert lens == {0, 1, 2, 3}


def test_no_false_unsat_pruning():
    # every unfold case dropped as inconsistent must truly have no model
    import random

    rng = random.Random(17)
    texts = [
        "list(x, nil)",
        "list(x, e)",
        "x->7 * list(x, nil)",
        "x==0 && list(x, nil)",
        "x!=0 && list(x, e) * e->1",
    ]
    for text in texts:
        h = heap_of(text)
        for inst in [a for a in h.spatial if isinstance(a, PredAtom)]:
            kept = unfold(h, inst, PREDS, FreshNames("u"), prune=True)
            everything = unfold(h, inst, PREDS, FreshNames("u"), prune=False)
            for case in everything:
                if any(k.pretty() == case.pretty() for k in kept):
                    continue
                assert not list(enumerate_models(case)), (text, case.pretty())
