import pytest

from prophic.abstraction import WEAK, abstract_arrays
from prophic.backend import SolverSession
from prophic.bmc import bmc_check, unroll
from prophic.errors import ResourceOut
from prophic.refiner import (build_lemma, lift_consecutive, reduce_axioms,
                             refine_arrays, saturate_frozen_index_axioms)
from prophic.sts import HistoryChain, ProphecyVar
from prophic.terms import INT, STATE, TermManager, alpha_equal


@pytest.fixture
def abstract(mgr, running):
    S, P = running
    return abstract_arrays(S, P, mode=WEAK)


def aux_counts(S):
    np = sum(1 for r in S.aux_log if isinstance(r, ProphecyVar))
    nh = sum(r.depth for r in S.aux_log if isinstance(r, HistoryChain))
    return np, nh


def test_refine_already_unsat_no_changes(mgr, abstract):
    S2, P2, amap = abstract
    out = refine_arrays(S2, P2, 1, amap)
    assert out.refined and out.iterations == 1
    assert not out.added_lemmas and not out.added_aux


def test_refine_k2_consecutive_only(mgr, abstract):
    S2, P2, amap = abstract
    out = refine_arrays(S2, P2, 2, amap)
    assert out.refined
    assert out.added_lemmas
    assert aux_counts(out.system) == (0, 0)
    # contract: the refined system alone rules the bound out
    with SolverSession(mgr) as s:
        U = unroll(out.system, out.property, 2)
        verdict, _ = bmc_check(s, U, want_core=False)
        assert verdict == "unsat"


def test_refine_worked_example_paper_trajectory(mgr, abstract):
    """Three transitions (path length 4): a delay-1 prophecy on ir appears
    and the substituted write axiom is lifted."""
    S2, P2, amap = abstract
    for k in (2, 3):
        out = refine_arrays(S2, P2, k, amap)
        assert out.refined and aux_counts(out.system) == (0, 0)
        S2, P2 = out.system, out.property
    out = refine_arrays(S2, P2, 4, amap)
    assert out.refined
    S4 = out.system
    prophs = [r for r in S4.aux_log if isinstance(r, ProphecyVar)]
    assert len(prophs) == 1
    assert prophs[0].delay == 1
    assert prophs[0].target is mgr.var("ir", INT)
    assert aux_counts(S4) == (1, 1)
    # the weakened property has the Fig. 1(b) shape
    p = prophs[0].var
    h = S4._delay_memo[mgr.var("ir", INT).id].vars[0]
    assert out.property.formula is mgr.implies(mgr.eq(p, h), P2.formula)
    # the substituted write axiom is among the lifted lemmas
    from prophic.terms import ArraySort, ProphecyK
    a = amap.var_map[mgr.var("a", ArraySort(INT, INT))]
    ops = amap.op_map[a.sort]
    iw, dw, ir = (mgr.var(n, INT) for n in ("iw", "dw", "ir"))
    q = mgr.var("qq", INT, ProphecyK(ir, 1))
    W = mgr.apply(ops.write, [a, iw, dw])
    expected = mgr.conj([
        mgr.implies(mgr.eq(q, iw), mgr.eq(mgr.apply(ops.read, [W, q]), dw)),
        mgr.implies(mgr.not_(mgr.eq(q, iw)),
                    mgr.eq(mgr.apply(ops.read, [W, q]),
                           mgr.apply(ops.read, [a, q])))])
    hits = []
    for tag, _n, t in S4.trans_conjuncts:
        if tag != "lemma":
            continue
        parts = [t] + (list(t.children) if t.is_app("and") else [])
        hits.extend(p2 for p2 in parts if alpha_equal(p2, expected))
    assert hits, "substituted write axiom not lifted"


def test_refined_iff_oracle_on_running(mgr, abstract, running):
    S, P = running
    S2, P2, amap = abstract
    with SolverSession(mgr, logic="QF_AUFLIA") as oracle:
        for k in (1, 2, 3, 4):
            out = refine_arrays(S2, P2, k, amap)
            overdict, _ = bmc_check(oracle, unroll(S, P, k), want_core=False)
            assert out.refined == (overdict == "unsat"), f"k={k}"
            S2, P2 = out.system, out.property


def test_true_counterexample_detected(mgr):
    from conftest import build_running_example
    # unsafe variant: init/property bound 100, writes up to 199
    from prophic.sts import Property, TransitionSystem
    from prophic.terms import ArraySort
    S = TransitionSystem(mgr)
    asort = ArraySort(INT, INT)
    a = mgr.var("ua", asort, STATE)
    ir = mgr.var("uir", INT, STATE)
    iw = mgr.var("uiw", INT, STATE)
    dr = mgr.var("udr", INT, STATE)
    dw = mgr.var("udw", INT, STATE)
    for v in (a, ir, iw, dr, dw):
        S.add_state_var(v)
    S.conjoin_init(mgr.eq(a, mgr.constarr(asort, mgr.intlit(0))))
    S.conjoin_init(mgr.lt(dr, mgr.intlit(100)))
    S.conjoin_trans(mgr.eq(S.next_map[a], mgr.ite(
        mgr.lt(dw, mgr.intlit(200)), mgr.write(a, iw, dw), a)))
    S.conjoin_trans(mgr.eq(S.next_map[dr], mgr.read(a, ir)))
    P = Property.of(mgr.lt(dr, mgr.intlit(100)))
    S2, P2, amap = abstract_arrays(S, P, mode=WEAK)
    for k in (1, 2):
        out = refine_arrays(S2, P2, k, amap)
        S2, P2 = out.system, out.property
        assert out.refined
    out = refine_arrays(S2, P2, 3, amap)
    assert not out.refined
    assert out.model is not None


def test_lift_placements(mgr, abstract):
    from prophic.axioms import AxiomInstance, C_CASE, CONSECUTIVE
    from prophic.bmc import timed_var
    S2, P2, amap = abstract
    c0 = amap.constarr_vars()[0]
    ops = amap.op_map[c0.sort]
    ir = mgr.var("ir", INT)
    # single-state path: instance goes into init, untimed
    inst = AxiomInstance(
        C_CASE, mgr.eq(mgr.apply(ops.read, [timed_var(mgr, c0, 0),
                                            timed_var(mgr, ir, 0)]),
                       mgr.intlit(0)),
        timed_var(mgr, c0, 0), None, CONSECUTIVE)
    S3 = S2.clone()
    lemma, placement, _ = lift_consecutive(S3, inst, 1)
    assert placement == "Init"
    assert lemma is mgr.eq(mgr.apply(ops.read, [c0, ir]), mgr.intlit(0))
    # same instance on a longer path: unprimed and primed copies in trans
    S4 = S2.clone()
    lemma2, placement2, _ = lift_consecutive(S4, inst, 3)
    assert placement2 == "Trans1"
    assert lemma2.is_app("and") and len(lemma2.children) == 2
    # two adjacent steps become one transition conjunct
    inst2 = AxiomInstance(
        C_CASE, mgr.eq(mgr.apply(ops.read, [timed_var(mgr, c0, 1),
                                            timed_var(mgr, ir, 2)]),
                       mgr.intlit(0)),
        timed_var(mgr, c0, 1), None, CONSECUTIVE)
    S5 = S2.clone()
    lemma3, placement3, _ = lift_consecutive(S5, inst2, 3)
    assert placement3 == "Trans2"
    assert lemma3 is mgr.eq(
        mgr.apply(ops.read, [c0, mgr.var("ir'", INT)]), mgr.intlit(0))


def test_reduce_axioms_singleton(mgr, abstract):
    """Two overlapping violated instances where one suffices."""
    from prophic.axioms import AxiomInstance, C_CASE, CONSECUTIVE
    from prophic.bmc import timed_var
    S2, P2, amap = abstract
    x = mgr.var("redx", INT, STATE)
    x0 = timed_var(mgr, x, 0)
    strong = AxiomInstance(C_CASE, mgr.lt(x0, mgr.intlit(3)), x0, None,
                           CONSECUTIVE)
    weak = AxiomInstance(C_CASE, mgr.lt(x0, mgr.intlit(10)), x0, None,
                         CONSECUTIVE)
    with SolverSession(mgr) as s:
        s.assert_term(mgr.lt(mgr.intlit(5), x0))  # x0 > 5: both conflict
        kept = reduce_axioms(s, None, [strong, weak], "Consecutive")
        assert len(kept) == 1
    with SolverSession(mgr) as s2:
        kept = reduce_axioms(s2, None, [], "Consecutive")
        assert kept == []
    with SolverSession(mgr) as s3:
        # both required: disjoint violations
        y = mgr.var("redy", INT, STATE)
        y0 = timed_var(mgr, y, 0)
        a1 = AxiomInstance(C_CASE, mgr.lt(x0, mgr.intlit(3)), x0, None,
                           CONSECUTIVE)
        a2 = AxiomInstance(C_CASE, mgr.lt(y0, mgr.intlit(3)), y0, None,
                           CONSECUTIVE)
        s3.assert_term(mgr.disj([mgr.lt(mgr.intlit(5), x0),
                                 mgr.lt(mgr.intlit(5), y0)]))
        kept = reduce_axioms(s3, None, [a1, a2], "Consecutive")
        assert len(kept) == 2


def test_prophecy_delay_arithmetic(mgr, abstract):
    """Every introduced prophecy delay is (k-1) - n_i, within [0, k)."""
    S2, P2, amap = abstract
    for k in (2, 3, 4):
        out = refine_arrays(S2, P2, k, amap)
        for rec in out.added_aux:
            if isinstance(rec, ProphecyVar):
                assert 0 <= rec.delay < k
        S2, P2 = out.system, out.property


def test_iteration_cap_raises(mgr, abstract):
    S2, P2, amap = abstract
    with pytest.raises(ResourceOut):
        refine_arrays(S2, P2, 2, amap, max_iters=1)


def test_saturation_adds_valid_facts(mgr, abstract):
    S2, P2, amap = abstract
    for k in (2, 3, 4):
        out = refine_arrays(S2, P2, k, amap)
        S2, P2 = out.system, out.property
    S3 = saturate_frozen_index_axioms(S2, amap)
    added = [t for tag, _, t in S3.trans_conjuncts if tag == "lemma"]
    base = [t for tag, _, t in S2.trans_conjuncts if tag == "lemma"]
    assert len(added) > len(base)
    # every added fact concretizes to an array-theory validity
    from prophic.abstraction import concretize
    new = [t for t in added if t not in base]
    with SolverSession(mgr, logic="QF_AUFLIA") as oracle:
        for t in new:
            verdict, _ = oracle.check([mgr.not_(concretize(amap, t))],
                                      want=None)
            assert verdict == "unsat", f"not valid: {t}"
