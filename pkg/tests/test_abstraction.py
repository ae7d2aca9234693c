import pytest

from prophic.abstraction import STRONG, WEAK, abstract_arrays, concretize
from prophic.errors import FiniteIndexSort, NestedArray
from prophic.sts import Property, TransitionSystem
from prophic.terms import ArraySort, INT, STATE, USort, alpha_equal


def fig2_expected(mgr, S2, amap):
    """Hand-built Fig. 2 system pieces over the abstraction's vocabulary."""
    a = amap.var_map[mgr.var("a", ArraySort(INT, INT))]
    c0 = amap.constarr_vars()[0]
    ops = amap.op_map[a.sort]
    ir, iw = mgr.var("ir", INT), mgr.var("iw", INT)
    dr, dw = mgr.var("dr", INT), mgr.var("dw", INT)
    c200 = mgr.intlit(200)
    init = mgr.conj([mgr.eq(a, c0), mgr.lt(dr, c200)])
    trans = mgr.conj([
        mgr.eq(S2.next_map[a],
               mgr.ite(mgr.lt(dw, c200), mgr.apply(ops.write, [a, iw, dw]),
                       a)),
        mgr.eq(S2.next_map[dr], mgr.apply(ops.read, [a, ir])),
        mgr.eq(S2.next_map[c0], c0),
    ])
    prop = mgr.lt(dr, c200)
    return init, trans, prop


def test_strong_abstraction_matches_fig2(mgr, running):
    S, P = running
    S2, P2, amap = abstract_arrays(S, P, mode=STRONG)
    init, trans, prop = fig2_expected(mgr, S2, amap)
    assert S2.init is init
    assert S2.trans is trans
    assert P2.formula is prop
    c0 = amap.constarr_vars()[0]
    assert S2.is_frozen(c0)


def test_weak_abstraction_uses_eq_predicate(mgr, running):
    S, P = running
    S2, P2, amap = abstract_arrays(S, P, mode=WEAK)
    a = amap.var_map[mgr.var("a", ArraySort(INT, INT))]
    ops = amap.op_map[a.sort]
    c0 = amap.constarr_vars()[0]
    assert S2.init_conjuncts[0][2] is mgr.apply(ops.eq, [a, c0])
    # no native equality between abstract arrays outside frozen facts
    for tag, _, t in S2.init_conjuncts + S2.trans_conjuncts:
        if tag == "frozen":
            continue
        stack = [t]
        while stack:
            u = stack.pop()
            if u.is_app("="):
                assert not amap.is_abstract_array(u.children[0].sort)
            stack.extend(u.children)


def test_no_eq_predicate_in_strong(mgr, running):
    S, P = running
    S2, P2, amap = abstract_arrays(S, P, mode=STRONG)
    for ops in amap.op_map.values():
        assert ops.eq is None


def test_array_free_identity(mgr):
    S = TransitionSystem(mgr)
    x = mgr.var("x", INT, STATE)
    S.add_state_var(x)
    S.conjoin_init(mgr.eq(x, mgr.intlit(0)))
    S.conjoin_trans(mgr.eq(S.next_map[x], mgr.add([x, mgr.intlit(1)])))
    P = Property.of(mgr.le(mgr.intlit(0), x))
    S2, P2, amap = abstract_arrays(S, P)
    assert amap.empty()
    assert S2.init is S.init and S2.trans is S.trans
    assert P2.formula is P.formula


def test_round_trip(mgr, running):
    S, P = running
    S2, P2, amap = abstract_arrays(S, P, mode=WEAK)
    assert concretize(amap, S2.init) is S.init
    assert concretize(amap, P2.formula) is P.formula
    # trans additionally carries the constarr frozen fact; strip it
    base = mgr.conj([t for tag, _, t in S2.trans_conjuncts
                     if tag != "frozen"])
    assert concretize(amap, base) is S.trans


def test_concretize_weak_eq(mgr, running):
    S, P = running
    S2, P2, amap = abstract_arrays(S, P, mode=WEAK)
    asort = ArraySort(INT, INT)
    a = amap.var_map[mgr.var("a", asort)]
    c0 = amap.constarr_vars()[0]
    ops = amap.op_map[a.sort]
    t = mgr.apply(ops.eq, [a, c0])
    back = concretize(amap, t)
    assert back is mgr.eq(mgr.var("a", asort),
                          mgr.constarr(asort, mgr.intlit(0)))


def test_concretize_timed_vars(mgr, running):
    from prophic.bmc import timed_var
    S, P = running
    S2, P2, amap = abstract_arrays(S, P, mode=STRONG)
    asort = ArraySort(INT, INT)
    a_abs = amap.var_map[mgr.var("a", asort)]
    ops = amap.op_map[a_abs.sort]
    ir = mgr.var("ir", INT)
    t = mgr.apply(ops.read, [timed_var(mgr, a_abs, 0), timed_var(mgr, ir, 2)])
    back = concretize(amap, t)
    a_t = timed_var(mgr, mgr.var("a", asort), 0)
    assert back is mgr.read(a_t, timed_var(mgr, ir, 2))


def test_untouched_vocabulary_identity(mgr, running):
    S, P = running
    S2, P2, amap = abstract_arrays(S, P)
    x = mgr.lt(mgr.var("dr", INT), mgr.intlit(5))
    assert concretize(amap, x) is x


def test_finite_index_rejected(mgr):
    S = TransitionSystem(mgr)
    bad = ArraySort(ArraySort(INT, INT), INT)
    a = mgr.var("nested", bad, STATE)
    S.add_state_var(a)
    S.conjoin_init(mgr.eq(a, a))
    P = Property.of(mgr.true_)
    with pytest.raises(NestedArray):
        abstract_arrays(S, P)


def test_usort_index_allowed(mgr):
    S = TransitionSystem(mgr)
    loc = USort("Loc")
    asort = ArraySort(loc, INT)
    a = mgr.var("m", asort, STATE)
    i = mgr.var("pos", loc, STATE)
    S.add_state_var(a)
    S.add_state_var(i)
    S.conjoin_trans(mgr.eq(S.next_map[a], mgr.write(a, i, mgr.intlit(1))))
    P = Property.of(mgr.true_)
    S2, P2, amap = abstract_arrays(S, P)
    assert asort in amap.sort_map
