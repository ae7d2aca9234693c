import pytest

from prophic.abstraction import WEAK, abstract_arrays
from prophic.backend import SolverSession
from prophic.bmc import bmc_check, time_term, timed_var, unroll, untime_term
from prophic.terms import INT, TimedK


@pytest.fixture
def abstract(mgr, running):
    S, P = running
    return abstract_arrays(S, P, mode=WEAK)


def test_unroll_k1_shape(mgr, abstract):
    S2, P2, _ = abstract
    U = unroll(S2, P2, 1)
    names = [n for n, _ in U.assertions]
    assert names == ["init", "goal"]
    for _, t in U.assertions:
        assert mgr.times_of(t) <= {0}


def test_unroll_k3_trans_conjuncts(mgr, abstract):
    S2, P2, _ = abstract
    U = unroll(S2, P2, 3)
    names = [n for n, _ in U.assertions]
    assert "trans0" in names and "trans1" in names and "trans2" not in names
    t0 = dict(U.assertions)["trans0"]
    assert mgr.times_of(t0) == {0, 1}


def test_unroll_assume_prestate(mgr, abstract):
    S2, P2, _ = abstract
    U = unroll(S2, P2, 3, assume_prestate=True)
    names = [n for n, _ in U.assertions]
    assert names.count("assume0") == 1 and names.count("assume1") == 1
    a0 = dict(U.assertions)["assume0"]
    assert a0 is time_term(mgr, P2.original, 0)


def test_time_untime_round_trip(mgr, running):
    S, P = running
    t = S.trans_conjuncts[1][2]  # dr' = read(a, ir)
    timed = time_term(mgr, t, 2)
    assert mgr.times_of(timed) == {2, 3}
    back = untime_term(mgr, timed, 2, S.next_map)
    assert back is t


def test_bmc_k1_unsat_init_forces_property(mgr, abstract):
    S2, P2, _ = abstract
    with SolverSession(mgr) as s:
        verdict, _ = bmc_check(s, unroll(S2, P2, 1))
        assert verdict == "unsat"


def test_bmc_k3_sat_memoryless_abstraction(mgr, abstract):
    S2, P2, _ = abstract
    with SolverSession(mgr) as s:
        verdict, model = bmc_check(s, unroll(S2, P2, 3))
        assert verdict == "sat"
        # the model covers every timed variable of the query
        dr2 = mgr.var("dr@2", INT)
        assert model.var_value(dr2) >= 200


def test_bmc_concrete_oracle_unsat(mgr, running):
    S, P = running
    with SolverSession(mgr, logic="QF_AUFLIA") as s:
        for k in (1, 2, 3):
            verdict, _ = bmc_check(s, unroll(S, P, k), want_core=False)
            assert verdict == "unsat", f"k={k}"


def test_timed_var_of_next(mgr, running):
    S, _ = running
    dr = mgr.var("dr", INT)
    v = timed_var(mgr, S.next_map[dr], 1)
    assert isinstance(v.kind, TimedK) and v.kind.step == 2
    assert v is timed_var(mgr, dr, 2)
