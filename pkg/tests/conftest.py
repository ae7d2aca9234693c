import pytest

from prophic.sts import Property, TransitionSystem
from prophic.terms import ArraySort, INT, STATE, TermManager


def build_running_example(mgr):
    """Memory controller: writes dw < 200 into a at iw, reads dr = a[ir].

    I: a = constarr(0) and dr < 200
    T: a' = ite(dw < 200, write(a, iw, dw), a) and dr' = read(a, ir)
    P: dr < 200
    """
    S = TransitionSystem(mgr)
    asort = ArraySort(INT, INT)
    a = mgr.var("a", asort, STATE)
    ir = mgr.var("ir", INT, STATE)
    iw = mgr.var("iw", INT, STATE)
    dr = mgr.var("dr", INT, STATE)
    dw = mgr.var("dw", INT, STATE)
    for v in (a, ir, iw, dr, dw):
        S.add_state_var(v)
    c200 = mgr.intlit(200)
    S.conjoin_init(mgr.eq(a, mgr.constarr(asort, mgr.intlit(0))))
    S.conjoin_init(mgr.lt(dr, c200))
    S.conjoin_trans(mgr.eq(
        S.next_map[a],
        mgr.ite(mgr.lt(dw, c200), mgr.write(a, iw, dw), a)))
    S.conjoin_trans(mgr.eq(S.next_map[dr], mgr.read(a, ir)))
    P = Property.of(mgr.lt(dr, c200))
    return S, P


@pytest.fixture
def mgr():
    return TermManager()


@pytest.fixture
def running(mgr):
    return build_running_example(mgr)
