import glob
import os

import pytest

from prophic.backend import SolverSession
from prophic.bmc import bmc_check, unroll
from prophic.errors import MissingSection, ParseError, UnsupportedLogic
from prophic.frontend import emit_vmt, parse_vmt
from prophic.terms import ArraySort, INT, TermManager

BENCH = os.path.join(os.path.dirname(__file__), "..", "benchmarks")


def load(name, mgr=None):
    mgr = mgr or TermManager()
    text = open(os.path.join(BENCH, name)).read()
    S, props = parse_vmt(text, mgr)
    return mgr, S, props


def test_parse_running_example():
    mgr, S, props = load("running.vmt")
    assert {v.name for v in S.state_vars} == {"a", "ir", "iw", "dr", "dw"}
    a = mgr.var("a", ArraySort(INT, INT))
    assert S.next_map[a].name == "a.next"
    assert len(props) == 1
    assert props[0].formula is mgr.lt(mgr.var("dr", INT), mgr.intlit(200))
    # matches the hand-built fixture up to next-variable naming
    from conftest import build_running_example
    from prophic.terms import NextK, alpha_equal, to_smt
    S2, P2 = build_running_example(mgr)
    assert to_smt(S.init) == to_smt(S2.init)
    assert alpha_equal(S.trans, S2.trans,
                       renameable=lambda v: isinstance(v.kind, NextK))


def test_frozen_detection():
    _, S, _ = load("array_init.vmt")
    frozen = {v.name for v in S.frozen}
    assert frozen == {"N", "c"}


def test_quantifier_rejected(mgr):
    bad = """
    (declare-fun x () Int) (declare-fun x.next () Int)
    (define-fun .sv0 () Int (! x :next x.next))
    (define-fun .init () Bool (! (= x 0) :init true))
    (define-fun .trans () Bool (! (forall ((y Int)) (< x y)) :trans true))
    (define-fun .p () Bool (! (< x 1) :invar-property 0))
    """
    with pytest.raises(UnsupportedLogic):
        parse_vmt(bad, mgr)


def test_bitvec_index_rejected(mgr):
    bad = """
    (declare-fun a () (Array (_ BitVec 8) Int))
    """
    with pytest.raises(UnsupportedLogic):
        parse_vmt(bad + "(define-fun .init () Bool (! true :init true))", mgr)


def test_two_inits_conflict(mgr):
    bad = """
    (declare-fun x () Int) (declare-fun x.next () Int)
    (define-fun .sv0 () Int (! x :next x.next))
    (define-fun .i1 () Bool (! (= x 0) :init true))
    (define-fun .i2 () Bool (! (= x 1) :init true))
    (define-fun .t () Bool (! (= x.next x) :trans true))
    (define-fun .p () Bool (! (< x 9) :invar-property 0))
    """
    with pytest.raises(MissingSection):
        parse_vmt(bad, mgr)


def test_missing_sections(mgr):
    with pytest.raises(MissingSection):
        parse_vmt("(declare-fun x () Int)", mgr)


def test_define_fun_macro_expansion(mgr):
    text = """
    (declare-fun x () Int) (declare-fun x.next () Int)
    (define-fun .sv0 () Int (! x :next x.next))
    (define-fun inc ((v Int)) Int (+ v 1))
    (define-fun .init () Bool (! (= x 0) :init true))
    (define-fun .trans () Bool (! (= x.next (inc x)) :trans true))
    (define-fun .p () Bool (! (<= 0 x) :invar-property 0))
    """
    S, props = parse_vmt(text, mgr)
    assert S.trans is mgr.eq(mgr.var("x.next", INT),
                             mgr.add([mgr.var("x", INT), mgr.intlit(1)]))


@pytest.mark.parametrize("name", sorted(
    os.path.basename(p) for p in glob.glob(os.path.join(BENCH, "*.vmt"))))
def test_round_trip_bisimilar(name):
    """parse -> emit -> parse preserves BMC verdicts for small bounds."""
    mgr1, S1, props1 = load(name)
    text2 = emit_vmt(S1, props1)
    mgr2 = TermManager()
    S2, props2 = parse_vmt(text2, mgr2)
    assert len(props1) == len(props2)
    with SolverSession(mgr1, logic="QF_AUFLIA") as s1, \
            SolverSession(mgr2, logic="QF_AUFLIA") as s2:
        for k in (1, 2, 3):
            v1, _ = bmc_check(s1, unroll(S1, props1[0], k), want_core=False)
            v2, _ = bmc_check(s2, unroll(S2, props2[0], k), want_core=False)
            assert v1 == v2, f"{name}@k={k}: {v1} vs {v2}"


def test_emit_abstract_system(mgr, running):
    from prophic.abstraction import abstract_arrays
    S, P = running
    S2, P2, amap = abstract_arrays(S, P)
    text = emit_vmt(S2, P2)
    assert "declare-sort" in text and "__read1" in text
    mgr2 = TermManager()
    S3, props3 = parse_vmt(text, mgr2)
    assert len(S3.state_vars) == len(S2.state_vars)
