import pytest
from hypothesis import given, strategies as st

from prophic import terms as T
from prophic.errors import SortMismatch, UnassignedVariable
from prophic.terms import BOOL, INT, ArraySort, TermManager, TimedK, UVal


@pytest.fixture
def mgr():
    return TermManager()


def test_interning_same_shape_same_identity(mgr):
    x = mgr.var("x", INT)
    a = mgr.eq(x, mgr.intlit(0))
    b = mgr.eq(x, mgr.intlit(0))
    assert a is b


def test_read_signature(mgr):
    a = mgr.var("a", ArraySort(INT, INT))
    i = mgr.var("i", INT)
    assert mgr.read(a, i).sort == INT


def test_ill_sorted_and(mgr):
    x = mgr.var("x", INT)
    with pytest.raises(SortMismatch) as ei:
        mgr.mk_term("and", [x, mgr.true_])
    assert ei.value.child == 0


def test_var_redeclaration_conflict(mgr):
    mgr.var("x", INT)
    with pytest.raises(SortMismatch):
        mgr.var("x", BOOL)


def test_substitute_single_rename(mgr):
    x = mgr.var("x", INT)
    dr = mgr.var("dr", INT)
    t = mgr.lt(x, mgr.intlit(200))
    assert mgr.substitute(t, {x: dr}) is mgr.lt(dr, mgr.intlit(200))


def test_substitute_empty_identity(mgr):
    x = mgr.var("x", INT)
    t = mgr.add([x, mgr.intlit(1)])
    assert mgr.substitute(t, {}) is t


def test_substitute_sort_guard(mgr):
    x = mgr.var("x", INT)
    b = mgr.var("b", BOOL)
    with pytest.raises(SortMismatch):
        mgr.substitute(mgr.eq(x, x), {x: b})


def test_substitute_composition_fresh(mgr):
    x, y, z = (mgr.var(n, INT) for n in "xyz")
    t = mgr.lt(mgr.add([x, mgr.intlit(2)]), mgr.intlit(7))
    one = mgr.substitute(mgr.substitute(t, {x: y}), {y: z})
    two = mgr.substitute(t, {x: z})
    assert one is two


def timed(mgr, base, step):
    return mgr.var(f"{base.name}@{step}", base.sort, TimedK(base, step))


def test_times_of(mgr):
    i = mgr.var("i", INT)
    i2 = timed(mgr, i, 2)
    assert mgr.times_of(i2) == {2}
    a = mgr.var("aA", T.USort("AbsA"))
    a0 = timed(mgr, a, 0)
    rd = mgr.declare_fun("rd", [a.sort, INT], INT)
    dw = timed(mgr, mgr.var("dw", INT), 0)
    t = mgr.eq(mgr.apply(rd, [a0, i2]), dw)
    assert mgr.times_of(t) == {0, 2}
    assert mgr.times_of(mgr.add([i, mgr.intlit(1)])) == frozenset()


@given(st.integers(-5, 5), st.integers(0, 4), st.integers(0, 4))
def test_times_of_distributes(c, n, m):
    mgr = TermManager()
    x = mgr.var("x", INT)
    xn = timed(mgr, x, n)
    xm = timed(mgr, x, m)
    t = mgr.lt(mgr.add([xn, mgr.intlit(c)]), xm)
    assert mgr.times_of(t) == \
        mgr.times_of(xn) | mgr.times_of(xm) | mgr.times_of(mgr.intlit(c))


class DictModel:
    def __init__(self, vals, tables=None, defaults=None):
        self.vals = vals
        self.tables = tables or {}
        self.defaults = defaults or {}

    def var_value(self, v):
        if v.name not in self.vals:
            raise UnassignedVariable(v.name)
        return self.vals[v.name]

    def fun_value(self, f, args, term):
        tab = self.tables.get(f.name, {})
        if args in tab:
            return tab[args]
        if f.name in self.defaults:
            return self.defaults[f.name]
        raise UnassignedVariable(f.name)


def test_evaluate_ground_arith(mgr):
    t = mgr.lt(mgr.add([mgr.intlit(1), mgr.intlit(2)]), mgr.intlit(4))
    assert T.evaluate(mgr, t, DictModel({})) is True


def test_evaluate_table_lookup(mgr):
    asort = T.USort("AbsA")
    rd = mgr.declare_fun("rdA", [asort, INT], INT)
    a = mgr.var("aA", asort)
    i = mgr.var("i", INT)
    tok = UVal("AbsA", "a0")
    m = DictModel({"aA": tok, "i": 5}, {"rdA": {(tok, 5): 3}})
    assert T.evaluate(mgr, mgr.apply(rd, [a, i]), m) == 3


def test_evaluate_unassigned(mgr):
    x = mgr.var("x", INT)
    with pytest.raises(UnassignedVariable):
        T.evaluate(mgr, x, DictModel({}))


def test_print_smt_forms(mgr):
    x = mgr.var("x", INT)
    t = mgr.implies(mgr.le(mgr.intlit(-3), x), mgr.eq(x, mgr.mulc(2, x)))
    assert T.to_smt(t) == "(=> (<= (- 3) x) (= x (* 2 x)))"
    a = mgr.var("arr", ArraySort(INT, INT))
    ca = mgr.constarr(ArraySort(INT, INT), mgr.intlit(0))
    assert T.to_smt(mgr.eq(a, ca)) == \
        "(= arr ((as const (Array Int Int)) 0))"


def test_timed_names_sanitize(mgr):
    i = mgr.var("i", INT)
    i2 = timed(mgr, i, 2)
    nt = T.NameTable()
    assert T.to_smt(i2, nt.emit) == "i.2"
    # collision with a pre-existing "i.2" stays bijective
    nt2 = T.NameTable()
    assert nt2.emit("i.2") == "i.2"
    assert nt2.emit("i@2") != "i.2"


def test_alpha_equal_on_aux(mgr):
    asort = T.USort("AbsA")
    rd = mgr.declare_fun("rdA", [asort, INT], INT)
    a = mgr.var("aA", asort)
    p1 = mgr.var("p1", INT, T.ProphecyK(mgr.var("ir", INT), 1))
    p2 = mgr.var("p2", INT, T.ProphecyK(mgr.var("ir", INT), 1))
    t1 = mgr.lt(mgr.apply(rd, [a, p1]), mgr.intlit(200))
    t2 = mgr.lt(mgr.apply(rd, [a, p2]), mgr.intlit(200))
    assert T.alpha_equal(t1, t2)
    x = mgr.var("x", INT)
    t3 = mgr.lt(mgr.apply(rd, [a, x]), mgr.intlit(200))
    assert not T.alpha_equal(t1, t3)
