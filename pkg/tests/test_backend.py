import pytest

from prophic import terms as T
from prophic.backend import CexModel, SolverSession, Telemetry, model_value
from prophic.errors import SolverCrashed, SolverTimeout
from prophic.terms import BOOL, INT, TermManager, USort, UVal


@pytest.fixture
def mgr():
    return TermManager()


@pytest.fixture
def session(mgr):
    s = SolverSession(mgr)
    yield s
    s.close()


def test_contradiction_core(mgr, session):
    x = mgr.var("x", INT)
    verdict, core = session.check(
        [("pos", mgr.lt(mgr.intlit(0), x)), ("neg", mgr.lt(x, mgr.intlit(0)))],
        want="core")
    assert verdict == "unsat"
    assert set(core) <= {"pos", "neg"}
    # core validity: re-asserting only the core stays unsat
    name_map = {"pos": mgr.lt(mgr.intlit(0), x),
                "neg": mgr.lt(x, mgr.intlit(0))}
    verdict2, _ = session.check([(n, name_map[n]) for n in core], want=None)
    assert verdict2 == "unsat"


def test_empty_query_sat(mgr, session):
    verdict, model = session.check([])
    assert verdict == "sat"


def test_uf_table_harvest(mgr, session):
    asort = USort("A")
    rd = mgr.declare_fun("rd", [asort, INT], INT)
    a = mgr.var("a", asort)
    i = mgr.var("i", INT)
    t = mgr.eq(mgr.apply(rd, [a, i]), mgr.intlit(3))
    session.push()
    session.assert_term(t)
    assert session.check_sat() == "sat"
    model = session.harvest_model([t])
    assert model.evaluate(t) is True
    tok = model.var_value(a)
    assert isinstance(tok, UVal)
    assert model.tables["rd"][(tok, model.var_value(i))] == 3
    session.pop()


def test_model_value_direct_and_default(mgr, session):
    asort = USort("A")
    rd = mgr.declare_fun("rd2", [asort, INT], INT)
    a = mgr.var("a2", asort)
    i = mgr.var("i2", INT)
    t = mgr.eq(mgr.apply(rd, [a, i]), mgr.intlit(7))
    session.push()
    session.assert_term(t)
    session.check_sat()
    model = session.harvest_model([t])
    assert model_value(model, i) == model.var_value(i)
    # fresh point resolved live, consistently on repeat
    fresh = mgr.apply(rd, [a, mgr.intlit(12345)])
    v1 = model_value(model, fresh)
    v2 = model_value(model, fresh)
    assert v1 == v2
    session.pop()
    # detached model keeps serving defaults
    model.detach()
    fresh2 = mgr.apply(rd, [a, mgr.intlit(54321)])
    assert isinstance(model_value(model, fresh2), int)


def test_evaluate_agrees_with_solver(mgr, session):
    """Differential: local evaluate matches the solver's own get-value."""
    import random
    rnd = random.Random(7)
    xs = [mgr.var(f"v{i}", INT) for i in range(4)]
    f = mgr.declare_fun("g", [INT], INT)

    def rand_term(depth):
        if depth == 0:
            return rnd.choice(xs + [mgr.intlit(rnd.randint(-5, 5))])
        op = rnd.choice(["+", "-", "ite", "uf"])
        if op == "+":
            return mgr.add([rand_term(depth - 1), rand_term(depth - 1)])
        if op == "-":
            return mgr.sub(rand_term(depth - 1), rand_term(depth - 1))
        if op == "uf":
            return mgr.apply(f, [rand_term(depth - 1)])
        c = mgr.le(rand_term(depth - 1), rand_term(depth - 1))
        return mgr.ite(c, rand_term(depth - 1), rand_term(depth - 1))

    constraint = mgr.conj([mgr.le(mgr.intlit(-10), x) for x in xs] +
                          [mgr.le(x, mgr.intlit(10)) for x in xs] +
                          [mgr.eq(mgr.apply(f, [mgr.intlit(0)]), mgr.intlit(2))])
    session.push()
    session.assert_term(constraint)
    assert session.check_sat() == "sat"
    model = session.harvest_model([constraint])
    for _ in range(25):
        t = rand_term(3)
        local = model.evaluate(t)
        solver_side = session.get_values([t])[0]
        assert local == solver_side, T.to_smt(t)
    session.pop()


def test_verdict_stability(mgr, session):
    x = mgr.var("x", INT)
    q = [mgr.lt(x, mgr.intlit(3)), mgr.lt(mgr.intlit(1), x)]
    r1, _ = session.check(q, want=None)
    r2, _ = session.check(q, want=None)
    assert r1 == r2 == "sat"


def test_timeout_kills(mgr):
    s = SolverSession(mgr)
    x = mgr.var("x", INT)
    s.push()
    s.assert_term(mgr.lt(x, mgr.intlit(0)))
    s.timeout = 0.00001
    with pytest.raises((SolverTimeout, SolverCrashed)):
        s.check_sat()
    s.kill()


def test_telemetry_counts(mgr):
    tel = Telemetry()
    with SolverSession(mgr, telemetry=tel) as s:
        s.check([], want=None)
        s.check([], want=None)
    assert tel.solver_queries == 2
    assert tel.sessions == 1
