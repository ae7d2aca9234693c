"""Unrolling to timed formulas and the bounded counterexample check.

k counts states (path length): a k-path touches X@0 .. X@(k-1) with k-1
transition copies.
"""

from __future__ import annotations

from .sts import Property, TransitionSystem
from .terms import NextK, Term, TermManager, TimedK


def timed_var(mgr: TermManager, v: Term, step: int) -> Term:
    base = v.kind.base if isinstance(v.kind, NextK) else v
    if isinstance(base.kind, TimedK):
        raise ValueError(f"{v} is already timed")
    s = step + 1 if isinstance(v.kind, NextK) else step
    return mgr.var(f"{base.name}@{s}", base.sort, TimedK(base, s))


def time_term(mgr: TermManager, t: Term, step: int) -> Term:
    """X -> X@step, X' -> X@(step+1)."""
    m = {}
    for v in mgr.free_vars(t):
        if isinstance(v.kind, TimedK):
            continue
        m[v] = timed_var(mgr, v, step)
    return mgr.substitute(t, m)


def untime_term(mgr: TermManager, t: Term, base_step: int,
                next_map=None) -> Term:
    """X@base_step -> X and X@(base_step+1) -> X' (needs the next map)."""
    m = {}
    for v in mgr.free_vars(t):
        if not isinstance(v.kind, TimedK):
            continue
        base, s = v.kind.base, v.kind.step
        if s == base_step:
            m[v] = base
        elif s == base_step + 1:
            if next_map is None or base not in next_map:
                raise KeyError(f"no next-state copy for {base}")
            m[v] = next_map[base]
        else:
            raise ValueError(f"step {s} outside [{base_step}, {base_step+1}]")
    return mgr.substitute(t, m)


class Unrolling:
    """Named timed conjuncts of BMC(S, P, k) plus side constraints."""

    def __init__(self, S: TransitionSystem, P: Property, k: int):
        self.S = S
        self.P = P
        self.k = k
        self.assertions = []     # (name, term)
        self.lemma_copies = {}   # assertion name -> lemma name

    def add(self, name, term, lemma=None):
        self.assertions.append((name, term))
        if lemma is not None:
            self.lemma_copies[name] = lemma

    def terms(self):
        return [t for _, t in self.assertions]


def unroll(S: TransitionSystem, P: Property, k: int, side=(),
           assume_prestate=False) -> Unrolling:
    if k < 1:
        raise ValueError("path length must be >= 1")
    mgr = S.mgr
    U = Unrolling(S, P, k)
    base_init = [t for tag, _, t in S.init_conjuncts if tag != "lemma"]
    U.add("init", time_term(mgr, mgr.conj(base_init), 0))
    for tag, name, t in S.init_conjuncts:
        if tag == "lemma":
            U.add(f"{name}@i", time_term(mgr, t, 0), lemma=name)
    base_trans = [t for tag, _, t in S.trans_conjuncts if tag != "lemma"]
    bt = mgr.conj(base_trans)
    for i in range(k - 1):
        U.add(f"trans{i}", time_term(mgr, bt, i))
        for tag, name, t in S.trans_conjuncts:
            if tag == "lemma":
                U.add(f"{name}@t{i}", time_term(mgr, t, i), lemma=name)
    if assume_prestate:
        for i in range(k - 1):
            U.add(f"assume{i}", time_term(mgr, P.original, i))
    U.add("goal", mgr.not_(time_term(mgr, P.formula, k - 1)))
    for j, t in enumerate(side):
        U.add(f"side{j}", t)
    return U


def bmc_check(session, U: Unrolling, want_core=True):
    """Decide the unrolling on a fresh scope of the session.

    Returns ("sat", CexModel) with every timed variable and abstract array
    application covered, or ("unsat", UnsatCore), or ("unknown", None).
    """
    session.push()
    try:
        for name, t in U.assertions:
            session.assert_term(t, name)
        verdict = session.check_sat()
        if verdict == "sat":
            model = session.harvest_model(U.terms())
            model.detach()  # the scope closes below
            return ("sat", model)
        if verdict == "unsat":
            core = session.get_unsat_core() if want_core else None
            return ("unsat", core)
        return ("unknown", None)
    finally:
        session.pop()
