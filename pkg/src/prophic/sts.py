"""Symbolic transition systems plus the two sound transformations:
Delay (history chains) and Prophecize (frozen prophecy variables).

Transformations return extended copies so the original system stays usable
for differential checks; the aux_log records every transformation so a
system can be replayed onto another base (certificate checking rebuilds the
auxiliary variables on the concrete system this way).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional

from .errors import InvalidDepth, ScopeError, SortMismatch, UnknownVariable
from .terms import (HistoryK, NextK, ProphecyK, STATE, Term, TermManager,
                    TimedK, to_smt)


@dataclass(frozen=True)
class HistoryChain:
    target: Term
    depth: int
    vars: tuple          # h^1 .. h^depth


@dataclass(frozen=True)
class ProphecyVar:
    var: Term
    target: Term
    delay: int


@dataclass
class Property:
    formula: Term
    original: Term

    @classmethod
    def of(cls, t: Term):
        return cls(t, t)


def term_digest(t: Term) -> str:
    return hashlib.sha1(to_smt(t).encode()).hexdigest()[:8]


class TransitionSystem:
    def __init__(self, mgr: TermManager):
        self.mgr = mgr
        self.state_vars = []        # ordered
        self.input_vars = []        # empty internally; kept for VMT fidelity
        self.next_map = {}          # state var -> primed copy
        self.init_conjuncts = []    # (tag, name, Term)
        self.trans_conjuncts = []   # (tag, name, Term)
        self.frozen = set()
        self.aux_log = []
        self._delay_memo = {}       # target id -> HistoryChain (longest)
        self._proph_memo = {}       # (target id, delay) -> ProphecyVar
        self._promote_memo = {}     # query var id -> promoted state var
        self._nlemma = 0

    # --- construction --------------------------------------------------------

    def add_state_var(self, v: Term, next_v: Optional[Term] = None) -> Term:
        if v in self.next_map:
            return self.next_map[v]
        if next_v is None:
            next_v = self.mgr.var(v.name + "'", v.sort, NextK(v))
        self.state_vars.append(v)
        self.next_map[v] = next_v
        return next_v

    def conjoin_init(self, t: Term, tag="base", name=None):
        self._check_scope(t, allow_next=False)
        self.init_conjuncts.append((tag, name, t))

    def conjoin_trans(self, t: Term, tag="base", name=None):
        self._check_scope(t, allow_next=True)
        self.trans_conjuncts.append((tag, name, t))

    def mark_frozen(self, v: Term):
        """Freeze v: conjoin v' = v and record it."""
        if v not in self.frozen:
            self.frozen.add(v)
            self.conjoin_trans(self.mgr.eq(self.next_map[v], v), tag="frozen")

    @property
    def init(self) -> Term:
        return self.mgr.conj([t for _, _, t in self.init_conjuncts])

    @property
    def trans(self) -> Term:
        return self.mgr.conj([t for _, _, t in self.trans_conjuncts])

    def is_frozen(self, v: Term) -> bool:
        if v not in self.next_map:
            raise UnknownVariable(f"{v} is not a state variable")
        return v in self.frozen

    def _check_scope(self, t: Term, allow_next: bool):
        for v in self.mgr.free_vars(t):
            if isinstance(v.kind, TimedK):
                raise ScopeError(f"timed variable {v} in system formula")
            if isinstance(v.kind, NextK) and not allow_next:
                raise ScopeError(f"next-state variable {v} in init formula")

    def vocabulary_ok(self, t: Term) -> bool:
        sv = set(self.state_vars) | set(self.input_vars)
        return all(v in sv for v in self.mgr.free_vars(t))

    # --- copies --------------------------------------------------------------

    def clone(self) -> "TransitionSystem":
        s = TransitionSystem(self.mgr)
        s.state_vars = list(self.state_vars)
        s.input_vars = list(self.input_vars)
        s.next_map = dict(self.next_map)
        s.init_conjuncts = list(self.init_conjuncts)
        s.trans_conjuncts = list(self.trans_conjuncts)
        s.frozen = set(self.frozen)
        s.aux_log = list(self.aux_log)
        s._delay_memo = dict(self._delay_memo)
        s._proph_memo = dict(self._proph_memo)
        s._promote_memo = dict(self._promote_memo)
        s._nlemma = self._nlemma
        return s

    # --- lemma bookkeeping (used by the refiner) ------------------------------

    def add_lemma(self, t: Term, placement: str) -> str:
        self._nlemma += 1
        name = f"lemma{self._nlemma}"
        if placement == "Init":
            self.conjoin_init(t, tag="lemma", name=name)
        else:
            self.conjoin_trans(t, tag="lemma", name=name)
        return name

    def drop_lemmas(self, names):
        names = set(names)
        self.init_conjuncts = [c for c in self.init_conjuncts
                               if not (c[0] == "lemma" and c[1] in names)]
        self.trans_conjuncts = [c for c in self.trans_conjuncts
                                if not (c[0] == "lemma" and c[1] in names)]

    # --- promotion of query-local index variables -----------------------------

    def promote_frozen(self, base_var: Term) -> Term:
        """Fresh frozen state variable standing for a query-local index."""
        got = self._promote_memo.get(base_var.id)
        if got is not None:
            return got
        name = self.mgr.fresh_name(f"__idx_{base_var.name}_")
        v = self.mgr.var(name, base_var.sort, STATE)
        self.add_state_var(v)
        self.mark_frozen(v)
        self._promote_memo[base_var.id] = v
        return v


# ---------------------------------------------------------------------------
# Delay / Prophecize


def delay(S: TransitionSystem, t: Term, n: int):
    """History chain for t: returns (extended system, h^n_t)."""
    if n <= 0:
        raise InvalidDepth(f"delay needs n >= 1, got {n}")
    if not S.vocabulary_ok(t):
        raise ScopeError(f"target {t} mentions non-state variables")
    mgr = S.mgr
    chain = S._delay_memo.get(t.id)
    if chain is not None and chain.depth >= n:
        return S, chain.vars[n - 1]
    S = S.clone()
    chain = S._delay_memo.get(t.id)
    have = list(chain.vars) if chain is not None else []
    root = term_digest(t)
    for d in range(len(have) + 1, n + 1):
        h = mgr.var(f"__hist_{root}_{d}", t.sort, HistoryK(t, d))
        hn = S.add_state_var(h)
        prev = t if d == 1 else have[-1]
        S.conjoin_trans(mgr.eq(hn, prev), tag="aux")
        have.append(h)
    rec = HistoryChain(t, n, tuple(have))
    S._delay_memo[t.id] = rec
    # one log record per target: extending a chain replaces it
    S.aux_log = [r for r in S.aux_log
                 if not (isinstance(r, HistoryChain) and r.target is t)]
    S.aux_log.append(rec)
    return S, have[n - 1]


def prophecize(S: TransitionSystem, P: Property, t: Term, n: int):
    """Universal prophecy for t at delay n: (system, property, prophecy var).

    n = 0 targets t at the property state; n > 0 first delays t.  The
    prophecy variable is frozen and unconstrained initially; the property
    becomes p = target ==> P.  Memoized per (t, n).
    """
    mgr = S.mgr
    if n < 0:
        raise InvalidDepth(f"prophecize needs n >= 0, got {n}")
    # targeting an auxiliary: history targets shift to the base term
    if isinstance(t.kind, HistoryK):
        return prophecize(S, P, t.kind.target, n + t.kind.depth)
    for v in mgr.free_vars(t):
        if isinstance(v.kind, ProphecyK):
            raise ScopeError(f"prophecy target {t} mentions prophecy var {v}")
    got = S._proph_memo.get((t.id, n))
    if got is not None:
        anchor = t if n == 0 else S._delay_memo[t.id].vars[n - 1]
        prop = Property(mgr.implies(mgr.eq(got.var, anchor), P.formula),
                        P.original)
        return S, prop, got.var
    if n == 0:
        S = S.clone()
        anchor = t
    else:
        S, anchor = delay(S, t, n)
    root = term_digest(t)
    p = mgr.var(f"__proph_{root}_{n}", t.sort, ProphecyK(t, n))
    S.add_state_var(p)
    S.mark_frozen(p)
    rec = ProphecyVar(p, t, n)
    S._proph_memo[(t.id, n)] = rec
    S.aux_log.append(rec)
    prop = Property(mgr.implies(mgr.eq(p, anchor), P.formula), P.original)
    return S, prop, p


def replay_aux(S: TransitionSystem, aux_log, rewrite=None):
    """Rebuild recorded auxiliaries on another base system.

    rewrite maps target terms into the new system's vocabulary (used to move
    abstract-space auxiliaries onto the concrete system).
    """
    out = S
    for rec in aux_log:
        tgt = rec.target if rewrite is None else rewrite(rec.target)
        if isinstance(rec, HistoryChain):
            out, _ = delay(out, tgt, rec.depth)
        else:
            prop = Property.of(out.mgr.true_)
            out, _, _ = prophecize(out, prop, tgt, rec.delay)
    return out
