"""Index-set computation and lazy array-axiom checking.

ComputeIndices collects every term used as a read/write index, a witness
variable per array-equality occurrence, and one lambda variable per index
sort (constrained distinct from every other same-sort entry and frozen
across steps); timed copies of each run over all path states.
CheckArrayAxioms instantiates the write / constant-array / extensionality
(and, in weak mode, read-congruence) axioms against an abstract
counterexample and keeps the violated instances, classified consecutive or
non-consecutive by the span of their time steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .bmc import Unrolling, time_term, timed_var
from .sts import Property, TransitionSystem
from .terms import (ArraySort, NextK, Term, TermManager, TimedK, LAMBDA,
                    WITNESS)

READ_IDX = "ReadIdx"
WRITE_IDX = "WriteIdx"
WITNESS_P = "Witness"
LAMBDA_P = "Lambda"
PROPHECY_P = "ProphecyAdded"

CONSECUTIVE = "Consecutive"
NONCONSECUTIVE = "NonConsecutive"

W_CASE = "WriteCase"
C_CASE = "ConstCase"
E_CASE = "ExtWitness"
G_CASE = "CongruenceWA"


@dataclass(frozen=True)
class IndexEntry:
    term: Term
    provenance: str


@dataclass
class AxiomInstance:
    schema: str
    formula: Term
    trigger: Term
    inst_index: Optional[Term]
    classification: str
    n_i: Optional[int] = None

    def is_consecutive(self):
        return self.classification == CONSECUTIVE


@dataclass
class IndexSet:
    k: int
    entries: dict = field(default_factory=dict)   # index sort -> [IndexEntry]
    lambdas: dict = field(default_factory=dict)   # index sort -> base var
    witnesses: list = field(default_factory=list)  # (occurrence, base var)
    eq_copies: list = field(default_factory=list)  # (timed atom, witness@n)
    side: list = field(default_factory=list)

    def add(self, sort, term, provenance):
        lst = self.entries.setdefault(sort, [])
        if all(e.term is not term for e in lst):
            lst.append(IndexEntry(term, provenance))

    def of_sort(self, sort):
        return list(self.entries.get(sort, []))

    def all_terms(self):
        return [e.term for lst in self.entries.values() for e in lst]

    def add_prophecy(self, mgr: TermManager, p: Term):
        """Timed copies p@0..p@k join the candidate pool (p is frozen)."""
        for step in range(self.k + 1):
            self.add(p.sort, timed_var(mgr, p, step), PROPHECY_P)


def classify(mgr: TermManager, formula: Term,
             inst_index: Optional[Term]) -> tuple:
    ts = mgr.times_of(formula)
    if not ts or max(ts) - min(ts) <= 1:
        return (CONSECUTIVE, None)
    n_i = max(mgr.times_of(inst_index)) if inst_index is not None else None
    return (NONCONSECUTIVE, n_i)


def _scan_apps(mgr, roots, role_of):
    """All uf applications with an array role, deduplicated, in id order."""
    out = {}
    seen = set()
    stack = list(roots)
    while stack:
        u = stack.pop()
        if u.id in seen:
            continue
        seen.add(u.id)
        if u.is_app("uf"):
            role = role_of(u.payload.name)
            if role is not None:
                out[u.id] = (u, role)
        stack.extend(u.children)
    return [out[i] for i in sorted(out)]


def _array_eq_atoms(amap, mgr, roots):
    """eqA applications plus native equalities over abstract array sorts."""
    out = {}
    seen = set()
    stack = list(roots)
    while stack:
        u = stack.pop()
        if u.id in seen:
            continue
        seen.add(u.id)
        if u.is_app("uf") and amap._fun_role.get(u.payload.name, ("",))[0] \
                == "eq":
            out[u.id] = u
        elif u.is_app("=") and amap.is_abstract_array(u.children[0].sort):
            out[u.id] = u
        stack.extend(u.children)
    return [out[i] for i in sorted(out)]


def compute_indices(S: TransitionSystem, P: Property, k: int,
                    amap) -> IndexSet:
    mgr = S.mgr
    iset = IndexSet(k)

    def role_of(name):
        return amap._fun_role.get(name)

    sources = [t for _, _, t in S.init_conjuncts] + \
              [t for _, _, t in S.trans_conjuncts] + \
              [P.formula, P.original]
    # frozen facts v' = v are asserted invariantly; they never need an
    # extensionality witness
    eq_sources = [t for tag, _, t in S.init_conjuncts if tag != "frozen"] + \
                 [t for tag, _, t in S.trans_conjuncts if tag != "frozen"] + \
                 [P.formula, P.original]
    # untimed index terms, then timed copies over every reachable step
    raw = []
    for u, (role, usort) in _scan_apps(mgr, sources, role_of):
        if role == "read":
            raw.append((u.children[1], READ_IDX))
        elif role == "write":
            raw.append((u.children[1], WRITE_IDX))
    for idx, prov in raw:
        has_next = any(isinstance(v.kind, NextK) for v in mgr.free_vars(idx))
        last = k - 2 if has_next else k - 1
        for step in range(0, max(last, -1) + 1):
            iset.add(idx.sort, time_term(mgr, idx, step), prov)

    # a witness per array-equality occurrence; copies at every step
    occs = _array_eq_atoms(amap, mgr, eq_sources)
    for j, occ in enumerate(occs):
        w = mgr.var(mgr.fresh_name(f"__wit{j}_"), _witness_sort(amap, occ),
                    WITNESS)
        iset.witnesses.append((occ, w))
        for step in range(k):
            iset.add(w.sort, timed_var(mgr, w, step), WITNESS_P)

    # lambda per index sort present, frozen across steps, distinct from all
    sorts = sorted(iset.entries, key=repr)
    for u in sorted(amap.sort_unmap, key=repr):
        isort = amap.sort_unmap[u].index
        if isort not in sorts:
            sorts.append(isort)
    for isort in sorts:
        lam = mgr.var(mgr.fresh_name("__lam_"), isort, LAMBDA)
        iset.lambdas[isort] = lam
        others = [e.term for e in iset.of_sort(isort)]
        for step in range(k):
            lv = timed_var(mgr, lam, step)
            iset.add(isort, lv, LAMBDA_P)
            for t in others:
                iset.side.append(mgr.not_(mgr.eq(lv, t)))
            if step + 1 < k:
                iset.side.append(mgr.eq(timed_var(mgr, lam, step + 1), lv))

    # timed copies of each equality occurrence, restricted to the steps at
    # which the occurrence is actually asserted in the unrolling, paired
    # with the witness at the occurrence's later step
    region = {}
    for occ, _w in iset.witnesses:
        init_hit = any(_occurs_in(mgr, occ, t)
                       for tag, _, t in S.init_conjuncts if tag != "frozen")
        trans_hit = any(_occurs_in(mgr, occ, t)
                        for tag, _, t in S.trans_conjuncts if tag != "frozen")
        prop_hit = _occurs_in(mgr, occ, P.formula) or \
            _occurs_in(mgr, occ, P.original)
        region[occ.id] = (init_hit, trans_hit, prop_hit)
    for occ, w in iset.witnesses:
        init_hit, trans_hit, prop_hit = region[occ.id]
        steps = set()
        if init_hit:
            steps.add(0)
        if trans_hit:
            steps.update(range(k - 1))
        if prop_hit:
            steps.add(k - 1)
        for step in sorted(steps):
            atom = time_term(mgr, occ, step)
            ts = mgr.times_of(atom)
            n = max(ts) if ts else 0
            iset.eq_copies.append((atom, timed_var(mgr, w, min(n, k - 1))))
    return iset


def _occurs_in(mgr, sub, t):
    seen = set()
    stack = [t]
    while stack:
        u = stack.pop()
        if u.id in seen:
            continue
        seen.add(u.id)
        if u is sub:
            return True
        stack.extend(u.children)
    return False


def _witness_sort(amap, occ):
    a = occ.children[0]
    return amap.sort_unmap[a.sort].index


def check_array_axioms(model, iset: IndexSet, U: Unrolling, amap, skip=None):
    """Violated axiom instances under the counterexample model.

    Returns (ca, nca): consecutive instances, and (instance, entry) pairs
    whose instantiating index sits more than one step from the trigger.
    Enumeration favors consecutive findings: const and ext first, then
    narrow congruence, then write instances by increasing span; congruence
    over distant entries only runs when nothing else is violated.  A skip
    predicate can drop instances that carry no new information (repairable
    query-local artifacts); skipped instances count as satisfied.
    """
    mgr = U.S.mgr
    ca, nca, seen = [], [], set()

    def keep(inst, entry=None):
        if inst.formula.id in seen:
            return
        seen.add(inst.formula.id)
        if skip is not None and skip(inst):
            return
        if inst.is_consecutive():
            ca.append(inst)
        else:
            nca.append((inst, entry))

    def falsified(t):
        return model.evaluate(t) is False

    def role_of(name):
        return amap._fun_role.get(name)

    # constant arrays: read back the element, representative step keeps the
    # instance consecutive
    for cvar in amap.constarr_vars():
        elem = amap.constarr_map[cvar]
        usort = cvar.sort
        isort = amap.sort_unmap[usort].index
        ops = amap.op_map[usort]
        for entry in iset.of_sort(isort):
            ts = mgr.times_of(entry.term)
            rep = min(ts) if ts else 0
            trig = timed_var(mgr, cvar, min(rep, iset.k - 1))
            fml = mgr.eq(mgr.apply(ops.read, [trig, entry.term]), elem)
            if falsified(fml):
                cls, n_i = classify(mgr, fml, entry.term)
                inst = AxiomInstance(C_CASE, fml, trig, entry.term, cls, n_i)
                keep(inst, entry)

    # extensionality witnesses for falsified equalities
    for atom, w in iset.eq_copies:
        if model.evaluate(atom) is not False:
            continue
        a, b = atom.children
        ops = amap.op_map[a.sort]
        fml = mgr.implies(mgr.not_(atom),
                          mgr.not_(mgr.eq(mgr.apply(ops.read, [a, w]),
                                          mgr.apply(ops.read, [b, w]))))
        if falsified(fml):
            cls, n_i = classify(mgr, fml, None)
            keep(AxiomInstance(E_CASE, fml, atom, None, cls, n_i))

    # weak-mode congruence for equalities holding in the model
    def congruence(wide):
        for atom, _w in iset.eq_copies:
            if amap.mode != "weak" or not atom.is_app("uf"):
                continue
            if model.evaluate(atom) is not True:
                continue
            a, b = atom.children
            ops = amap.op_map[a.sort]
            isort = amap.sort_unmap[a.sort].index
            ts_eq = mgr.times_of(atom)
            for entry in iset.of_sort(isort):
                ts = ts_eq | mgr.times_of(entry.term)
                near = not ts or max(ts) - min(ts) <= 1
                if near == wide:
                    continue
                fml = mgr.implies(atom,
                                  mgr.eq(mgr.apply(ops.read, [a, entry.term]),
                                         mgr.apply(ops.read, [b, entry.term])))
                if falsified(fml):
                    cls, n_i = classify(mgr, fml, entry.term)
                    keep(AxiomInstance(G_CASE, fml, atom, entry.term, cls,
                                       n_i), entry)

    congruence(wide=False)

    # read-over-write, triggered by each write application, ordered by the
    # span the instantiating entry would introduce
    triggers = [u for u, (role, _s) in
                _scan_apps(mgr, U.terms(), role_of) if role == "write"]
    pairs = []
    for trig in triggers:
        usort = trig.sort
        ops = amap.op_map[usort]
        isort = amap.sort_unmap[usort].index
        tts = mgr.times_of(trig)
        for entry in iset.of_sort(isort):
            span_ts = tts | mgr.times_of(entry.term)
            span = (max(span_ts) - min(span_ts)) if span_ts else 0
            pairs.append((span, trig.id, entry.term.id, trig, ops, entry))
    for span, _tid, _eid, trig, ops, entry in sorted(pairs,
                                                     key=lambda x: x[:3]):
        a, j, e = trig.children
        i = entry.term
        hit = mgr.eq(i, j)
        ri = mgr.apply(ops.read, [trig, i])
        fml = mgr.conj([mgr.implies(hit, mgr.eq(ri, e)),
                        mgr.implies(mgr.not_(hit),
                                    mgr.eq(ri, mgr.apply(ops.read, [a, i])))])
        if falsified(fml):
            cls, n_i = classify(mgr, fml, i)
            keep(AxiomInstance(W_CASE, fml, trig, i, cls, n_i), entry)

    if not ca and not nca:
        congruence(wide=True)
    return ca, nca


def retime_entry(mgr: TermManager, inst: AxiomInstance,
                 entry: IndexEntry) -> Optional[AxiomInstance]:
    """Consecutive twin of a non-consecutive instance whose instantiating
    index is a frozen per-step variable (lambda or prophecy copy): move the
    copy next to the trigger."""
    v = entry.term
    if not (v.is_var() and isinstance(v.kind, TimedK)):
        return None
    rest = mgr.times_of(inst.formula) - mgr.times_of(v)
    if not rest or max(rest) - min(rest) > 1:
        return None
    tv = timed_var(mgr, v.kind.base, min(rest))
    fml = mgr.substitute(inst.formula, {v: tv})
    cls, n_i = classify(mgr, fml, tv)
    if cls != CONSECUTIVE:
        return None
    return AxiomInstance(inst.schema, fml, inst.trigger, tv, cls, n_i)
