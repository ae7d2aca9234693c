"""Per-bound refinement loop: BMC, axiom checking, prophecy introduction for
non-consecutive instances, lifting consecutive instances into the system.

One persistent solver session serves a whole bound; newly lifted lemmas,
auxiliary-variable constraints and goal strengthenings are asserted
incrementally instead of re-unrolling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import axioms as ax
from .backend import SolverSession
from .bmc import time_term, timed_var, unroll, untime_term
from .errors import NotConsecutive, RefinementStuck, ResourceOut
from .sts import Property, TransitionSystem, prophecize
from .terms import (HistoryK, LambdaK, NextK, ProphecyK, Term, TimedK,
                    WitnessK)


@dataclass
class RefineOutcome:
    system: TransitionSystem
    property: Property
    refined: bool
    added_aux: list = field(default_factory=list)
    added_lemmas: list = field(default_factory=list)  # (Term, placement)
    instances: list = field(default_factory=list)     # every emitted instance
    model: object = None                              # final rho if not refined
    iterations: int = 0


def build_lemma(S: TransitionSystem, inst: ax.AxiomInstance, k: int):
    """Untimed lemma for a consecutive instance and its placement.

    Query-local index variables (witnesses, lambdas) are promoted to fresh
    frozen state variables first; the axiom schema is valid for any index,
    so the promoted lemma stays array-valid.
    """
    mgr = S.mgr
    fml = inst.formula
    subst = {}
    for v in sorted(mgr.free_vars(fml), key=lambda u: u.id):
        if isinstance(v.kind, TimedK) and \
                isinstance(v.kind.base.kind, (WitnessK, LambdaK)):
            subst[v] = S.promote_frozen(v.kind.base)
    if subst:
        fml = mgr.substitute(fml, subst)
    ts = mgr.times_of(fml)
    n_min = min(ts) if ts else 0
    n_max = max(ts) if ts else 0
    if n_max - n_min > 1:
        raise NotConsecutive(f"span {n_max - n_min} instance cannot be lifted")
    if k == 1:
        return untime_term(mgr, fml, n_min, S.next_map), "Init"
    if n_min == n_max:
        cur = untime_term(mgr, fml, n_min, S.next_map)
        return mgr.conj([cur, _primed_copy(S, cur)]), "Trans1"
    return untime_term(mgr, fml, n_min, S.next_map), "Trans2"


def lift_consecutive(S: TransitionSystem, inst: ax.AxiomInstance, k: int):
    """Conjoin a consecutive instance to I (single-state path) or T."""
    lemma, placement = build_lemma(S, inst, k)
    name = S.add_lemma(lemma, "Init" if placement == "Init" else "Trans")
    return lemma, placement, name


def _primed_copy(S: TransitionSystem, t: Term):
    mgr = S.mgr
    m = {}
    for v in mgr.free_vars(t):
        nv = S.next_map.get(v)
        if nv is not None:
            m[v] = nv
    return mgr.substitute(t, m)


def reduce_axioms(session, U, candidates, kind, order_key=None):
    """Unsat-core pruning of candidate instances against the session state.

    Pre: the session already holds the unrolling.  If the candidates'
    conjunction with it is satisfiable the full set comes back; otherwise a
    subset that keeps the conjunction unsatisfiable, dropping (for
    non-consecutive candidates) targets at earlier times first, since those
    cost more history variables.
    """
    if not candidates:
        return []
    insts = [c[0] if isinstance(c, tuple) else c for c in candidates]
    session.push()
    try:
        for j, inst in enumerate(insts):
            session.assert_term(inst.formula, f"cand{j}")
        if session.check_sat() != "unsat":
            return list(candidates)
        core = session.get_unsat_core()
        keep = [j for j in range(len(insts)) if f"cand{j}" in core]
    finally:
        session.pop()
    if order_key is None and kind == "NonConsecutive":
        def order_key(j):
            n = insts[j].n_i
            return (n if n is not None else 0, j)
    elif order_key is None:
        def order_key(j):
            return j

    def still_unsat(subset):
        session.push()
        try:
            for j in subset:
                session.assert_term(insts[j].formula)
            return session.check_sat() == "unsat"
        finally:
            session.pop()

    budget = 8
    for j in sorted(keep, key=order_key):
        if budget <= 0 or len(keep) <= 1:
            break
        trial = [x for x in keep if x != j]
        budget -= 1
        if still_unsat(trial):
            keep = trial
    return [candidates[j] for j in keep]


def refine_arrays(S: TransitionSystem, P: Property, k: int, amap,
                  session=None, assume_prestate=True, reduce_proph=True,
                  reduce_cons=True, core_filter=True, max_iters=200,
                  telemetry=None, solver=None) -> RefineOutcome:
    mgr = S.mgr
    S = S.clone()
    aux_mark = len(S.aux_log)
    orig_property = P
    own_session = session is None
    if own_session:
        session = SolverSession(mgr, logic="QF_UFLIA", command=solver,
                                telemetry=telemetry)
    out = RefineOutcome(S, P, False)
    iset = ax.compute_indices(S, P, k, amap)
    U = unroll(S, P, k, side=iset.side, assume_prestate=assume_prestate)
    lemma_names_this_call = []
    try:
        for name, t in U.assertions:
            session.assert_term(t, name)
        for it in range(max_iters):
            out.iterations = it + 1
            verdict = session.check_sat()
            if verdict == "unknown":
                raise ResourceOut("solver returned unknown during refinement")
            if verdict == "unsat":
                if core_filter and lemma_names_this_call:
                    core = session.get_unsat_core()
                    used = {U.lemma_copies.get(n) for n in core}
                    drop = [n for n in lemma_names_this_call if n not in used]
                    if drop:
                        S.drop_lemmas(drop)
                if reduce_proph and len(S.aux_log) > aux_mark:
                    S, P = _prune_prophecies(
                        S, P, orig_property, U, k, aux_mark,
                        lemma_names_this_call, solver, telemetry,
                        assume_prestate)
                out.refined = True
                out.system = S
                out.property = P
                out.added_aux = S.aux_log[aux_mark:]
                return out
            known = {t.id for tag, _, t in
                     S.init_conjuncts + S.trans_conjuncts if tag == "lemma"}

            def artifact(inst):
                """Violated only at query-local points whose promoted lemma
                is already lifted: the model is repairable there."""
                if not any(isinstance(v.kind, TimedK) and
                           isinstance(v.kind.base.kind, (WitnessK, LambdaK))
                           for v in mgr.free_vars(inst.formula)):
                    return False
                lemma, _placement = build_lemma(S, inst, k)
                return lemma.id in known

            model = session.harvest_model(U.terms())
            ca, nca = ax.check_array_axioms(model, iset, U, amap,
                                            skip=artifact)
            out.instances.extend(ca)
            out.instances.extend(i for i, _ in nca)

            # frozen per-step targets retime; query-local targets promote
            proph_cands = []
            for inst, entry in nca:
                base_kind = entry.term.kind.base.kind \
                    if isinstance(entry.term.kind, TimedK) else None
                if isinstance(base_kind, (LambdaK, ProphecyK)):
                    twin = ax.retime_entry(mgr, inst, entry)
                    if twin is not None and not artifact(twin) and \
                            model.evaluate(twin.formula) is False:
                        ca.append(twin)
                        continue
                if isinstance(base_kind, (WitnessK, LambdaK, ProphecyK)):
                    if artifact(inst):
                        continue
                    w = S.promote_frozen(entry.term.kind.base)
                    fml = mgr.substitute(inst.formula, {entry.term: w})
                    cls, n_i = ax.classify(mgr, fml, w)
                    ca.append(ax.AxiomInstance(inst.schema, fml, inst.trigger,
                                               w, cls, n_i))
                    continue
                proph_cands.append((inst, entry))

            if not ca and not proph_cands:
                model.detach()
                out.refined = False
                out.system = S
                out.property = P
                out.model = model
                out.added_aux = S.aux_log[aux_mark:]
                return out

            if reduce_proph and proph_cands:
                session.push()
                try:
                    for inst in ca:
                        session.assert_term(inst.formula)
                    proph_cands = reduce_axioms(session, U, proph_cands,
                                                "NonConsecutive")
                finally:
                    session.pop()

            new_aux = False
            for inst, entry in proph_cands:
                target, n_i = _untime_target(mgr, entry.term)
                if target is None:
                    continue  # mixed-step target: not prophecizable
                ts_rest = mgr.times_of(inst.formula) - {n_i}
                if not ts_rest:
                    ca.append(ax.AxiomInstance(inst.schema, inst.formula,
                                               inst.trigger, inst.inst_index,
                                               ax.CONSECUTIVE, None))
                    continue
                n_min = min(ts_rest)
                delta = (k - 1) - n_i
                nvars = len(S.state_vars)
                S, P, p = prophecize(S, P, target, delta)
                out.system, out.property = S, P
                if len(S.state_vars) > nvars:
                    new_aux = True
                    _assert_new_aux(session, U, S, k, nvars)
                    _assert_goal_strengthening(session, U, S, P, k)
                    iset.add_prophecy(mgr, p)
                    _assert_lambda_guards(session, U, iset, p, k)
                ax_c = mgr.substitute(inst.formula,
                                      {entry.term: timed_var(mgr, p, n_min)})
                cls, _n = ax.classify(mgr, ax_c, None)
                ca.append(ax.AxiomInstance(inst.schema, ax_c, inst.trigger,
                                           timed_var(mgr, p, n_min), cls, _n))

            if reduce_cons and len(ca) > 1:
                ca = reduce_axioms(session, U, ca, "Consecutive")

            progressed = new_aux
            for inst in ca:
                if not inst.is_consecutive():
                    raise NotConsecutive(str(inst.formula))
                lemma, placement = build_lemma(S, inst, k)
                if lemma.id in known:
                    continue  # another timed copy of a lifted lemma
                known.add(lemma.id)
                name = S.add_lemma(lemma,
                                   "Init" if placement == "Init" else "Trans")
                out.added_lemmas.append((lemma, placement))
                lemma_names_this_call.append(name)
                _assert_lemma_copies(session, U, S, lemma, name, k)
                progressed = True
            if not progressed:
                raise RefinementStuck(
                    "iteration added no new lemma and no auxiliary variable "
                    "while BMC stays satisfiable")
        raise ResourceOut(f"refinement exceeded {max_iters} iterations at "
                          f"bound {k}")
    finally:
        if own_session:
            session.close()


def _prune_prophecies(S, P, orig_P, U, k, aux_mark, lemma_names, solver,
                      telemetry, assume_prestate):
    """Unsat-core pruning of prophecy refinement axioms at the bound's exit.

    Tries to drop lemmas that depend on this call's auxiliary variables,
    preferring targets at earlier times (they cost more history variables);
    auxiliaries that end up unreferenced are removed and the weakened
    property is rebuilt from the survivors.
    """
    from .sts import HistoryChain, ProphecyVar
    mgr = S.mgr
    new_recs = S.aux_log[aux_mark:]
    new_proph = [r for r in new_recs if isinstance(r, ProphecyVar)]
    if not new_proph:
        return S, P
    aux_vars = set()
    for r in new_recs:
        aux_vars.update(r.vars if isinstance(r, HistoryChain) else [r.var])

    lemma_terms = {}
    for tag, name, t in S.init_conjuncts + S.trans_conjuncts:
        if tag == "lemma" and name in lemma_names:
            lemma_terms[name] = t
    cand = [n for n, t in lemma_terms.items()
            if mgr.free_vars(t) & aux_vars]
    if cand:
        # re-play the final query in a fresh session so single lemmas can be
        # left out; order candidates by the delay of the prophecy they use
        def delay_of(name):
            vs = mgr.free_vars(lemma_terms[name])
            ds = [r.delay for r in new_proph if r.var in vs]
            return (-(max(ds) if ds else 0), name)

        kept_names = {n for _, n, _ in
                      S.init_conjuncts + S.trans_conjuncts if n}
        base = [(n, t) for n, t in U.assertions
                if U.lemma_copies.get(n) is None or
                (U.lemma_copies[n] in kept_names and
                 U.lemma_copies[n] not in cand)]
        with SolverSession(mgr, logic="QF_UFLIA", command=solver,
                           telemetry=telemetry) as probe:
            for n, t in base:
                probe.assert_term(t)

            def ok_without(drop):
                probe.push()
                try:
                    for n, t in U.assertions:
                        ln = U.lemma_copies.get(n)
                        if ln in cand and ln not in drop:
                            probe.assert_term(t)
                    return probe.check_sat() == "unsat"
                finally:
                    probe.pop()

            dropped = set()
            budget = 8
            for name in sorted(cand, key=delay_of):
                if budget <= 0:
                    break
                budget -= 1
                if ok_without(dropped | {name}):
                    dropped.add(name)
            if dropped:
                S.drop_lemmas(dropped)

    # remove auxiliaries nothing references any more (suffix of this call's
    # log only, so earlier transformations stay untouched)
    while True:
        referenced = set()
        for tag, _n, t in S.init_conjuncts + S.trans_conjuncts:
            if tag in ("aux", "frozen"):
                continue
            referenced |= mgr.free_vars(t)
        keep_recs = []
        removed = set()
        for r in new_recs:
            if isinstance(r, ProphecyVar):
                if r.var in referenced:
                    keep_recs.append(r)
                else:
                    removed.add(r.var)
                    S._proph_memo.pop((r.target.id, r.delay), None)
            else:
                needed = max([0] + [
                    pr.delay for pr in new_recs
                    if isinstance(pr, ProphecyVar) and pr.var not in removed
                    and pr.target is r.target])
                needed = max([needed] + [
                    i + 1 for i, hv in enumerate(r.vars) if hv in referenced])
                if needed >= r.depth:
                    keep_recs.append(r)
                else:
                    for hv in r.vars[needed:]:
                        removed.add(hv)
                    if needed > 0:
                        keep_recs.append(HistoryChain(r.target, needed,
                                                      r.vars[:needed]))
                        S._delay_memo[r.target.id] = keep_recs[-1]
                    else:
                        S._delay_memo.pop(r.target.id, None)
        if not removed:
            break
        removed_next = {S.next_map[v] for v in removed if v in S.next_map}
        S.state_vars = [v for v in S.state_vars if v not in removed]
        S.frozen -= removed
        for v in removed:
            S.next_map.pop(v, None)

        def mentions_removed(t):
            return bool(mgr.free_vars(t) & (removed | removed_next))

        S.trans_conjuncts = [c for c in S.trans_conjuncts
                             if not (c[0] in ("aux", "frozen")
                                     and mentions_removed(c[2]))]
        S.aux_log = S.aux_log[:aux_mark] + keep_recs
        new_recs = keep_recs

    # rebuild the property from the surviving prophecies of this call
    prop = orig_P
    for r in S.aux_log[aux_mark:]:
        if not isinstance(r, ProphecyVar):
            continue
        anchor = r.target if r.delay == 0 else \
            S._delay_memo[r.target.id].vars[r.delay - 1]
        prop = Property(mgr.implies(mgr.eq(r.var, anchor), prop.formula),
                        prop.original)
    return S, prop


def saturate_frozen_index_axioms(S: TransitionSystem, amap):
    """Conjoin the array-axiom instances at every frozen auxiliary index
    (prophecy and promoted variables) as transition facts.

    Bound-level refinement only lifts instances the counterexample violates;
    when the counterexample happens to equate the prophecy with a real index,
    the at-prophecy instance looks satisfied and never gets lifted, yet the
    induction proof needs it as a state fact.  Every instance added here is
    valid in the theory of arrays, so the conjunction is sound.
    """
    from .sts import ProphecyVar
    mgr = S.mgr
    if amap is None or amap.empty():
        return S
    idxvars = [r.var for r in S.aux_log if isinstance(r, ProphecyVar)]
    idxvars += [v for v in S.state_vars
                if v in S.frozen and v.name.startswith("__idx_")]
    if not idxvars:
        return S
    S = S.clone()
    known = {t.id for tag, _, t in S.init_conjuncts + S.trans_conjuncts
             if tag == "lemma"}

    def add(t):
        if t.id not in known:
            known.add(t.id)
            S.add_lemma(t, "Trans")

    def primed(t):
        return _primed_copy(S, t)

    base_terms = [t for tag, _, t in S.init_conjuncts if tag != "frozen"] + \
                 [t for tag, _, t in S.trans_conjuncts if tag != "frozen"]
    writes, eqs = [], []
    seen = set()
    stack = list(base_terms)
    while stack:
        u = stack.pop()
        if u.id in seen:
            continue
        seen.add(u.id)
        if u.is_app("uf"):
            role = amap._fun_role.get(u.payload.name, ("",))[0]
            if role == "write":
                writes.append(u)
            elif role == "eq":
                eqs.append(u)
        elif u.is_app("=") and amap.is_abstract_array(u.children[0].sort):
            eqs.append(u)
        stack.extend(u.children)

    for p in idxvars:
        for cvar in amap.constarr_vars():
            isort = amap.sort_unmap[cvar.sort].index
            if isort != p.sort:
                continue
            ops = amap.op_map[cvar.sort]
            fact = mgr.eq(mgr.apply(ops.read, [cvar, p]),
                          amap.constarr_map[cvar])
            add(mgr.conj([fact, primed(fact)]))
        for w in sorted(set(writes), key=lambda u: u.id):
            isort = amap.sort_unmap[w.sort].index
            if isort != p.sort:
                continue
            ops = amap.op_map[w.sort]
            a, j, e = w.children
            hit = mgr.eq(p, j)
            rd = mgr.apply(ops.read, [w, p])
            add(mgr.conj([mgr.implies(hit, mgr.eq(rd, e)),
                          mgr.implies(mgr.not_(hit),
                                      mgr.eq(rd, mgr.apply(ops.read,
                                                           [a, p])))]))
        for eqt in sorted(set(eqs), key=lambda u: u.id):
            a, b = eqt.children
            if amap.sort_unmap[a.sort].index != p.sort:
                continue
            ops = amap.op_map[a.sort]
            cong = mgr.implies(eqt, mgr.eq(mgr.apply(ops.read, [a, p]),
                                           mgr.apply(ops.read, [b, p])))
            if any(isinstance(v.kind, NextK) for v in mgr.free_vars(eqt)):
                add(cong)  # already a transition-level fact
            else:
                add(mgr.conj([cong, primed(cong)]))
    return S


def _untime_target(mgr, t: Term):
    """Strip @n from a single-step timed term; None for mixed steps."""
    ts = mgr.times_of(t)
    if len(ts) != 1:
        return None, None
    n = next(iter(ts))
    m = {}
    for v in mgr.free_vars(t):
        if isinstance(v.kind, TimedK):
            if v.kind.step != n:
                return None, None
            m[v] = v.kind.base
    return mgr.substitute(t, m), n


def _assert_new_aux(session, U, S, k, old_nvars):
    """Timed copies of the transition conjuncts added by prophecize."""
    mgr = S.mgr
    new_vars = set(S.state_vars[old_nvars:])
    idx = 0
    for tag, _name, t in S.trans_conjuncts:
        if tag not in ("aux", "frozen"):
            continue
        if not (mgr.free_vars(t) & (new_vars | {S.next_map[v]
                                                for v in new_vars})):
            continue
        for i in range(k - 1):
            idx += 1
            nm = f"aux{len(U.assertions)}_{idx}_{i}"
            term = time_term(mgr, t, i)
            session.assert_term(term, nm)
            U.add(nm, term)


def _assert_goal_strengthening(session, U, S, P, k):
    """The weakened property adds a conjunct to the negated goal."""
    mgr = S.mgr
    # P.formula = (p = anchor) => old; the negation adds (p = anchor)@k-1
    f = P.formula
    if f.is_app("implies"):
        ante = time_term(mgr, f.children[0], k - 1)
        nm = f"goalx{len(U.assertions)}"
        session.assert_term(ante, nm)
        U.add(nm, ante)


def _assert_lambda_guards(session, U, iset, p, k):
    """Freshly added prophecy copies stay distinct from every lambda."""
    mgr = session.mgr
    lam = iset.lambdas.get(p.sort)
    if lam is None:
        return
    idx = 0
    for i in range(k):
        lv = timed_var(mgr, lam, i)
        for j in range(k + 1):
            pv = timed_var(mgr, p, j)
            t = mgr.not_(mgr.eq(lv, pv))
            iset.side.append(t)
            idx += 1
            nm = f"sidep{len(U.assertions)}_{idx}"
            session.assert_term(t, nm)
            U.add(nm, t)


def _assert_lemma_copies(session, U, S, lemma, name, k):
    mgr = S.mgr
    placement = None
    for tag, nm, t in S.init_conjuncts:
        if nm == name:
            placement = "Init"
            term = time_term(mgr, t, 0)
            session.assert_term(term, f"{name}@i")
            U.add(f"{name}@i", term, lemma=name)
    if placement is None:
        for tag, nm, t in S.trans_conjuncts:
            if nm == name:
                for i in range(k - 1):
                    term = time_term(mgr, t, i)
                    session.assert_term(term, f"{name}@t{i}")
                    U.add(f"{name}@t{i}", term, lemma=name)
