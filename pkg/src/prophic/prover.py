"""The pluggable Prove step: builtin BMC + k-induction with conjunctive
certificate synthesis, an external-engine adapter, and the independent
certificate/trace checkers.

The builtin engine interleaves bounded bug search with k-induction step
queries.  Plain k-induction rarely closes array-refined systems on its own
(the strengthening conjunct the paper derives, e.g. read(a,p) < bound, is
not implied by the property), so a Houdini-style pass over syntactically
mined candidate conjuncts supplies 1-inductive certificates; a mechanical
history-window certificate backs proofs that only k-induction finds.
"""

from __future__ import annotations

import os
import subprocess
import tempfile
import time
from dataclasses import dataclass, field

from . import frontend
from .backend import SolverSession, Telemetry
from .bmc import bmc_check, time_term, unroll
from .errors import EngineCrashed, InvalidTrace, ResourceOut
from .sts import Property, ProphecyVar, TransitionSystem, delay
from .terms import (ArraySort, BOOL, INT, ProphecyK, STATE, Term,
                    TermManager)

PROVEN = "proven"
FALSIFIED = "falsified"
UNKNOWN = "unknown"


@dataclass
class ProveResult:
    status: str
    k: int = None
    model: object = None
    invariant: Term = None
    cert_system: TransitionSystem = None   # where the invariant is inductive
    reason: str = ""


@dataclass
class ProveOptions:
    engine: str = "kind"
    max_k: int = 25
    assume_prestate: bool = True
    solver: object = None
    telemetry: Telemetry = None
    kind_timeout: float = None
    deadline: float = None
    amap: object = None     # abstraction map, feeds candidate mining


def logic_for(mgr, terms):
    for t in terms:
        stack = [t]
        seen = set()
        while stack:
            u = stack.pop()
            if u.id in seen:
                continue
            seen.add(u.id)
            if isinstance(u.sort, ArraySort):
                return "QF_AUFLIA"
            stack.extend(u.children)
    return "QF_UFLIA"


def _session(mgr, terms, opts, timeout=None):
    return SolverSession(mgr, logic=logic_for(mgr, terms),
                         command=opts.solver if opts else None,
                         timeout=timeout,
                         telemetry=opts.telemetry if opts else None)


def _out_of_time(opts):
    return opts.deadline is not None and time.time() > opts.deadline


# ---------------------------------------------------------------------------
# builtin engine


def prove(S: TransitionSystem, P: Property, opts: ProveOptions = None):
    opts = opts or ProveOptions()
    if opts.engine.startswith("external:"):
        return prove_external(S, P, opts.engine[len("external:"):], opts)
    mgr = S.mgr
    houd = None
    with _session(mgr, [S.init, S.trans, P.formula], opts,
                  timeout=opts.kind_timeout) as session:
        for k in range(1, opts.max_k + 1):
            if _out_of_time(opts):
                return ProveResult(UNKNOWN, reason="wall-clock budget")
            verdict, model = bmc_check(
                session, unroll(S, P, k, assume_prestate=opts.assume_prestate),
                want_core=False)
            if verdict == "sat":
                return ProveResult(FALSIFIED, k=k, model=model)
            if verdict == "unknown":
                return ProveResult(UNKNOWN, reason="solver unknown in BMC")
            if opts.engine == "bmc-only":
                continue
            if k == 1 and houd is None:
                houd = synthesize_certificate(S, P, opts, session)
                if houd is not None:
                    return ProveResult(PROVEN, invariant=houd, cert_system=S)
                if opts.assume_prestate:
                    # the original property may be assumed before the first
                    # violation; certificates then live on the
                    # assumption-strengthened system
                    houd = synthesize_certificate(S, P, opts, session,
                                                  assume=P.original)
                    if houd is not None:
                        ext = S.clone()
                        ext.conjoin_trans(P.original, tag="assume")
                        return ProveResult(PROVEN, invariant=houd,
                                           cert_system=ext)
                    houd = None
            if _kind_step(session, S, P, k, opts):
                if houd is not None:
                    return ProveResult(PROVEN, invariant=houd, cert_system=S)
                ext, inv = kind_certificate(S, P, k)
                return ProveResult(PROVEN, invariant=inv, cert_system=ext)
    return ProveResult(UNKNOWN, reason=f"no proof up to max-k "
                                       f"{opts.max_k}")


def _kind_step(session, S, P, k, opts):
    """k transitions, property assumed at all pre-states, negated at the end."""
    mgr = S.mgr
    session.push()
    try:
        for i in range(k):
            session.assert_term(time_term(mgr, S.trans, i))
            session.assert_term(time_term(mgr, P.formula, i))
            if opts.assume_prestate:
                session.assert_term(time_term(mgr, P.original, i))
        session.assert_term(mgr.not_(time_term(mgr, P.formula, k)))
        return session.check_sat() == "unsat"
    finally:
        session.pop()


# ---------------------------------------------------------------------------
# certificate synthesis (conjunctive strengthening over mined candidates)


def _mine_candidates(S: TransitionSystem, P: Property, amap):
    mgr = S.mgr
    cands = []

    def add(t):
        if t not in cands:
            cands.append(t)

    add(P.formula)
    add(P.original)
    init_conjs = [t for tag, _, t in S.init_conjuncts if tag != "lemma"]
    for c in init_conjs:
        add(c)
        if c.is_app("=") and c.children[0].is_var() \
                and c.children[1].tag == "int":
            v, lit = c.children
            add(mgr.le(lit, v))
            add(mgr.le(v, lit))

    prophs = [r for r in S.aux_log if isinstance(r, ProphecyVar)]

    # next-state definitions transported into property atoms, with prophecy
    # variables standing in for their targets
    defs = {}
    for _tag, _n, t in S.trans_conjuncts:
        if t.is_app("=") and t.children[0].is_var():
            base = None
            for v, nv in S.next_map.items():
                if nv is t.children[0]:
                    base = v
                    break
            if base is not None and base not in S.frozen:
                defs[base] = t.children[1]
    atoms = mgr.atoms(P.original) + mgr.atoms(P.formula)
    for a in atoms:
        for v, rhs in defs.items():
            if v in mgr.free_vars(a):
                cand = mgr.substitute(a, {v: rhs})
                add(cand)
                for pr in prophs:
                    if pr.target in mgr.free_vars(cand):
                        add(mgr.substitute(cand, {pr.target: pr.var}))

    # written-cell contents at a prophesied index, guarded by the sweep
    writes = []
    if amap is not None:
        seen = set()
        stack = [t for _, _, t in S.trans_conjuncts]
        while stack:
            u = stack.pop()
            if u.id in seen:
                continue
            seen.add(u.id)
            if u.is_app("uf") and \
                    amap._fun_role.get(u.payload.name, ("",))[0] == "write":
                writes.append(u)
            stack.extend(u.children)
    lows = [t.children[1] for t in init_conjs
            if t.is_app("=") and t.children[0].is_var()
            and t.children[1].tag == "int"]
    for w in sorted(set(writes), key=lambda u: u.id):
        arr, idx, elem = w.children
        if not (arr.is_var() and idx.is_var()):
            continue
        ops = amap.op_map[arr.sort]
        ok_elem = all(v in S.next_map for v in mgr.free_vars(elem))
        if not ok_elem:
            continue
        for pr in prophs:
            if pr.var.sort != idx.sort:
                continue
            # the cell at p holds whatever was written when the sweep index
            # passed p
            elem_at = mgr.substitute(elem, {idx: pr.var})
            cell = mgr.eq(mgr.apply(ops.read, [arr, pr.var]), elem_at)
            add(mgr.implies(mgr.lt(pr.var, idx), cell))
            for low in lows:
                add(mgr.implies(mgr.conj([mgr.le(low, pr.var),
                                          mgr.lt(pr.var, idx)]), cell))

    # rescue candidates that fail initiation by disjoining an init conjunct
    rescued = []
    for c in list(cands):
        if c.sort != BOOL:
            continue
        for ic in init_conjs[:4]:
            if ic is not c:
                rescued.append(mgr.disj([ic, c]))
    cands.extend(t for t in rescued if t not in cands)
    return cands[:250]


def synthesize_certificate(S: TransitionSystem, P: Property,
                           opts: ProveOptions = None, session=None,
                           assume=None):
    """Largest inductive conjunction of mined candidates entailing P.

    With `assume`, consecution holds modulo that pre-state assumption (the
    caller must then put the assumption into the certificate system).
    Returns the invariant term, or None when the surviving conjunction does
    not entail the property.
    """
    opts = opts or ProveOptions()
    mgr = S.mgr
    cands = _mine_candidates(S, P, opts.amap)
    own = session is None
    if own:
        session = _session(mgr, [S.init, S.trans, P.formula], opts,
                           timeout=opts.kind_timeout)
    try:
        # initiation: drop candidates false in some initial state
        for _ in range(len(cands) + 1):
            if not cands:
                break
            session.push()
            try:
                session.assert_term(S.init)
                session.assert_term(mgr.not_(mgr.conj(cands)))
                if session.check_sat() != "sat":
                    break
                vals = session.get_values(cands)
            finally:
                session.pop()
            cands = [c for c, v in zip(cands, vals) if v is True]
        # consecution: drop candidates not preserved by the conjunction
        for _ in range(len(cands) + 1):
            if not cands:
                break
            primed = [_prime(S, c) for c in cands]
            session.push()
            try:
                session.assert_term(mgr.conj(cands))
                session.assert_term(S.trans)
                if assume is not None:
                    session.assert_term(assume)
                session.assert_term(mgr.not_(mgr.conj(primed)))
                if session.check_sat() != "sat":
                    break
                vals = session.get_values(primed)
            finally:
                session.pop()
            cands = [c for c, v in zip(cands, vals) if v is True]
        if not cands:
            return None
        inv = mgr.conj(cands)
        session.push()
        try:
            session.assert_term(inv)
            session.assert_term(mgr.not_(P.formula))
            if session.check_sat() != "unsat":
                return None
        finally:
            session.pop()
        return inv
    finally:
        if own:
            session.close()


def _prime(S: TransitionSystem, t: Term) -> Term:
    mgr = S.mgr
    m = {v: nv for v, nv in S.next_map.items() if v in mgr.free_vars(t)}
    return mgr.substitute(t, m)


# ---------------------------------------------------------------------------
# mechanical certificate from a k-induction proof


def kind_certificate(S: TransitionSystem, P: Property, k: int):
    """1-inductive certificate over the system extended with a step counter
    and a k-deep history window of the full state."""
    mgr = S.mgr
    ext = S.clone()
    cname = mgr.fresh_name("__steps")
    c = mgr.var(cname, INT, STATE)
    ext.add_state_var(c)
    ext.conjoin_init(mgr.eq(c, mgr.intlit(0)), tag="aux")
    ext.conjoin_trans(mgr.eq(ext.next_map[c], mgr.add([c, mgr.intlit(1)])),
                      tag="aux")
    base_vars = list(S.state_vars)
    hist = {0: {v: v for v in base_vars}}
    for j in range(1, k):
        hist[j] = {}
        for v in base_vars:
            ext, hv = delay(ext, v, j)
            hist[j][v] = hv

    def at(t, j):
        sub = {}
        for v in mgr.free_vars(t):
            if v in hist[0] and j > 0:
                sub[v] = hist[j][v]
        return mgr.substitute(t, sub) if sub else t

    def trans_between(j):
        # T with X -> H_j, X' -> H_{j-1}
        sub = {}
        for v in base_vars:
            if j > 0:
                sub[v] = hist[j][v]
            nv = S.next_map[v]
            sub[nv] = hist[j - 1][v] if j - 1 > 0 else v
        return mgr.substitute(S.trans, sub)

    parts = [mgr.le(mgr.intlit(0), c)]
    for j in range(k):
        parts.append(mgr.implies(mgr.eq(c, mgr.intlit(j)),
                                 at(S.init, j)))
    for j in range(1, k):
        parts.append(mgr.implies(mgr.le(mgr.intlit(j), c),
                                 trans_between(j)))
    for j in range(k):
        body = mgr.conj([at(P.formula, j), at(P.original, j)])
        parts.append(mgr.implies(mgr.le(mgr.intlit(j), c), body))
    return ext, mgr.conj(parts)


# ---------------------------------------------------------------------------
# independent checkers


def check_certificate(S: TransitionSystem, P: Property, inv: Term,
                      opts: ProveOptions = None) -> bool:
    """inv is inductive for S and entails P: three oracle queries."""
    opts = opts or ProveOptions()
    mgr = S.mgr
    queries = [
        [S.init, mgr.not_(inv)],
        [inv, S.trans, mgr.not_(_prime(S, inv))],
        [inv, mgr.not_(P.formula)],
    ]
    with _session(mgr, [S.init, S.trans, inv, P.formula], opts) as session:
        for q in queries:
            verdict, _ = session.check(q, want=None)
            if verdict != "unsat":
                return False
    return True


def replay_trace(S: TransitionSystem, P: Property, trace,
                 opts: ProveOptions = None, pin=None) -> bool:
    """The trace's scalar assignments embed into a real execution violating
    P: init, every transition, and the final violation are satisfiable with
    the trace values pinned (array-valued state left to the solver)."""
    opts = opts or ProveOptions()
    if not trace:
        raise InvalidTrace("empty trace")
    mgr = S.mgr
    k = len(trace)
    U = unroll(S, P, k)
    assertions = [t for _, t in U.assertions]
    from .bmc import timed_var
    for i, state in enumerate(trace):
        for v, val in state.items():
            if isinstance(val, bool):
                tv = timed_var(mgr, v, i)
                assertions.append(tv if val else mgr.not_(tv))
            elif isinstance(val, int):
                assertions.append(mgr.eq(timed_var(mgr, v, i),
                                         mgr.intlit(val)))
    for t in (pin or []):
        assertions.append(t)
    with _session(mgr, [S.init, S.trans, P.formula], opts) as session:
        verdict, _ = session.check(assertions, want=None)
        return verdict == "sat"


def trace_from_model(S: TransitionSystem, model, k: int):
    """Scalar per-step assignments extracted from a BMC model."""
    mgr = S.mgr
    from .bmc import timed_var
    out = []
    for i in range(k):
        state = {}
        for v in S.state_vars:
            if v.sort not in (INT, BOOL):
                continue
            try:
                state[v] = model.var_value(timed_var(mgr, v, i))
            except Exception:
                continue
        out.append(state)
    return out


# ---------------------------------------------------------------------------
# external engine adapter


def prove_external(S: TransitionSystem, P: Property, path: str,
                   opts: ProveOptions):
    """Write VMT, run `<engine> <file>`, parse `safe|unsafe <k>|unknown`
    plus an optional SMT-LIB invariant on the following lines."""
    text = frontend.emit_vmt(S, P)
    budget = None
    if opts.deadline is not None:
        budget = max(1.0, opts.deadline - time.time())
    with tempfile.NamedTemporaryFile("w", suffix=".vmt",
                                     delete=False) as fh:
        fh.write(text)
        fname = fh.name
    try:
        proc = subprocess.run([path, fname], capture_output=True, text=True,
                              timeout=budget)
    except subprocess.TimeoutExpired:
        return ProveResult(UNKNOWN, reason="external engine budget")
    except OSError as e:
        raise EngineCrashed(f"cannot run engine {path}: {e}")
    finally:
        try:
            os.unlink(fname)
        except OSError:
            pass
    if proc.returncode not in (0, 1, 2):
        raise EngineCrashed(f"engine exited with {proc.returncode}: "
                            f"{proc.stderr[:500]}")
    lines = proc.stdout.strip().splitlines()
    if not lines:
        raise EngineCrashed("engine produced no verdict")
    head = lines[0].split()
    if head[0] == "safe":
        inv = None
        rest = "\n".join(lines[1:]).strip()
        if rest:
            inv = _parse_external_invariant(S, rest)
        return ProveResult(PROVEN, invariant=inv, cert_system=S)
    if head[0] == "unsafe":
        k = int(head[1]) if len(head) > 1 else 1
        return ProveResult(FALSIFIED, k=k, model=None)
    return ProveResult(UNKNOWN, reason="external engine unknown")


def _parse_external_invariant(S: TransitionSystem, text: str):
    env = frontend.VmtEnv(S.mgr)
    for v in S.state_vars:
        env.vars[v.name] = v
    from .smtsolver import sexpr
    exprs = sexpr.parse_all(text)
    if not exprs:
        return None
    e = exprs[0]
    if isinstance(e, list) and e and e[0] == "invariant":
        e = e[1]
    return frontend.parse_term(e, env)
