"""CEGAR driver, value-abstraction outer loop, CLI, and result emission.

Verdict gates: a Safe verdict must carry a certificate accepted by the
independent checker on both the abstract and the concrete system, and an
Unsafe verdict must carry a trace accepted by the replay oracle.  A gate
failure aborts with exit code 3 rather than emitting a wrong verdict.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field

from . import frontend
from .abstraction import (STRONG, WEAK, abstract_arrays, concretize,
                          concretize_system)
from .backend import SolverSession, Telemetry
from .errors import ProphicError, RefinementStuck, ResourceOut
from .prover import (FALSIFIED, PROVEN, UNKNOWN, ProveOptions,
                     check_certificate, prove, replay_trace,
                     trace_from_model)
from .refiner import refine_arrays, saturate_frozen_index_axioms
from .sts import HistoryChain, Property, ProphecyVar, TransitionSystem, \
    replay_aux
from .terms import (BOOL, INT, STATE, Term, TermManager, to_smt)


@dataclass
class EngineConfig:
    mode: str = WEAK
    engine: str = "kind"
    max_k: int = 25
    max_refine_iters: int = 200
    max_refinements: int = 50
    value_threshold: int = 10
    assume_prestate: bool = True
    value_abstraction: bool = True
    reduce_proph: bool = True
    reduce_cons: bool = True
    core_filter: bool = True
    solver: str = None
    property_index: int = 0
    timeout: float = None
    witness_path: str = None
    stats_path: str = None


@dataclass
class Verdict:
    kind: str                    # safe | unsafe | unknown
    stats: dict
    certificate: Term = None
    cert_system: TransitionSystem = None
    trace: list = None
    bound: int = None
    reason: str = ""


class Stats:
    def __init__(self):
        self.t0 = time.time()
        self.telemetry = Telemetry()
        self.refuted_bounds = []
        self.n_refine_rounds = 0
        self.n_lemmas = 0
        self.n_prophecy = 0
        self.n_history = 0
        self.verdict = "unknown"
        self.bound = None

    def count_aux(self, S: TransitionSystem):
        self.n_prophecy = sum(1 for r in S.aux_log
                              if isinstance(r, ProphecyVar))
        self.n_history = sum(r.depth for r in S.aux_log
                             if isinstance(r, HistoryChain))
        self.n_lemmas = sum(1 for tag, _, _ in
                            S.init_conjuncts + S.trans_conjuncts
                            if tag == "lemma")

    def as_dict(self):
        return {
            "verdict": self.verdict,
            "bound": self.bound,
            "n_prophecy": self.n_prophecy,
            "n_history": self.n_history,
            "n_lemmas": self.n_lemmas,
            "n_refine_rounds": self.n_refine_rounds,
            "n_solver_queries": self.telemetry.solver_queries,
            "refuted_bounds": self.refuted_bounds,
            "time_ms": int((time.time() - self.t0) * 1000),
        }


# ---------------------------------------------------------------------------
# value abstraction


def value_abstract(S: TransitionSystem, P: Property, threshold: int):
    """Replace integer literals beyond the threshold by fresh frozen
    variables, keeping the total order among the replaced values."""
    mgr = S.mgr
    lits = set()

    def scan(t):
        stack = [t]
        seen = set()
        while stack:
            u = stack.pop()
            if u.id in seen:
                continue
            seen.add(u.id)
            if u.tag == "int" and abs(u.value) > threshold:
                lits.add(u.value)
            stack.extend(u.children)

    for _tag, _n, t in S.init_conjuncts + S.trans_conjuncts:
        scan(t)
    scan(P.formula)
    scan(P.original)
    if not lits:
        return S, P, {}
    sub = {}
    vmap = {}
    for c in sorted(lits):
        v = mgr.var(mgr.fresh_name(f"__vc_{c}_"), INT, STATE)
        sub[mgr.intlit(c)] = v
        vmap[v] = c

    def rw(t):
        return mgr.substitute(t, sub)

    out = TransitionSystem(mgr)
    out.state_vars = list(S.state_vars)
    out.next_map = dict(S.next_map)
    out.input_vars = list(S.input_vars)
    out.frozen = set(S.frozen)
    out.aux_log = list(S.aux_log)
    for tag, n, t in S.init_conjuncts:
        out.init_conjuncts.append((tag, n, rw(t)))
    for tag, n, t in S.trans_conjuncts:
        out.trans_conjuncts.append((tag, n, rw(t)))
    for v in sub.values():
        out.add_state_var(v)
        out.mark_frozen(v)
    ordered = sorted(vmap, key=lambda v: vmap[v])
    for a, b in zip(ordered, ordered[1:]):
        out.conjoin_init(mgr.lt(a, b), tag="va")
    newP = Property(rw(P.formula), rw(P.original))
    return out, newP, vmap


# ---------------------------------------------------------------------------
# certificate plumbing


def restore_values(S: TransitionSystem, P: Property, vmap):
    """Substitute abstracted literals back (inverse of value abstraction)."""
    if not vmap:
        return S, P
    mgr = S.mgr
    back = {v: mgr.intlit(c) for v, c in vmap.items()}

    def rw(t):
        return mgr.substitute(t, back)

    out = S.clone()
    out.state_vars = [v for v in S.state_vars if v not in vmap]
    out.frozen = {v for v in S.frozen if v not in vmap}
    for v in vmap:
        out.next_map.pop(v, None)
    out.init_conjuncts = [(tag, n, rw(t)) for tag, n, t in S.init_conjuncts
                          if tag != "va" and not
                          (tag == "frozen" and mgr.free_vars(t) & set(vmap))]
    out.trans_conjuncts = [(tag, n, rw(t)) for tag, n, t in S.trans_conjuncts
                           if not (tag == "frozen"
                                   and mgr.free_vars(t) & set(vmap))]
    return out, Property(rw(P.formula), rw(P.original))


def simplify_certificate(S_cert, inv: Term, opts: ProveOptions) -> Term:
    """Drop valid conjuncts and absorbed disjuncts (oracle-checked)."""
    mgr = S_cert.mgr
    from .prover import logic_for
    conjs = mgr.conjuncts(inv)
    out = []
    with SolverSession(mgr, logic=logic_for(mgr, [inv, S_cert.init]),
                       command=opts.solver,
                       telemetry=opts.telemetry) as s:
        def valid(t):
            verdict, _ = s.check([mgr.not_(t)], want=None)
            return verdict == "unsat"

        for c in conjs:
            if valid(c):
                continue
            if c.is_app("or") and len(c.children) == 2:
                d1, d2 = c.children
                if valid(mgr.implies(d1, d2)):
                    c = d2
                elif valid(mgr.implies(d2, d1)):
                    c = d1
            if c not in out:
                out.append(c)
    return mgr.conj(out) if out else mgr.true_


# ---------------------------------------------------------------------------
# the loop


def run(config: EngineConfig, doc, mgr: TermManager = None) -> Verdict:
    stats = Stats()
    if isinstance(doc, str):
        mgr = mgr or TermManager()
        S, props = frontend.parse_vmt(doc, mgr)
    else:
        S, props = doc
        mgr = S.mgr
    if config.property_index >= len(props):
        raise ProphicError(f"no property with index {config.property_index}")
    P = props[config.property_index]
    deadline = None if config.timeout is None \
        else time.time() + config.timeout
    use_va = config.value_abstraction
    while True:
        if use_va:
            S_run, P_run, vmap = value_abstract(S, P, config.value_threshold)
        else:
            S_run, P_run, vmap = S, P, {}
        verdict = _cegar(config, S, P, S_run, P_run, vmap, stats, deadline)
        if verdict.kind == "unsafe" and vmap and verdict.trace is None:
            # spurious under value abstraction: restore literals and re-run
            use_va = False
            continue
        stats.verdict = verdict.kind
        verdict.stats = stats.as_dict()
        return verdict


def _cegar(config, S_orig, P_orig, S_run, P_run, vmap, stats, deadline):
    mgr = S_run.mgr
    Shat, Phat, amap = abstract_arrays(S_run, P_run, mode=config.mode)
    opts = ProveOptions(engine=config.engine, max_k=config.max_k,
                        assume_prestate=config.assume_prestate,
                        solver=config.solver, telemetry=stats.telemetry,
                        deadline=deadline, amap=amap)
    while True:
        if deadline is not None and time.time() > deadline:
            return Verdict("unknown", {}, reason="wall-clock budget")
        Ssat = saturate_frozen_index_axioms(Shat, amap) \
            if config.engine == "kind" else Shat
        stats.count_aux(Ssat)
        res = prove(Ssat, Phat, opts)
        if res.status == PROVEN:
            return _gate_safe(config, S_orig, P_orig, S_run, P_run, vmap,
                              res, Ssat, Phat, amap, stats, opts)
        if res.status == UNKNOWN:
            return Verdict("unknown", {}, reason=res.reason)
        stats.bound = res.k
        if stats.n_refine_rounds >= config.max_refinements:
            return Verdict("unknown", {},
                           reason="refinement-round budget exhausted")
        stats.n_refine_rounds += 1
        try:
            out = refine_arrays(Shat, Phat, res.k, amap,
                                assume_prestate=config.assume_prestate,
                                reduce_proph=config.reduce_proph,
                                reduce_cons=config.reduce_cons,
                                core_filter=config.core_filter,
                                max_iters=config.max_refine_iters,
                                telemetry=stats.telemetry,
                                solver=config.solver)
        except (ResourceOut, RefinementStuck) as ex:
            return Verdict("unknown", {}, reason=str(ex))
        if out.refined:
            stats.refuted_bounds.append(res.k)
            Shat, Phat = out.system, out.property
            stats.count_aux(Shat)
            continue
        return _gate_unsafe(config, S_orig, P_orig, S_run, P_run, vmap,
                            out, res.k, stats, opts)


def _gate_safe(config, S_orig, P_orig, S_run, P_run, vmap, res, Shat, Phat,
               amap, stats, opts):
    inv = res.invariant
    if inv is None or not check_certificate(res.cert_system, Phat, inv, opts):
        raise ProphicError("internal soundness gate: abstract certificate "
                           "rejected")
    # concrete side: the whole certificate system concretizes, then the
    # abstracted literals are restored
    cert_sys = concretize_system(amap, res.cert_system)
    inv_conc = concretize(amap, inv)
    P_conc = Property(concretize(amap, Phat.formula), P_orig.original)
    if vmap:
        mgr = S_run.mgr
        back = {v: mgr.intlit(c) for v, c in vmap.items()}
        cert_sys, P_conc = restore_values(cert_sys, P_conc, vmap)
        inv_conc = mgr.substitute(inv_conc, back)
    inv_conc = simplify_certificate(cert_sys, inv_conc, opts)
    if not check_certificate(cert_sys, P_conc, inv_conc, opts):
        raise ProphicError("internal soundness gate: concrete certificate "
                           "rejected")
    stats.count_aux(Shat)
    return Verdict("safe", {}, certificate=inv_conc, cert_system=cert_sys)


def _gate_unsafe(config, S_orig, P_orig, S_run, P_run, vmap, out, k, stats,
                 opts):
    mgr = S_orig.mgr
    scalars = set(S_orig.state_vars)
    trace_full = trace_from_model(out.system, out.model, k)
    trace = [{v: val for v, val in st.items() if v in scalars}
             for st in trace_full]
    if vmap:
        # the trace must still exist once the literals are restored
        if not replay_trace(S_orig, P_orig, trace, opts):
            return Verdict("unsafe", {}, trace=None, bound=k)  # spurious
    if not replay_trace(S_orig, P_orig, trace, opts):
        raise ProphicError("internal soundness gate: counterexample replay "
                           "rejected")
    stats.bound = k
    return Verdict("unsafe", {}, trace=trace, bound=k)


# ---------------------------------------------------------------------------
# witness / CLI


def emit_witness(verdict: Verdict, sink=None) -> str:
    lines = []
    if verdict.kind == "safe":
        lines.append("(invariant")
        lines.append("  " + to_smt(verdict.certificate))
        lines.append(")")
        for rec in verdict.cert_system.aux_log:
            if isinstance(rec, HistoryChain):
                lines.append(f"(aux history {to_smt(rec.target)} "
                             f"{rec.depth})")
            else:
                lines.append(f"(aux prophecy {rec.var.name} "
                             f"{to_smt(rec.target)} {rec.delay})")
    elif verdict.kind == "unsafe":
        for i, st in enumerate(verdict.trace):
            cells = " ".join(
                f"({v.name} {_fmt_value(val)})"
                for v, val in sorted(st.items(), key=lambda kv: kv[0].name))
            lines.append(f"(state {i} {cells})")
    text = "\n".join(lines) + ("\n" if lines else "")
    if sink:
        with open(sink, "w") as fh:
            fh.write(text)
    return text


def _fmt_value(v):
    if v is True:
        return "true"
    if v is False:
        return "false"
    if isinstance(v, int):
        return str(v) if v >= 0 else f"(- {-v})"
    return str(v)


def main(argv=None):
    ap = argparse.ArgumentParser(
        prog="prophic",
        description="Model checker for array programs via uninterpreted-"
                    "function abstraction and counterexample-guided "
                    "prophecy.")
    ap.add_argument("file", help="VMT input file, or - for stdin")
    ap.add_argument("--engine", default="kind",
                    help="kind | bmc-only | external:<path>")
    ap.add_argument("--solver", default=None,
                    help="SMT solver command (default: bundled solver; "
                    "PROPHIC_SOLVER env var also honored)")
    ap.add_argument("--weak", dest="mode", action="store_const", const=WEAK,
                    default=WEAK, help="weak array abstraction (default)")
    ap.add_argument("--strong", dest="mode", action="store_const",
                    const=STRONG, help="strong array abstraction")
    ap.add_argument("--max-k", type=int, default=25)
    ap.add_argument("--property", type=int, default=0, metavar="IDX")
    ap.add_argument("--witness", metavar="OUT")
    ap.add_argument("--stats", metavar="OUT")
    ap.add_argument("--timeout", type=float, default=None, metavar="S")
    ap.add_argument("--max-refinements", type=int, default=50)
    ap.add_argument("--max-refine-iters", type=int, default=200)
    ap.add_argument("--value-threshold", type=int, default=10)
    ap.add_argument("--no-value-abstraction", "--nav", dest="nav",
                    action="store_true")
    ap.add_argument("--no-assume-prestate", "--na", dest="na",
                    action="store_true")
    ap.add_argument("--no-proph-reduction", "--npr", dest="npr",
                    action="store_true")
    ap.add_argument("--no-unsatcore-reduction", "--nur", dest="nur",
                    action="store_true")
    ap.add_argument("--no-axiom-reduction", "--nar", dest="nar",
                    action="store_true")
    args = ap.parse_args(argv)

    config = EngineConfig(
        mode=args.mode, engine=args.engine, max_k=args.max_k,
        max_refine_iters=args.max_refine_iters,
        max_refinements=args.max_refinements,
        value_threshold=args.value_threshold,
        assume_prestate=not args.na,
        value_abstraction=not args.nav,
        reduce_proph=not args.npr,
        core_filter=not args.nur,
        reduce_cons=not args.nar,
        solver=args.solver, property_index=args.property,
        timeout=args.timeout,
        witness_path=args.witness, stats_path=args.stats)

    try:
        text = sys.stdin.read() if args.file == "-" \
            else open(args.file).read()
        verdict = run(config, text)
    except ProphicError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 3
    except OSError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 3

    print(verdict.kind)
    if verdict.kind == "unknown" and verdict.reason:
        print(f"; reason: {verdict.reason}")
    if args.witness and verdict.kind in ("safe", "unsafe"):
        emit_witness(verdict, args.witness)
    if args.stats:
        with open(args.stats, "w") as fh:
            json.dump(verdict.stats, fh, indent=2)
            fh.write("\n")
    return {"safe": 0, "unsafe": 1, "unknown": 2}[verdict.kind]


if __name__ == "__main__":
    sys.exit(main())
