"""Abstract-Arrays: arrays become uninterpreted sorts, read/write become
uninterpreted functions, constant arrays become fresh frozen variables.

Weak mode additionally replaces equality between abstract arrays by an
uninterpreted predicate (the default engine configuration); strong mode
keeps native equality.  Frozen-variable conjuncts introduced by the
abstraction itself always use native equality.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import FiniteIndexSort, NestedArray, UnmappedSymbol
from .sts import Property, TransitionSystem
from .terms import (ArraySort, BOOL, BoolSort, HistoryK, INT, IntSort, NextK,
                    ProphecyK, STATE, Term, TermManager, TimedK, USort)

STRONG = "strong"
WEAK = "weak"


@dataclass
class ArrayOps:
    sort: USort
    read: object         # FunSym
    write: object
    eq: object = None    # FunSym, weak mode only


@dataclass
class AbstractionMap:
    mode: str
    mgr: TermManager = None
    sort_map: dict = field(default_factory=dict)      # ArraySort -> USort
    sort_unmap: dict = field(default_factory=dict)    # USort -> ArraySort
    var_map: dict = field(default_factory=dict)       # concrete -> abstract
    var_unmap: dict = field(default_factory=dict)
    constarr_map: dict = field(default_factory=dict)  # abs var -> elem Term
    constarr_terms: dict = field(default_factory=dict)  # abs var -> constarr
    op_map: dict = field(default_factory=dict)        # USort -> ArrayOps
    _fun_role: dict = field(default_factory=dict)     # FunSym name -> role

    def is_abstract_array(self, sort):
        return isinstance(sort, USort) and sort in self.sort_unmap

    def empty(self):
        return not self.sort_map

    def constarr_vars(self):
        return list(self.constarr_map)


def _check_array_sort(sort: ArraySort):
    if isinstance(sort.index, ArraySort) or isinstance(sort.elem, ArraySort):
        raise NestedArray(f"nested array sort {sort!r}")
    if not isinstance(sort.index, (IntSort, USort)):
        raise FiniteIndexSort(
            f"array index sort {sort.index!r} is not an infinite-domain "
            "sort (Int or uninterpreted)")


def abstract_arrays(S: TransitionSystem, P: Property, mode=WEAK):
    """Returns (abstract system, abstract property, AbstractionMap)."""
    mgr = S.mgr
    amap = AbstractionMap(mode, mgr)
    counter = [0]

    def abs_sort(sort):
        if not isinstance(sort, ArraySort):
            return sort
        got = amap.sort_map.get(sort)
        if got is not None:
            return got
        _check_array_sort(sort)
        counter[0] += 1
        u = USort(f"AbsArr{counter[0]}")
        amap.sort_map[sort] = u
        amap.sort_unmap[u] = sort
        read = mgr.declare_fun(f"__read{counter[0]}", [u, sort.index],
                               sort.elem)
        write = mgr.declare_fun(f"__write{counter[0]}",
                                [u, sort.index, sort.elem], u)
        eq = None
        amap._fun_role[read.name] = ("read", u)
        amap._fun_role[write.name] = ("write", u)
        if mode == WEAK:
            eq = mgr.declare_fun(f"__eqarr{counter[0]}", [u, u], BOOL)
            amap._fun_role[eq.name] = ("eq", u)
        amap.op_map[u] = ArrayOps(u, read, write, eq)
        return u

    def abs_var(v):
        got = amap.var_map.get(v)
        if got is not None:
            return got
        u = abs_sort(v.sort)
        kind = v.kind
        if isinstance(kind, NextK):
            kind = NextK(abs_var(kind.base))
        av = mgr.var(v.name + "^", u, kind)
        amap.var_map[v] = av
        amap.var_unmap[av] = v
        return av

    constarr_vars = []

    def rewrite(t, memo):
        r = memo.get(t.id)
        if r is not None:
            return r
        if t.is_var():
            r = abs_var(t) if isinstance(t.sort, ArraySort) else t
        elif t.is_app("read"):
            a, i = (rewrite(c, memo) for c in t.children)
            ops = amap.op_map[a.sort]
            r = mgr.apply(ops.read, [a, i])
        elif t.is_app("write"):
            a, i, e = (rewrite(c, memo) for c in t.children)
            ops = amap.op_map[a.sort]
            r = mgr.apply(ops.write, [a, i, e])
        elif t.is_app("constarr"):
            u = abs_sort(t.payload)
            got = None
            for av, orig in amap.constarr_terms.items():
                if orig is t:
                    got = av
                    break
            if got is None:
                name = mgr.fresh_name("__constarr")
                got = mgr.var(name, u, STATE)
                amap.constarr_map[got] = t.children[0]
                amap.constarr_terms[got] = t
                constarr_vars.append((got, t))
            r = got
        elif t.is_app("="):
            a, b = (rewrite(c, memo) for c in t.children)
            if amap.is_abstract_array(a.sort) and mode == WEAK \
                    and t.id not in frozen_conjunct_ids:
                r = mgr.apply(amap.op_map[a.sort].eq, [a, b])
            else:
                r = mgr.eq(a, b)
        elif t.is_app():
            cs = tuple(rewrite(c, memo) for c in t.children)
            r = t if cs == t.children else mgr.mk_term(t.op, cs, t.payload)
        else:
            r = t
        memo[t.id] = r
        return r

    # frozen facts v' = v keep their native equality (a sound strengthening
    # that preserves the syntactic frozen-variable invariant)
    frozen_conjunct_ids = set()
    for v in S.frozen:
        nv = S.next_map.get(v)
        if nv is not None:
            frozen_conjunct_ids.add(mgr.eq(nv, v).id)
            frozen_conjunct_ids.add(mgr.eq(v, nv).id)

    memo = {}
    out = TransitionSystem(mgr)
    for v in S.state_vars:
        nv = S.next_map[v]
        if isinstance(v.sort, ArraySort):
            _check_array_sort(v.sort)
            av = abs_var(v)
            anv = abs_var(nv)
            out.state_vars.append(av)
            out.next_map[av] = anv
            amap.var_map.setdefault(nv, anv)
            amap.var_unmap.setdefault(anv, nv)
            memo[nv.id] = anv
        else:
            out.state_vars.append(v)
            out.next_map[v] = nv
    out.input_vars = list(S.input_vars)
    out.frozen = {amap.var_map.get(v, v) for v in S.frozen}
    for tag, name, t in S.init_conjuncts:
        out.init_conjuncts.append((tag, name, rewrite(t, memo)))
    for tag, name, t in S.trans_conjuncts:
        out.trans_conjuncts.append((tag, name, rewrite(t, memo)))
    newP = Property(rewrite(P.formula, memo), rewrite(P.original, memo))
    # constant arrays do not change over time: fresh frozen state variables
    for av, _t in constarr_vars:
        out.add_state_var(av)
        out.mark_frozen(av)
    out.aux_log = list(S.aux_log)
    return out, newP, amap


def concretize_system(amap: AbstractionMap, S: TransitionSystem):
    """Whole-system inverse rewriting: abstract array vocabulary back to
    arrays, auxiliaries and lemmas carried along (lifted lemmas concretize
    to array-theory validities, so keeping them is sound)."""
    from .sts import HistoryChain, ProphecyVar
    if amap.empty():
        return S
    out = TransitionSystem(S.mgr)
    for v in S.state_vars:
        cv = concretize(amap, v)
        if not cv.is_var():
            continue  # constant-array substitute: now a rigid term
        nv = concretize(amap, S.next_map[v])
        out.state_vars.append(cv)
        out.next_map[cv] = nv
    out.input_vars = list(S.input_vars)
    out.frozen = {concretize(amap, v) for v in S.frozen
                  if concretize(amap, v).is_var()}
    for tag, n, t in S.init_conjuncts:
        if tag == "lemma":
            continue  # array-theory validities: implied concretely
        out.init_conjuncts.append((tag, n, concretize(amap, t)))
    for tag, n, t in S.trans_conjuncts:
        if tag == "lemma":
            continue
        ct = concretize(amap, t)
        if ct.is_app("=") and ct.children[0] is ct.children[1]:
            continue  # frozen fact of a constant-array substitute
        out.trans_conjuncts.append((tag, n, ct))
    for rec in S.aux_log:
        tgt = concretize(amap, rec.target)
        if isinstance(rec, HistoryChain):
            out.aux_log.append(HistoryChain(
                tgt, rec.depth,
                tuple(concretize(amap, v) for v in rec.vars)))
            out._delay_memo[tgt.id] = out.aux_log[-1]
        else:
            out.aux_log.append(ProphecyVar(concretize(amap, rec.var), tgt,
                                           rec.delay))
    out._promote_memo = dict(S._promote_memo)
    return out


def concretize(amap: AbstractionMap, t: Term) -> Term:
    """Inverse rewriting back to the array vocabulary."""
    if amap.empty():
        return t
    mgr = amap.mgr
    memo = {}

    def cvar(v):
        if v in amap.var_unmap:
            return amap.var_unmap[v]
        if v in amap.constarr_terms:
            return amap.constarr_terms[v]
        if isinstance(v.kind, TimedK):
            nb = cvar(v.kind.base)
            if nb is not v.kind.base:
                step = v.kind.step
                if not nb.is_var():  # a timed constarr substitute
                    return nb
                return mgr.var(f"{nb.name}@{step}", nb.sort, TimedK(nb, step))
            return v
        if isinstance(v.kind, NextK):
            nb = cvar(v.kind.base)
            if nb is not v.kind.base:
                if not nb.is_var():
                    return nb
                return mgr.var(nb.name + "'", nb.sort, NextK(nb))
            return v
        if isinstance(v.kind, (HistoryK, ProphecyK)):
            # auxiliaries over abstract targets map to the auxiliaries the
            # concrete replay of the aux log creates
            from .sts import term_digest
            tgt = walk(v.kind.target)
            if tgt is not v.kind.target:
                if isinstance(v.kind, HistoryK):
                    d = v.kind.depth
                    return mgr.var(f"__hist_{term_digest(tgt)}_{d}",
                                   tgt.sort, HistoryK(tgt, d))
                d = v.kind.delay
                return mgr.var(f"__proph_{term_digest(tgt)}_{d}",
                               tgt.sort, ProphecyK(tgt, d))
            return v
        if amap.is_abstract_array(v.sort):
            raise UnmappedSymbol(f"abstract array variable {v} has no "
                                 "concrete counterpart")
        return v

    def walk(u):
        r = memo.get(u.id)
        if r is not None:
            return r
        if u.is_var():
            r = cvar(u)
        elif u.is_app("uf"):
            role = amap._fun_role.get(u.payload.name)
            cs = [walk(c) for c in u.children]
            if role is None:
                r = mgr.apply(u.payload, cs)
            elif role[0] == "read":
                r = mgr.read(cs[0], cs[1])
            elif role[0] == "write":
                r = mgr.write(cs[0], cs[1], cs[2])
            else:
                r = mgr.eq(cs[0], cs[1])
        elif u.is_app():
            cs = tuple(walk(c) for c in u.children)
            r = u if cs == u.children else mgr.mk_term(u.op, cs, u.payload)
        else:
            r = u
        memo[u.id] = r
        return r

    return walk(t)
