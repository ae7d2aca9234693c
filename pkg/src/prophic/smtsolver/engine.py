"""Decision engine and SMT-LIB command server.

Architecture: lazy SMT.  A CDCL SAT core enumerates boolean models of the
Tseitin skeleton; each full model is checked by congruence closure (with
proof-forest explanations) combined with an exact rational/integer linear
solver (Gaussian equality elimination + Fourier-Motzkin with gcd tightening,
integer sample reconstruction and disequality splitting).  Arrays are lowered
up front by instantiating the read-over-write, constant-array and
extensionality axioms over the formula's index set plus witness and lambda
variables, after which select/store/const are ordinary uninterpreted symbols.
"""

from __future__ import annotations

import math
import sys
from fractions import Fraction
from math import gcd

from . import sexpr

BOOL = "Bool"
INT = "Int"


def is_array(sort):
    return isinstance(sort, tuple) and sort and sort[0] == "Array"


class SolveError(Exception):
    pass


# ---------------------------------------------------------------------------
# Hash-consed node store

VAR, ILIT, TRUE, FALSE, APP = "v", "i", "t", "f", "a"

_BUILTIN = {"and", "or", "not", "=>", "ite", "=", "<", "<=", "+", "-", "*",
            "select", "store", "const"}


class Store:
    def __init__(self):
        self.key2id = {}
        self.node = []       # (tag, data, children)
        self.sort = []
        self.t_true = self._mk((TRUE, None, ()), BOOL)
        self.t_false = self._mk((FALSE, None, ()), BOOL)

    def _mk(self, key, sort):
        nid = self.key2id.get(key)
        if nid is not None:
            return nid
        nid = len(self.node)
        self.key2id[key] = nid
        self.node.append(key)
        self.sort.append(sort)
        return nid

    def intlit(self, v):
        return self._mk((ILIT, int(v), ()), INT)

    def var(self, name, sort):
        return self._mk((VAR, name, ()), sort)

    def app(self, op, children, sort, extra=None):
        return self._mk((APP, (op, extra), tuple(children)), sort)

    def tag(self, n):
        return self.node[n][0]

    def data(self, n):
        return self.node[n][1]

    def children(self, n):
        return self.node[n][2]

    def op(self, n):
        return self.node[n][1][0] if self.node[n][0] == APP else None


# ---------------------------------------------------------------------------
# SMT-LIB term parser (over a Store)


class Env:
    """Declared sorts/functions plus define-fun macros."""

    def __init__(self):
        self.sorts = set()
        self.funs = {}       # name -> (arg sorts, ret sort)
        self.macros = {}     # name -> (params [(name, sort)], body sexp)

    def copy_level(self):
        return (set(self.sorts), dict(self.funs), dict(self.macros))

    def restore(self, snap):
        self.sorts, self.funs, self.macros = (set(snap[0]), dict(snap[1]),
                                              dict(snap[2]))


def parse_sort(e, env):
    if isinstance(e, str):
        if e in ("Bool", "Int"):
            return e
        if e in env.sorts:
            return ("U", e)
        raise SolveError(f"unknown sort {e}")
    if e and e[0] == "Array":
        if len(e) != 3:
            raise SolveError("Array sort takes two arguments")
        return ("Array", parse_sort(e[1], env), parse_sort(e[2], env))
    if e and e[0] == "_":
        raise SolveError(f"unsupported indexed sort {sexpr.to_str(e)}")
    raise SolveError(f"unknown sort {sexpr.to_str(e)}")


class TermParser:
    def __init__(self, store, env):
        self.store = store
        self.env = env

    def parse(self, e, scope=None):
        scope = scope or {}
        n, _ = self._p(e, scope)
        return n

    def _mk_eq(self, a, b):
        # boolean equality is expanded so the theory core only sees
        # first-order equalities
        st = self.store
        if st.sort[a] == BOOL:
            return st.app("and", (st.app("=>", (a, b), BOOL),
                                  st.app("=>", (b, a), BOOL)), BOOL)
        return st.app("=", (a, b), BOOL)

    def _numeral(self, s):
        if s.isdigit() or (s[0] == "-" and s[1:].isdigit() and len(s) > 1):
            return int(s)
        return None

    def _p(self, e, scope):
        st = self.store
        if isinstance(e, str):
            if e in scope:
                n = scope[e]
                return n, st.sort[n]
            if e == "true":
                return st.t_true, BOOL
            if e == "false":
                return st.t_false, BOOL
            v = self._numeral(e)
            if v is not None:
                return st.intlit(v), INT
            if e in self.env.macros:
                params, body = self.env.macros[e]
                if params:
                    raise SolveError(f"macro {e} needs arguments")
                return self._p(body, {})
            if e in self.env.funs:
                args, ret = self.env.funs[e]
                if args:
                    raise SolveError(f"function {e} needs arguments")
                return st.var(e, ret), ret
            raise SolveError(f"unknown symbol {e}")
        if not e:
            raise SolveError("empty application")
        head = e[0]
        if head == "!":
            return self._p(e[1], scope)
        if head == "let":
            new = dict(scope)
            for b in e[1]:
                new[b[0]] = self.parse(b[1], scope)
            return self._p(e[2], new)
        if isinstance(head, list):
            if head and head[0] == "as" and head[1] == "const":
                asort = parse_sort(head[2], self.env)
                elem, es = self._p(e[1], scope)
                if not is_array(asort) or asort[2] != es:
                    raise SolveError("bad constant array")
                return st.app("const", (elem,), asort, extra=asort), asort
            raise SolveError(f"unsupported term {sexpr.to_str(e)}")
        if head in ("forall", "exists"):
            raise SolveError("quantifiers unsupported")
        if head in ("div", "mod", "abs", "/"):
            raise SolveError(f"unsupported operator {head}")
        if head in self.env.macros:
            params, body = self.env.macros[head]
            if len(params) != len(e) - 1:
                raise SolveError(f"macro {head}: arity mismatch")
            new = {}
            for (pn, _), arg in zip(params, e[1:]):
                new[pn] = self.parse(arg, scope)
            return self._p(body, new)

        args = [self._p(x, scope) for x in e[1:]]
        ns = [a[0] for a in args]
        ss = [a[1] for a in args]

        def chk(cond, msg):
            if not cond:
                raise SolveError(f"{head}: {msg}")

        if head in ("and", "or"):
            chk(all(s == BOOL for s in ss), "boolean arguments expected")
            if len(ns) == 1:
                return ns[0], BOOL
            return st.app(head, ns, BOOL), BOOL
        if head == "not":
            chk(len(ns) == 1 and ss[0] == BOOL, "one boolean argument")
            return st.app("not", ns, BOOL), BOOL
        if head == "=>":
            chk(len(ns) >= 2 and all(s == BOOL for s in ss), "boolean args")
            out = ns[-1]
            for x in reversed(ns[:-1]):
                out = st.app("=>", (x, out), BOOL)
            return out, BOOL
        if head == "xor":
            chk(len(ns) == 2 and all(s == BOOL for s in ss), "two booleans")
            a, b = ns
            return st.app("or", (st.app("and", (a, st.app("not", (b,), BOOL)),
                                        BOOL),
                                 st.app("and", (st.app("not", (a,), BOOL), b),
                                        BOOL)), BOOL), BOOL
        if head == "ite":
            chk(len(ns) == 3 and ss[0] == BOOL and ss[1] == ss[2],
                "ite(bool, t, t)")
            return st.app("ite", ns, ss[1]), ss[1]
        if head == "=":
            chk(len(ns) >= 2 and all(s == ss[0] for s in ss),
                "same-sorted arguments")
            pairs = [self._mk_eq(ns[i], ns[i + 1])
                     for i in range(len(ns) - 1)]
            if len(pairs) == 1:
                return pairs[0], BOOL
            return st.app("and", pairs, BOOL), BOOL
        if head == "distinct":
            chk(len(ns) >= 2 and all(s == ss[0] for s in ss),
                "same-sorted arguments")
            outs = []
            for i in range(len(ns)):
                for j in range(i + 1, len(ns)):
                    outs.append(st.app(
                        "not", (self._mk_eq(ns[i], ns[j]),), BOOL))
            if len(outs) == 1:
                return outs[0], BOOL
            return st.app("and", outs, BOOL), BOOL
        if head in ("<", "<=", ">", ">="):
            chk(len(ns) == 2 and ss == [INT, INT], "two integer arguments")
            if head == ">":
                return st.app("<", (ns[1], ns[0]), BOOL), BOOL
            if head == ">=":
                return st.app("<=", (ns[1], ns[0]), BOOL), BOOL
            return st.app(head, ns, BOOL), BOOL
        if head == "+":
            chk(len(ns) >= 2 and all(s == INT for s in ss), "integer args")
            return st.app("+", ns, INT), INT
        if head == "-":
            chk(all(s == INT for s in ss), "integer args")
            if len(ns) == 1:
                if st.tag(ns[0]) == ILIT:
                    return st.intlit(-st.data(ns[0])), INT
                return st.app("*", (ns[0],), INT, extra=-1), INT
            out = ns[0]
            for x in ns[1:]:
                out = st.app("-", (out, x), INT)
            return out, INT
        if head == "*":
            chk(len(ns) >= 2 and all(s == INT for s in ss), "integer args")
            c = 1
            others = []
            for n in ns:
                if st.tag(n) == ILIT:
                    c *= st.data(n)
                else:
                    others.append(n)
            if not others:
                return st.intlit(c), INT
            if len(others) > 1:
                raise SolveError("nonlinear multiplication")
            if c == 1:
                return others[0], INT
            return st.app("*", (others[0],), INT, extra=c), INT
        if head == "select":
            chk(len(ns) == 2 and is_array(ss[0]) and ss[1] == ss[0][1],
                "select(array, index)")
            return st.app("select", ns, ss[0][2]), ss[0][2]
        if head == "store":
            chk(len(ns) == 3 and is_array(ss[0]) and ss[1] == ss[0][1]
                and ss[2] == ss[0][2], "store(array, index, element)")
            return st.app("store", ns, ss[0]), ss[0]
        if head in self.env.funs:
            argsorts, ret = self.env.funs[head]
            chk(tuple(ss) == tuple(argsorts), "argument sorts mismatch")
            return st.app(head, ns, ret), ret
        raise SolveError(f"unknown symbol {head}")


# ---------------------------------------------------------------------------
# Preprocessing: ite lifting + array axiom instantiation


class Preprocessor:
    def __init__(self, store, prefix):
        self.st = store
        self.prefix = prefix
        self.counter = 0
        self.extra = []

    def _fresh(self, sort, stem):
        self.counter += 1
        return self.st.var(f"{self.prefix}!{stem}!{self.counter}", sort)

    def run(self, assertions):
        lifted = [self._lift_ite(a, {}) for a in assertions]
        out = lifted + self.extra
        if any(self._has_arrays(a) for a in out):
            out = out + self._array_instances(out)
        return out

    def _has_arrays(self, root):
        st = self.st
        seen = set()
        stack = [root]
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen.add(n)
            if is_array(st.sort[n]):
                return True
            stack.extend(st.children(n))
        return False

    def _lift_ite(self, root, memo):
        st = self.st

        def walk(n):
            if n in memo:
                return memo[n]
            tag = st.tag(n)
            if tag != APP:
                memo[n] = n
                return n
            op, extra = st.data(n)
            cs = tuple(walk(c) for c in st.children(n))
            m = st.app(op, cs, st.sort[n], extra)
            if op == "ite" and st.sort[n] != BOOL:
                v = self._fresh(st.sort[n], "ite")
                c, a, b = cs
                self.extra.append(st.app(
                    "or", (st.app("not", (c,), BOOL),
                           st.app("=", (v, a), BOOL)), BOOL))
                self.extra.append(st.app(
                    "or", (c, st.app("=", (v, b), BOOL)), BOOL))
                m = v
            memo[n] = m
            return m

        return walk(root)

    def _array_instances(self, assertions):
        st = self.st
        seen = set()
        stores, consts, eqs, indices = [], [], [], {}
        arr_sorts = set()

        def note_index(sort, n):
            indices.setdefault(sort, [])
            if n not in indices[sort]:
                indices[sort].append(n)

        stack = list(assertions)
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen.add(n)
            if st.tag(n) == APP:
                op, _ = st.data(n)
                cs = st.children(n)
                if op == "select":
                    note_index(st.sort[cs[0]][1], cs[1])
                elif op == "store":
                    stores.append(n)
                    note_index(st.sort[n][1], cs[1])
                elif op == "const":
                    consts.append(n)
                elif op == "=" and is_array(st.sort[cs[0]]):
                    eqs.append(n)
                if is_array(st.sort[n]):
                    arr_sorts.add(st.sort[n])
                stack.extend(cs)

        for n in seen:
            if is_array(st.sort[n]):
                arr_sorts.add(st.sort[n])

        out = []
        # extensionality witnesses, one per array equality atom
        for e in sorted(set(eqs)):
            a, b = st.children(e)
            isort = st.sort[a][1]
            w = self._fresh(isort, "w")
            note_index(isort, w)
            ra = st.app("select", (a, w), st.sort[a][2])
            rb = st.app("select", (b, w), st.sort[b][2])
            out.append(st.app("or", (e, st.app(
                "not", (st.app("=", (ra, rb), BOOL),), BOOL)), BOOL))
        # lambda per index sort, distinct from every other index term
        lams = {}
        for s in sorted(arr_sorts, key=repr):
            isort = s[1]
            if isort not in lams:
                lam = self._fresh(isort, "lam")
                lams[isort] = lam
        for isort, lam in lams.items():
            for t in list(indices.get(isort, [])):
                out.append(st.app("not", (st.app("=", (lam, t), BOOL),), BOOL))
            note_index(isort, lam)
        # read-over-write at every candidate index
        for w in sorted(set(stores)):
            a, j, e = st.children(w)
            isort = st.sort[w][1]
            esort = st.sort[w][2]
            for i in indices.get(isort, []):
                hit = st.app("=", (i, j), BOOL)
                ri = st.app("select", (w, i), esort)
                out.append(st.app("or", (st.app("not", (hit,), BOOL), st.app(
                    "=", (ri, e), BOOL)), BOOL))
                out.append(st.app("or", (hit, st.app(
                    "=", (ri, st.app("select", (a, i), esort)), BOOL)), BOOL))
        # constant arrays read back their element everywhere
        for c in sorted(set(consts)):
            (e,) = st.children(c)
            isort = st.sort[c][1]
            esort = st.sort[c][2]
            for i in indices.get(isort, []):
                out.append(st.app("=", (st.app("select", (c, i), esort), e),
                                  BOOL))
        return out


# ---------------------------------------------------------------------------
# CDCL SAT core


class Sat:
    """CDCL core with named-assertion provenance on clauses.

    Theory lemmas are valid and carry no tags; learnt clauses inherit the
    union of the tags of the clauses in their derivation, so a toplevel
    conflict yields an unsat core without re-solving.
    """

    def __init__(self):
        self.nvars = 0
        self.clauses = []
        self.tags = []
        self.watches = []
        self.assign = []
        self.level = []
        self.reason = []
        self.trail = []
        self.act = []
        self.core = None

    def new_var(self):
        self.nvars += 1
        self.assign.append(None)
        self.level.append(0)
        self.reason.append(None)
        self.act.append(0.0)
        self.watches.append([])
        self.watches.append([])
        return self.nvars - 1

    @staticmethod
    def lit(v, pos):
        return v * 2 + (0 if pos else 1)

    @staticmethod
    def l_var(l):
        return l >> 1

    @staticmethod
    def l_neg(l):
        return l ^ 1

    def l_val(self, l):
        a = self.assign[l >> 1]
        if a is None:
            return None
        return a if (l & 1) == 0 else (not a)

    def add_clause(self, lits, tag=None):
        lits = sorted(set(lits))
        for i in range(len(lits) - 1):
            if lits[i] == self.l_neg(lits[i + 1]):
                return True  # tautology
        ci = len(self.clauses)
        self.clauses.append(lits)
        self.tags.append(frozenset() if tag is None else frozenset([tag]))
        if not lits:
            return False
        if len(lits) == 1:
            return True
        self.watches[lits[0]].append(ci)
        self.watches[lits[1]].append(ci)
        return True

    def _enqueue(self, l, reason):
        v = l >> 1
        self.assign[v] = (l & 1) == 0
        self.level[v] = self.dl
        self.reason[v] = reason
        self.trail.append(l)

    def _propagate(self):
        while self.qhead < len(self.trail):
            l = self.trail[self.qhead]
            self.qhead += 1
            nl = self.l_neg(l)
            ws = self.watches[nl]
            i = 0
            while i < len(ws):
                ci = ws[i]
                cl = self.clauses[ci]
                if cl[0] == nl:
                    cl[0], cl[1] = cl[1], cl[0]
                if self.l_val(cl[0]) is True:
                    i += 1
                    continue
                moved = False
                for k in range(2, len(cl)):
                    if self.l_val(cl[k]) is not False:
                        cl[1], cl[k] = cl[k], cl[1]
                        self.watches[cl[1]].append(ci)
                        ws[i] = ws[-1]
                        ws.pop()
                        moved = True
                        break
                if moved:
                    continue
                if self.l_val(cl[0]) is False:
                    return ci
                self._enqueue(cl[0], ci)
                i += 1
        return None

    def _analyze(self, ci):
        learnt = []
        seen = [False] * self.nvars
        counter = 0
        p = None
        idx = len(self.trail) - 1
        btl = 0
        tag = set(self.tags[ci])
        # level-0 literals drop out of the learnt clause; their provenance
        # still matters for the core
        for q in self.clauses[ci]:
            if self.level[q >> 1] == 0:
                tag |= self._trace_tags(q >> 1)
        while True:
            for q in self.clauses[ci]:
                if p is not None and q == p:
                    continue
                v = q >> 1
                if not seen[v] and self.level[v] > 0:
                    seen[v] = True
                    self.act[v] += 1.0
                    if self.level[v] == self.dl:
                        counter += 1
                    else:
                        learnt.append(q)
                        btl = max(btl, self.level[v])
            while True:
                p = self.trail[idx]
                idx -= 1
                if seen[p >> 1]:
                    break
            counter -= 1
            seen[p >> 1] = False
            if counter == 0:
                break
            ci = self.reason[p >> 1]
            if ci is None:
                break
            tag |= self.tags[ci]
            for q in self.clauses[ci]:
                if self.level[q >> 1] == 0:
                    tag |= self._trace_tags(q >> 1)
        # watched-literal invariant: lits[1] must carry the highest level
        learnt.sort(key=lambda q: -self.level[q >> 1])
        learnt.insert(0, self.l_neg(p))
        return learnt, btl, frozenset(tag)

    def _trace_tags(self, v):
        """Provenance of a level-0 assignment (reason chain union)."""
        out = set()
        stack = [v]
        seen = set()
        while stack:
            u = stack.pop()
            if u in seen:
                continue
            seen.add(u)
            ci = self.reason[u]
            if ci is None:
                continue
            out |= self.tags[ci]
            for q in self.clauses[ci]:
                if (q >> 1) != u:
                    stack.append(q >> 1)
        return out

    def _backtrack(self, lvl):
        while self.trail and self.level[self.trail[-1] >> 1] > lvl:
            l = self.trail.pop()
            self.assign[l >> 1] = None
        self.qhead = len(self.trail)
        self.dl = lvl

    def _conflict_core(self, ci):
        tag = set(self.tags[ci])
        for q in self.clauses[ci]:
            tag |= self._trace_tags(q >> 1)
        self.core = frozenset(tag)

    def solve(self, budget=2_000_000):
        self.dl = 0
        self.trail = []
        self.qhead = 0
        self.core = None
        for v in range(self.nvars):
            self.assign[v] = None
        for ci, cl in enumerate(self.clauses):
            if not cl:
                self.core = self.tags[ci]
                return None
            if len(cl) == 1:
                if self.l_val(cl[0]) is False:
                    self._conflict_core(ci)
                    return None
                if self.l_val(cl[0]) is None:
                    self._enqueue(cl[0], ci)
        steps = 0
        while True:
            steps += 1
            if steps > budget:
                raise SolveError("sat budget exceeded")
            confl = self._propagate()
            if confl is not None:
                if self.dl == 0:
                    self._conflict_core(confl)
                    return None
                learnt, btl, tag = self._analyze(confl)
                self._backtrack(btl)
                ok = self.add_clause_runtime(learnt, tag)
                if not ok:
                    return None
                for v in range(self.nvars):
                    self.act[v] *= 0.97
                continue
            # pick an unassigned variable of highest activity
            best, bact = -1, -1.0
            for v in range(self.nvars):
                if self.assign[v] is None and self.act[v] > bact:
                    best, bact = v, self.act[v]
            if best < 0:
                for cl in self.clauses:
                    if cl and all(self.l_val(q) is False for q in cl):
                        raise SolveError("internal: model misses a clause")
                return list(self.assign)
            self.dl += 1
            self._enqueue(self.lit(best, False), None)

    def add_clause_runtime(self, lits, tag=frozenset()):
        """Add a learnt clause mid-search; asserts its first literal."""
        ci = len(self.clauses)
        self.clauses.append(list(lits))
        self.tags.append(frozenset(tag))
        if not lits:
            self.core = frozenset(tag)
            return False
        if len(lits) >= 2:
            self.watches[lits[0]].append(ci)
            self.watches[lits[1]].append(ci)
        if self.l_val(lits[0]) is None:
            self._enqueue(lits[0], ci)
        elif self.l_val(lits[0]) is False:
            if self.dl == 0:
                self._conflict_core(ci)
                return False
            return True
        return True


# ---------------------------------------------------------------------------
# Congruence closure with explanations


class CC:
    def __init__(self, store):
        self.st = store
        self.rep = {}
        self.members = {}
        self.use = {}
        self.sig = {}
        self.pfp = {}
        self.pfr = {}
        self.anchor = {}     # rep -> node forced to a concrete value
        self.conflict = None
        self.registered = set()

    def find(self, n):
        r = n
        while self.rep.get(r, r) != r:
            r = self.rep[r]
        while self.rep.get(n, n) != r:
            self.rep[n], n = r, self.rep[n]
        return r

    def register(self, n):
        if n in self.registered:
            return
        self.registered.add(n)
        st = self.st
        for c in st.children(n):
            self.register(c)
        self.rep.setdefault(n, n)
        self.members.setdefault(n, [n])
        tag = st.tag(n)
        if tag in (ILIT, TRUE, FALSE):
            self.anchor[n] = n
        if tag == APP:
            for c in st.children(n):
                self.use.setdefault(self.find(c), []).append(n)
            self._resig(n)

    def _signature(self, n):
        op, extra = self.st.data(n)
        return (op, extra, tuple(self.find(c) for c in self.st.children(n)))

    def _resig(self, n):
        s = self._signature(n)
        other = self.sig.get(s)
        if other is None:
            self.sig[s] = n
        elif self.find(other) != self.find(n):
            self.merge(n, other, ("cong", n, other))

    def _anchor_val(self, n):
        tag = self.st.tag(n)
        if tag == ILIT:
            return ("int", self.st.data(n))
        return ("bool", tag == TRUE)

    def merge(self, a, b, reason):
        if self.conflict is not None:
            return
        queue = [(a, b, reason)]
        while queue and self.conflict is None:
            a, b, reason = queue.pop()
            ra, rb = self.find(a), self.find(b)
            if ra == rb:
                continue
            # proof forest: reverse path from a, then a -> b
            self._pf_link(a, b, reason)
            if len(self.members[ra]) > len(self.members[rb]):
                ra, rb = rb, ra
            # anchor clash?
            aa, ab = self.anchor.get(ra), self.anchor.get(rb)
            if aa is not None and ab is not None and \
                    self._anchor_val(aa) != self._anchor_val(ab):
                self.conflict = (aa, ab)
                return
            if aa is not None and ab is None:
                self.anchor[rb] = aa
            for m in self.members[ra]:
                self.rep[m] = rb
            self.members[rb].extend(self.members[ra])
            del self.members[ra]
            moved = self.use.pop(ra, [])
            for appn in moved:
                s = self._signature(appn)
                other = self.sig.get(s)
                if other is None:
                    self.sig[s] = appn
                elif self.find(other) != self.find(appn):
                    queue.append((appn, other, ("cong", appn, other)))
            self.use.setdefault(rb, []).extend(moved)

    def _pf_link(self, a, b, reason):
        # reverse the path a -> root(a)
        prev, prev_r = None, None
        cur = a
        while cur is not None:
            nxt = self.pfp.get(cur)
            nxt_r = self.pfr.get(cur)
            if prev is None:
                self.pfp.pop(cur, None)
                self.pfr.pop(cur, None)
            else:
                self.pfp[cur] = prev
                self.pfr[cur] = prev_r
            prev, prev_r = cur, nxt_r
            cur = nxt
        self.pfp[a] = b
        self.pfr[a] = reason

    def _path(self, n):
        out = [n]
        while n in self.pfp:
            n = self.pfp[n]
            out.append(n)
        return out

    def explain(self, a, b, acc=None, seen=None):
        """Reason tags (('lit', atom, pol) / ('extra', k)) for a ~ b."""
        acc = set() if acc is None else acc
        seen = set() if seen is None else seen
        key = (a, b) if a <= b else (b, a)
        if a == b or key in seen:
            return acc
        seen.add(key)
        pa, pb = self._path(a), self._path(b)
        sa = set(pa)
        ca = next(n for n in pb if n in sa)
        edges = []
        for n in pa:
            if n == ca:
                break
            edges.append(n)
        for n in pb:
            if n == ca:
                break
            edges.append(n)
        for n in edges:
            r = self.pfr[n]
            if r[0] == "cong":
                u, v = r[1], r[2]
                for cu, cv in zip(self.st.children(u), self.st.children(v)):
                    self.explain(cu, cv, acc, seen)
            else:
                acc.add(r)
        return acc


# ---------------------------------------------------------------------------
# Linear integer arithmetic


class Lia:
    """Conjunction solver: ('le'|'eq'|'ne', coeffs, const, tags).

    Equalities are eliminated by unit-pivot Gaussian elimination over the
    integers, inequalities by Fourier-Motzkin with gcd tightening.  The FM
    frames stay valid whatever the disequalities say, so disequalities are
    served during integer sample reconstruction via forbidden-value hints;
    only when hinted reconstruction stalls does a real case split happen.
    """

    MAXC = 8000

    def check(self, cons):
        self._nodes = 0
        return self._solve(list(cons), 0)

    def _solve(self, cons, depth):
        self._nodes += 1
        if depth > 60 or self._nodes > 500:
            return ("unknown", None)
        eqs = [c for c in cons if c[0] == "eq"]
        ineqs = [c for c in cons if c[0] == "le"]
        diseqs = [c for c in cons if c[0] == "ne"]
        res = self._core(eqs, ineqs)
        if res[0] != "sat":
            return res
        plan, substs = res[1], res[2]
        # substitute the eliminated variables into the disequalities too
        sub_diseqs = []
        for _op, coeffs, const, tags in diseqs:
            co = dict(coeffs)
            k2 = const
            for var, expr, econst, etags in substs:
                m = co.pop(var, 0)
                if m:
                    for x, a in expr.items():
                        co[x] = co.get(x, 0) + m * a
                    k2 += m * econst
                    tags = tags | etags
            sub_diseqs.append((self._norm(co), k2, tags))

        forbidden = {}
        last_nviol = None
        for _try in range(60):
            point = self._reconstruct(plan, forbidden)
            if point is None:
                break
            viols = []
            for co, k2, tags in sub_diseqs:
                if k2 + sum(a * point.get(x, 0) for x, a in co.items()) == 0:
                    viols.append((co, k2, tags))
            if not viols:
                for var, expr, econst, _t in reversed(substs):
                    point[var] = econst + sum(a * point.get(x, 0)
                                              for x, a in expr.items())
                return ("sat", point)
            hinted = False
            for co, k2, tags in viols:
                for x in sorted(co, key=str):
                    if x not in point:
                        continue
                    a = co[x]
                    rest = k2 + sum(b * point.get(y, 0)
                                    for y, b in co.items() if y != x)
                    if rest % a == 0:
                        bad = forbidden.setdefault(x, set())
                        if -rest // a not in bad:
                            bad.add(-rest // a)
                            hinted = True
                            break
            if not hinted:
                break
            if last_nviol is not None and len(viols) >= last_nviol + 8:
                break  # oscillating
            last_nviol = len(viols)

        # hinting failed: genuine case split on the first violated diseq
        point = self._reconstruct(plan, {})
        if point is None:
            return ("unknown", None)
        for var, expr, econst, _t in reversed(substs):
            point[var] = econst + sum(a * point.get(x, 0)
                                      for x, a in expr.items())
        for c in diseqs:
            val = c[2] + sum(a * point.get(x, 0) for x, a in c[1].items())
            if val == 0:
                co = dict(c[1])
                a1 = ("le", co, c[2] + 1, c[3])
                neg = {k: -v for k, v in co.items()}
                a2 = ("le", neg, 1 - c[2], c[3])
                rest = [d for d in cons if d is not c]
                r1 = self._solve(rest + [a1], depth + 1)
                if r1[0] == "sat":
                    return r1
                r2 = self._solve(rest + [a2], depth + 1)
                if r2[0] == "sat":
                    return r2
                if r1[0] == "unknown" or r2[0] == "unknown":
                    return ("unknown", None)
                return ("unsat", r1[1] | r2[1] | c[3])
        return ("sat", point)

    @staticmethod
    def _norm(coeffs):
        return {k: v for k, v in coeffs.items() if v != 0}

    def _core(self, eqs, ineqs):
        eqs = [(self._norm(c[1]), c[2], c[3]) for c in eqs]
        rows = [(self._norm(c[1]), c[2], c[3]) for c in ineqs]
        substs = []
        # Gaussian elimination over the integers, unit pivots only
        work = list(eqs)
        hard = []
        while work:
            coeffs, const, tags = work.pop(0)
            coeffs = self._norm(coeffs)
            if not coeffs:
                if const != 0:
                    return ("unsat", tags)
                continue
            g = 0
            for v in coeffs.values():
                g = gcd(g, abs(v))
            if const % g:
                return ("unsat", tags)
            coeffs = {k: v // g for k, v in coeffs.items()}
            const //= g
            pivot = None
            for k in sorted(coeffs):
                if abs(coeffs[k]) == 1:
                    pivot = k
                    break
            if pivot is None:
                rows.append((dict(coeffs), const, tags))
                rows.append(({k: -v for k, v in coeffs.items()}, -const, tags))
                continue
            a = coeffs[pivot]
            expr = {k: (-v if a > 0 else v)
                    for k, v in coeffs.items() if k != pivot}
            econst = -const if a > 0 else const
            substs.append((pivot, expr, econst, tags))

            def subst(row):
                c2, k2, t2 = row
                if pivot not in c2:
                    return row
                m = c2[pivot]
                out = {k: v for k, v in c2.items() if k != pivot}
                for k, v in expr.items():
                    out[k] = out.get(k, 0) + m * v
                return (self._norm(out), k2 + m * econst, t2 | tags)

            work = [subst(r) for r in work]
            rows = [subst(r) for r in rows]

        # tighten + dedup
        allvars = set()
        for coeffs, _c, _t in rows:
            allvars.update(k for k, v in coeffs.items() if v != 0)
        strongest = {}
        for coeffs, const, tags in rows:
            coeffs = self._norm(coeffs)
            if not coeffs:
                if const > 0:
                    return ("unsat", tags)
                continue
            g = 0
            for v in coeffs.values():
                g = gcd(g, abs(v))
            if g > 1:
                b = -const
                b = b // g if b >= 0 else -((-b + g - 1) // g)
                coeffs = {k: v // g for k, v in coeffs.items()}
                const = -b
            key = tuple(sorted(coeffs.items()))
            old = strongest.get(key)
            if old is None or const > old[1]:
                strongest[key] = (coeffs, const, tags)
        rows = list(strongest.values())

        # Fourier-Motzkin
        frames = []
        while True:
            vs = {}
            for coeffs, _c, _t in rows:
                for k, a in coeffs.items():
                    p, n = vs.get(k, (0, 0))
                    vs[k] = (p + (a > 0), n + (a < 0))
            vs = {k: pn for k, pn in vs.items() if pn[0] or pn[1]}
            if not vs:
                break
            v = min(vs, key=lambda k: (vs[k][0] * vs[k][1], str(k)))
            pos = [r for r in rows if r[0].get(v, 0) > 0]
            neg = [r for r in rows if r[0].get(v, 0) < 0]
            rest = [r for r in rows if r[0].get(v, 0) == 0]
            frames.append((v, pos, neg))
            derived = {}
            for cp, kp, tp in pos:
                ap = cp[v]
                for cn, kn, tn in neg:
                    an = -cn[v]
                    out = {}
                    for k, a in cp.items():
                        out[k] = out.get(k, 0) + an * a
                    for k, a in cn.items():
                        out[k] = out.get(k, 0) + ap * a
                    out.pop(v, None)
                    out = self._norm(out)
                    const = an * kp + ap * kn
                    tags = tp | tn
                    if not out:
                        if const > 0:
                            return ("unsat", tags)
                        continue
                    g = 0
                    for x in out.values():
                        g = gcd(g, abs(x))
                    if g > 1:
                        b = -const
                        b = b // g if b >= 0 else -((-b + g - 1) // g)
                        out = {k: x // g for k, x in out.items()}
                        const = -b
                    key = tuple(sorted(out.items()))
                    old = derived.get(key)
                    if old is None or const > old[1]:
                        derived[key] = (out, const, tags)
            for r in rest:
                key = tuple(sorted(r[0].items()))
                old = derived.get(key)
                if old is None or r[1] > old[1]:
                    derived[key] = r
            rows = list(derived.values())
            if len(rows) > self.MAXC:
                return ("unknown", None)

        framed = {fr[0] for fr in frames}
        loose = sorted(allvars - framed, key=str)
        return ("sat", (loose, frames), substs)

    @staticmethod
    def _reconstruct(plan, forbidden):
        """Integer sample from the FM frames, in reverse elimination order.

        Prefers values unused by other variables (unconstrained indices stay
        apart) and avoids per-variable forbidden values when the window
        allows it.  Variables swallowed whole into other variables' frames
        are assigned first, since the frame bounds read their values.
        """
        loose, frames = plan
        point = {}
        used = set()

        def pick(v, ilo, ihi):
            lo_s, hi_s = ilo, ihi
            start = 0
            if lo_s is not None and start < lo_s:
                start = lo_s
            if hi_s is not None and start > hi_s:
                start = hi_s
            bad = forbidden.get(v, ())
            best = start
            val = start
            for _ in range(24 + len(bad) + len(used)):
                if val not in used and val not in bad:
                    return val
                if val not in bad:
                    best = val
                nxt = val + 1
                if hi_s is not None and nxt > hi_s:
                    nxt = val - 1
                    if lo_s is not None and nxt < lo_s:
                        break
                val = nxt
            return best

        for v in loose:
            point[v] = pick(v, None, None)
            used.add(point[v])
        for v, pos, neg in reversed(frames):
            lo, hi = None, None
            for coeffs, const, _t in neg:
                a = coeffs[v]
                rest = const + sum(x * point.get(k, 0)
                                   for k, x in coeffs.items() if k != v)
                b = Fraction(-rest, a)  # a < 0: v >= rest/(-a) = -rest/a
                lo = b if lo is None or b > lo else lo
            for coeffs, const, _t in pos:
                a = coeffs[v]
                rest = const + sum(x * point.get(k, 0)
                                   for k, x in coeffs.items() if k != v)
                b = Fraction(-rest, a)
                hi = b if hi is None or b < hi else hi
            ilo = None if lo is None else math.ceil(lo)
            ihi = None if hi is None else math.floor(hi)
            if ilo is not None and ihi is not None and ilo > ihi:
                return None  # integer gap under the choices made so far
            point[v] = pick(v, ilo, ihi)
            used.add(point[v])
        return point


# ---------------------------------------------------------------------------
# Theory model


class TModel:
    def __init__(self, store, cc, point, atom_vals, bool_eval):
        self.st = store
        self.cc = cc
        self.point = point
        self.atom_vals = atom_vals
        self._bool_eval = bool_eval
        self._val = {}
        self._tokens = {}
        self._ntok = 0
        self._fresh_int = {}
        self.tables = {}

    def _fresh_val(self, key):
        got = self._fresh_int.get(key)
        if got is None:
            # far from the solver's small model values: unconstrained
            # integers stay apart from everything and from each other
            got = 1000001 + len(self._fresh_int)
            self._fresh_int[key] = got
        return got

    def token(self, n):
        r = self.cc.find(n)
        tok = self._tokens.get(r)
        if tok is None:
            sname = self.st.sort[n]
            base = sname if isinstance(sname, str) else \
                (sname[1] if sname[0] == "U" else "arr")
            self._ntok += 1
            tok = f"@{base}!{self._ntok}"
            self._tokens[r] = tok
        return tok

    def value(self, n):
        if n in self._val:
            return self._val[n]
        st = self.st
        sort = st.sort[n]
        tag = st.tag(n)
        if tag == ILIT:
            v = st.data(n)
        elif tag == TRUE:
            v = True
        elif tag == FALSE:
            v = False
        elif sort == INT:
            if n in self.point:
                v = self.point[n]
            elif tag == APP and st.op(n) in ("+", "-", "*"):
                op = st.op(n)
                cs = [self.value(c) for c in st.children(n)]
                if op == "+":
                    v = sum(cs)
                elif op == "-":
                    v = cs[0] - cs[1]
                else:
                    v = st.data(n)[1] * cs[0]
            elif n in self.cc.registered:
                r = self.cc.find(n)
                anc = self.cc.anchor.get(r)
                if anc is not None and st.tag(anc) == ILIT:
                    v = st.data(anc)
                else:
                    got = None
                    for m in self.cc.members.get(r, []):
                        if m in self.point:
                            got = self.point[m]
                            break
                    v = self._fresh_val(("c", r)) if got is None else got
            else:
                v = self._fresh_val(("n", n))
        elif sort == BOOL:
            if n in self.atom_vals:
                v = self.atom_vals[n]
            else:
                v = self._bool_eval(n)
        else:
            if n in self.cc.registered:
                v = self.token(n)
            else:
                v = f"@{'u'}!" + "0"
        self._val[n] = v
        return v

    def _table(self, op, extra):
        key = (op, extra)
        t = self.tables.get(key)
        if t is None:
            t = {}
            self.tables[key] = t
            for n in self.cc.registered:
                if self.st.tag(n) == APP and self.st.data(n) == key:
                    args = tuple(self.value(c) for c in self.st.children(n))
                    t[args] = self.value(n)
        return t

    def eval_new(self, n):
        """Evaluate a possibly-new term against this model."""
        st = self.st
        if n in self.cc.registered or st.tag(n) != APP:
            return self.value(n)
        op, extra = st.data(n)
        cs = [self.eval_new(c) for c in st.children(n)]
        if op == "and":
            return all(cs)
        if op == "or":
            return any(cs)
        if op == "not":
            return not cs[0]
        if op == "=>":
            return (not cs[0]) or cs[1]
        if op == "ite":
            return cs[1] if cs[0] else cs[2]
        if op == "=":
            return cs[0] == cs[1]
        if op == "<":
            return cs[0] < cs[1]
        if op == "<=":
            return cs[0] <= cs[1]
        if op == "+":
            return sum(cs)
        if op == "-":
            return cs[0] - cs[1]
        if op == "*":
            return extra * cs[0]
        if op == "select":
            arr = st.children(n)[0]
            resolved = self._select_resolve(arr, cs[1])
            if resolved is not None:
                return resolved
        table = self._table(op, extra)
        args = tuple(cs)
        if args in table:
            return table[args]
        v = self._default(st.sort[n])
        table[args] = v
        return v

    def _select_resolve(self, arr, ival, seen=None):
        """Array-aware read of a (possibly new) index against store chains."""
        st = self.st
        seen = set() if seen is None else seen
        if arr not in self.cc.registered:
            if st.tag(arr) == APP and st.op(arr) == "store":
                a, j, e = st.children(arr)
                if self.eval_new(j) == ival:
                    return self.eval_new(e)
                return self._select_resolve(a, ival, seen)
            if st.tag(arr) == APP and st.op(arr) == "const":
                return self.eval_new(st.children(arr)[0])
            return None
        r = self.cc.find(arr)
        if r in seen:
            return None
        seen.add(r)
        sel_table = self._table("select", None)
        atok = self.value(arr)
        if (atok, ival) in sel_table:
            return sel_table[(atok, ival)]
        for m in self.cc.members.get(r, []):
            if st.tag(m) == APP and st.op(m) == "store":
                a, j, e = st.children(m)
                if self.value(j) == ival:
                    return self.value(e)
                got = self._select_resolve(a, ival, seen)
                if got is not None:
                    return got
            elif st.tag(m) == APP and st.op(m) == "const":
                return self.value(st.children(m)[0])
        return None

    def _default(self, sort):
        if sort == INT:
            return 0
        if sort == BOOL:
            return False
        base = sort if isinstance(sort, str) else \
            (sort[1] if sort[0] == "U" else "arr")
        return f"@{base}!default"


# ---------------------------------------------------------------------------
# Check pipeline


class Check:
    def __init__(self, store, assertions, prefix):
        self.st = store
        self.assertions = assertions   # list of (name | None, node)
        self.prefix = prefix

    def run(self):
        pre = Preprocessor(self.st, self.prefix)
        lifted = [(name, pre._lift_ite(n, {})) for name, n in self.assertions]
        forms = [(name, n) for name, n in lifted]
        extra = list(pre.extra)
        all_nodes = [n for _, n in forms] + extra
        if any(pre._has_arrays(n) for n in all_nodes):
            extra = extra + pre._array_instances(all_nodes)
        forms += [(None, n) for n in extra]
        return self._solve(forms)

    # --- CNF ---------------------------------------------------------------

    def _atomize(self, forms):
        st = self.st
        self.atoms = []
        self.atom_var = {}
        self.gate_var = {}
        self.sat = Sat()
        self.v_true = self.sat.new_var()

        def is_atom(n):
            if st.sort[n] != BOOL:
                return False
            tag = st.tag(n)
            if tag in (VAR,):
                return True
            if tag in (TRUE, FALSE):
                return False
            op = st.op(n)
            return op not in ("and", "or", "not", "=>", "ite")

        def lit_of(n):
            tag = st.tag(n)
            if tag == TRUE:
                return Sat.lit(self.v_true, True)
            if tag == FALSE:
                return Sat.lit(self.v_true, False)
            if is_atom(n):
                v = self.atom_var.get(n)
                if v is None:
                    v = self.sat.new_var()
                    self.atom_var[n] = v
                    self.atoms.append(n)
                return Sat.lit(v, True)
            v = self.gate_var.get(n)
            if v is not None:
                return Sat.lit(v, True)
            op = st.op(n)
            cs = [lit_of(c) for c in st.children(n)]
            v = self.sat.new_var()
            self.gate_var[n] = v
            g = Sat.lit(v, True)
            ng = Sat.lit(v, False)
            if op == "not":
                self.sat.add_clause([ng, Sat.l_neg(cs[0])])
                self.sat.add_clause([g, cs[0]])
            elif op == "and":
                for c in cs:
                    self.sat.add_clause([ng, c])
                self.sat.add_clause([g] + [Sat.l_neg(c) for c in cs])
            elif op == "or":
                for c in cs:
                    self.sat.add_clause([g, Sat.l_neg(c)])
                self.sat.add_clause([ng] + cs)
            elif op == "=>":
                a, b = cs
                self.sat.add_clause([ng, Sat.l_neg(a), b])
                self.sat.add_clause([g, a])
                self.sat.add_clause([g, Sat.l_neg(b)])
            elif op == "ite":
                c, a, b = cs
                self.sat.add_clause([ng, Sat.l_neg(c), a])
                self.sat.add_clause([ng, c, b])
                self.sat.add_clause([g, Sat.l_neg(c), Sat.l_neg(a)])
                self.sat.add_clause([g, c, Sat.l_neg(b)])
            else:
                raise SolveError(f"unexpected boolean op {op}")
            return g

        self.sat.add_clause([Sat.lit(self.v_true, True)])
        for name, f in forms:
            self.sat.add_clause([lit_of(f)], tag=name)

    # --- theory ------------------------------------------------------------

    def _bool_eval_fn(self, atom_vals):
        st = self.st

        def ev(n):
            tag = st.tag(n)
            if tag == TRUE:
                return True
            if tag == FALSE:
                return False
            if n in atom_vals:
                return atom_vals[n]
            op = st.op(n)
            cs = st.children(n)
            if op == "and":
                return all(ev(c) for c in cs)
            if op == "or":
                return any(ev(c) for c in cs)
            if op == "not":
                return not ev(cs[0])
            if op == "=>":
                return (not ev(cs[0])) or ev(cs[1])
            if op == "ite":
                return ev(cs[1]) if ev(cs[0]) else ev(cs[2])
            return False

        return ev

    def _linearize(self, n, memo):
        st = self.st
        got = memo.get(n)
        if got is not None:
            return got
        tag = st.tag(n)
        if tag == ILIT:
            r = ({}, st.data(n))
        elif tag == APP and st.op(n) == "+":
            coeffs, const = {}, 0
            for c in st.children(n):
                cc_, k = self._linearize(c, memo)
                for x, a in cc_.items():
                    coeffs[x] = coeffs.get(x, 0) + a
                const += k
            r = (coeffs, const)
        elif tag == APP and st.op(n) == "-":
            (c1, k1) = self._linearize(st.children(n)[0], memo)
            (c2, k2) = self._linearize(st.children(n)[1], memo)
            out = dict(c1)
            for x, a in c2.items():
                out[x] = out.get(x, 0) - a
            r = (out, k1 - k2)
        elif tag == APP and st.op(n) == "*":
            m = st.data(n)[1]
            (c1, k1) = self._linearize(st.children(n)[0], memo)
            r = ({x: m * a for x, a in c1.items()}, m * k1)
        else:
            r = ({n: 1}, 0)   # var or opaque application: a LIA unknown
        memo[n] = r
        return r

    def _theory_check(self, atom_vals):
        st = self.st
        extra_eqs = []      # (a, b, tagset); tags never mention guesses
        guesses = []        # (a, b) int nodes currently guessed distinct
        no_guess = set()    # pairs that may not be guessed again
        linmemo = {}

        def expand(tags):
            out = set()
            work = list(tags)
            seen = set()
            while work:
                t = work.pop()
                if t in seen:
                    continue
                seen.add(t)
                if t[0] == "lit":
                    out.add(t)
                elif t[0] == "cc":
                    work.extend(cc.explain(t[1], t[2]))
                elif t[0] == "extra":
                    work.extend(extra_eqs[t[1]][2])
                elif t[0] == "guess":
                    out.add(t)
            return out

        for _round in range(80):
            cc = CC(st)
            cc.register(st.t_true)
            cc.register(st.t_false)
            diseqs = []
            for atom, val in atom_vals.items():
                cc.register(atom)
                if st.op(atom) == "=":
                    a, b = st.children(atom)
                    if val:
                        cc.merge(a, b, ("lit", atom, True))
                    else:
                        diseqs.append((a, b, atom))
                elif st.op(atom) not in ("<", "<="):
                    cc.merge(atom, st.t_true if val else st.t_false,
                             ("lit", atom, val))
                if cc.conflict:
                    break
            if cc.conflict is None:
                for k, (a, b, _tags) in enumerate(extra_eqs):
                    cc.register(a)
                    cc.register(b)
                    cc.merge(a, b, ("extra", k))
                    if cc.conflict:
                        break
            if cc.conflict is not None:
                a, b = cc.conflict
                lits = expand(cc.explain(a, b))
                return ("conflict", lits)
            for a, b, atom in diseqs:
                if cc.find(a) == cc.find(b):
                    lits = expand(cc.explain(a, b))
                    lits.add(("lit", atom, False))
                    return ("conflict", lits)

            cons = []
            for atom, val in atom_vals.items():
                op = st.op(atom)
                if op in ("<", "<="):
                    a, b = st.children(atom)
                    (ca, ka) = self._linearize(a, linmemo)
                    (cb, kb) = self._linearize(b, linmemo)
                    coeffs = dict(ca)
                    for x, v2 in cb.items():
                        coeffs[x] = coeffs.get(x, 0) - v2
                    const = ka - kb
                    tag = frozenset([("lit", atom, val)])
                    if val:
                        slack = 1 if op == "<" else 0
                        cons.append(("le", coeffs, const + slack, tag))
                    else:
                        neg = {x: -v2 for x, v2 in coeffs.items()}
                        slack = 0 if op == "<" else 1
                        cons.append(("le", neg, -const + slack, tag))
                elif op == "=" and st.sort[st.children(atom)[0]] == INT \
                        and not val:
                    a, b = st.children(atom)
                    (ca, ka) = self._linearize(a, linmemo)
                    (cb, kb) = self._linearize(b, linmemo)
                    coeffs = dict(ca)
                    for x, v2 in cb.items():
                        coeffs[x] = coeffs.get(x, 0) - v2
                    cons.append(("ne", coeffs, ka - kb,
                                 frozenset([("lit", atom, False)])))
            for r, mem in cc.members.items():
                ints = [m for m in mem if st.sort[m] == INT]
                if len(ints) > 1:
                    rep = ints[0]
                    (cr, kr) = self._linearize(rep, linmemo)
                    for m in ints[1:]:
                        (cm, km) = self._linearize(m, linmemo)
                        coeffs = dict(cm)
                        for x, v2 in cr.items():
                            coeffs[x] = coeffs.get(x, 0) - v2
                        cons.append(("eq", coeffs, km - kr,
                                     frozenset([("cc", m, rep)])))
            def diseq_row(a, b, tag):
                (ca, ka) = self._linearize(a, linmemo)
                (cb, kb) = self._linearize(b, linmemo)
                coeffs = dict(ca)
                for x, v2 in cb.items():
                    coeffs[x] = coeffs.get(x, 0) - v2
                return ("ne", coeffs, ka - kb, frozenset([tag]))

            guess_rows = [diseq_row(a, b, ("guess", k))
                          for k, (a, b) in enumerate(guesses)]

            res = Lia().check(cons + guess_rows)
            if res[0] == "unknown":
                return ("unknown", None)
            if res[0] == "unsat":
                bad = sorted(t[1] for t in res[1] if t[0] == "guess")
                if bad:
                    # a separation guess failed: retire it, and record the
                    # implied equality only if it holds without any guesses
                    k = bad[0]
                    a, b = guesses.pop(k)
                    no_guess.add((a, b))
                    probe = Lia().check(cons + [diseq_row(a, b,
                                                          ("probe", 0))])
                    if probe[0] == "unsat":
                        reason = frozenset(t for t in probe[1]
                                           if t[0] != "probe")
                        extra_eqs.append((a, b, reason))
                    continue
                return ("conflict", expand(res[1]))

            point = res[1]
            model = TModel(st, cc, point, atom_vals,
                           self._bool_eval_fn(atom_vals))
            banned = no_guess | set(guesses)
            clash = self._fun_clash(cc, model, banned)
            if clash is None:
                return ("sat", model)
            if clash == "stuck":
                return ("unknown", None)
            guesses.append(clash)
        return ("unknown", None)

    def _fun_clash(self, cc, model, banned):
        st = self.st
        byfun = {}
        for n in cc.registered:
            if st.tag(n) == APP and st.op(n) not in (
                    "and", "or", "not", "=>", "ite", "<", "<=", "+", "-", "*",
                    "="):
                byfun.setdefault(st.data(n), []).append(n)
        for key, apps in sorted(byfun.items(), key=lambda kv: str(kv[0])):
            table = {}
            for n in sorted(apps):
                args = tuple(model.value(c) for c in st.children(n))
                other = table.get(args)
                if other is None:
                    table[args] = n
                    continue
                if cc.find(other) == cc.find(n):
                    continue
                if model.value(n) == model.value(other):
                    continue
                for ca, cb in zip(st.children(n), st.children(other)):
                    if st.sort[ca] == INT and cc.find(ca) != cc.find(cb):
                        pair = (ca, cb) if ca <= cb else (cb, ca)
                        if pair not in banned:
                            return pair
                return "stuck"
        return None

    def _solve(self, forms):
        self._atomize(forms)
        for _it in range(20000):
            assign = self.sat.solve()
            if assign is None:
                core = self.sat.core or frozenset()
                return ("unsat", None, frozenset(t for t in core
                                                 if t is not None))
            atom_vals = {}
            for n, v in self.atom_var.items():
                atom_vals[n] = bool(assign[v])
            res = self._theory_check(atom_vals)
            if res[0] == "sat":
                return ("sat", res[1], None)
            if res[0] == "unknown":
                return ("unknown", None, None)
            lits = res[1]
            clause = []
            for t in lits:
                if t[0] != "lit":
                    continue
                _k, atom, pol = t
                clause.append(Sat.lit(self.atom_var[atom], not pol))
            if not clause:
                return ("unsat", None, frozenset())
            self.sat.add_clause(clause)  # theory lemma: no provenance
        return ("unknown", None, None)


# ---------------------------------------------------------------------------
# Command server


class Server:
    def __init__(self, out=None):
        self.out = out or sys.stdout
        self.store = Store()
        self.env = Env()
        self.parser = TermParser(self.store, self.env)
        self.frames = [[]]
        self.env_snaps = []
        self.options = {"print-success": False}
        self.last = None
        self.ncheck = 0

    def _reply(self, s):
        self.out.write(s + "\n")
        self.out.flush()

    def _success(self):
        if self.options.get("print-success"):
            self._reply("success")

    def _all_assertions(self):
        out = []
        for fr in self.frames:
            out.extend(fr)
        return out

    def _run(self, named_subset=None):
        self.ncheck += 1
        items = []
        for name, node in self._all_assertions():
            if named_subset is not None and name is not None \
                    and name not in named_subset:
                continue
            items.append((name, node))
        chk = Check(self.store, items, f"!k{self.ncheck}")
        return chk.run()

    def handle(self, e):
        try:
            self._handle(e)
        except (SolveError, sexpr.SexprError) as ex:
            self._reply(f'(error "{ex}")')
        except RecursionError:
            self._reply('(error "recursion limit")')

    def _handle(self, e):
        if isinstance(e, str):
            raise SolveError(f"stray token {e}")
        cmd = e[0]
        if cmd in ("set-info",):
            self._success()
        elif cmd == "set-option":
            key = e[1].lstrip(":")
            self.options[key] = (len(e) < 3 or e[2] == "true")
            self._success()
        elif cmd == "set-logic":
            self._success()
        elif cmd == "declare-sort":
            if len(e) > 2 and e[2] != "0":
                raise SolveError("only arity-0 sorts supported")
            self.env.sorts.add(e[1])
            self._success()
        elif cmd == "declare-fun":
            args = [parse_sort(s, self.env) for s in e[2]]
            ret = parse_sort(e[3], self.env)
            self.env.funs[e[1]] = (tuple(args), ret)
            self._success()
        elif cmd == "declare-const":
            ret = parse_sort(e[2], self.env)
            self.env.funs[e[1]] = ((), ret)
            self._success()
        elif cmd == "define-fun":
            params = [(p[0], parse_sort(p[1], self.env)) for p in e[2]]
            self.env.macros[e[1]] = (params, e[4])
            self._success()
        elif cmd == "assert":
            name = None
            body = e[1]
            if isinstance(body, list) and body and body[0] == "!":
                rest = body[2:]
                for i in range(0, len(rest) - 1, 2):
                    if rest[i] == ":named":
                        name = rest[i + 1]
                body = body[1]
            node = self.parser.parse(body)
            if self.store.sort[node] != BOOL:
                raise SolveError("assert expects a boolean term")
            self.frames[-1].append((name, node))
            self.last = None
            self._success()
        elif cmd == "push":
            n = int(e[1]) if len(e) > 1 else 1
            for _ in range(n):
                self.frames.append([])
                self.env_snaps.append(self.env.copy_level())
            self._success()
        elif cmd == "pop":
            n = int(e[1]) if len(e) > 1 else 1
            for _ in range(n):
                if len(self.frames) == 1:
                    raise SolveError("pop on empty stack")
                self.frames.pop()
                self.env.restore(self.env_snaps.pop())
            self.last = None
            self._success()
        elif cmd == "check-sat":
            status, model, core = self._run()
            self.last = (status, model, core)
            self._reply(status)
        elif cmd == "get-value":
            if not self.last or self.last[0] != "sat":
                raise SolveError("no model available")
            model = self.last[1]
            pairs = []
            for t in e[1]:
                node = self.parser.parse(t)
                v = model.eval_new(node)
                pairs.append(f"({sexpr.to_str(t)} {self._fmt(v)})")
            self._reply("(" + " ".join(pairs) + ")")
        elif cmd == "get-unsat-core":
            if not self.last or self.last[0] != "unsat":
                raise SolveError("no unsat result available")
            order = [n for n, _ in self._all_assertions() if n is not None]
            core = [n for n in order if n in (self.last[2] or set())]
            # tighten the provenance core a little; budgeted
            budget = 16
            for name in list(core):
                if budget <= 0 or len(core) <= 1:
                    break
                trial = [c for c in core if c != name]
                status, _m, c2 = self._run(named_subset=set(trial))
                budget -= 1
                if status == "unsat":
                    core = [n for n in trial if n in (c2 or set(trial))]
            self._reply("(" + " ".join(core) + ")")
        elif cmd == "echo":
            self._reply(e[1].strip('"'))
        elif cmd == "exit":
            raise SystemExit(0)
        elif cmd == "reset":
            self.__init__(self.out)
            self._success()
        elif cmd == "get-info":
            self._reply(f'({e[1]} "prophic-minismt")')
        else:
            raise SolveError(f"unsupported command {cmd}")

    @staticmethod
    def _fmt(v):
        if v is True:
            return "true"
        if v is False:
            return "false"
        if isinstance(v, int):
            return str(v) if v >= 0 else f"(- {-v})"
        return str(v)

    def run(self, infile=None):
        infile = infile or sys.stdin
        reader = sexpr.StreamReader()
        while True:
            chunk = infile.readline()
            if not chunk:
                break
            reader.feed(chunk)
            for e in reader.ready():
                try:
                    self.handle(e)
                except SystemExit:
                    return
