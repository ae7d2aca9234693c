"""Interned many-sorted terms.

Terms live in a TermManager: structurally equal terms are the same object, so
identity comparison, dict keys and id-based ordering are all stable.  The term
language is quantifier-free linear integer arithmetic + uninterpreted
functions + the three array operators (read/write/constarr), which only the
concrete systems use; abstract systems see arrays through uninterpreted sorts
and functions.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Optional

from .errors import SortMismatch, UnassignedVariable, UnsupportedEval

# ---------------------------------------------------------------------------
# Sorts


@dataclass(frozen=True)
class Sort:
    pass


@dataclass(frozen=True)
class BoolSort(Sort):
    def __repr__(self):
        return "Bool"


@dataclass(frozen=True)
class IntSort(Sort):
    def __repr__(self):
        return "Int"


@dataclass(frozen=True)
class ArraySort(Sort):
    index: Sort
    elem: Sort

    def __repr__(self):
        return f"(Array {self.index!r} {self.elem!r})"


@dataclass(frozen=True)
class USort(Sort):
    name: str

    def __repr__(self):
        return self.name


BOOL = BoolSort()
INT = IntSort()


# ---------------------------------------------------------------------------
# Variable kinds (metadata; the sort/name pair is what identifies a variable)


@dataclass(frozen=True)
class StateK:
    pass


@dataclass(frozen=True)
class InputK:
    pass


@dataclass(frozen=True)
class NextK:
    base: "Term"


@dataclass(frozen=True)
class TimedK:
    base: "Term"
    step: int


@dataclass(frozen=True)
class HistoryK:
    target: "Term"
    depth: int


@dataclass(frozen=True)
class ProphecyK:
    target: "Term"
    delay: int


@dataclass(frozen=True)
class WitnessK:
    pass


@dataclass(frozen=True)
class LambdaK:
    pass


STATE = StateK()
INPUT = InputK()
WITNESS = WitnessK()
LAMBDA = LambdaK()


@dataclass(frozen=True)
class FunSym:
    name: str
    arg_sorts: tuple
    ret: Sort


@dataclass(frozen=True)
class UVal:
    """Opaque model value of an uninterpreted sort."""

    sort: str
    token: str


# ---------------------------------------------------------------------------
# Terms

VAR = "var"
ILIT = "int"
BLIT = "bool"
APP = "app"


class Term:
    __slots__ = ("id", "tag", "sort", "name", "kind", "value", "op", "payload",
                 "children", "_times", "_fvs")

    def __init__(self, tid, tag, sort):
        self.id = tid
        self.tag = tag
        self.sort = sort
        self.name = None
        self.kind = None
        self.value = None
        self.op = None
        self.payload = None
        self.children = ()
        self._times = None
        self._fvs = None

    def is_var(self):
        return self.tag == VAR

    def is_app(self, op=None):
        return self.tag == APP and (op is None or self.op == op)

    def __repr__(self):
        return pretty(self)

    # identity semantics on purpose: interning makes these safe
    def __hash__(self):
        return self.id

    def __eq__(self, other):
        return self is other


# operator signature checkers ------------------------------------------------

_BOOLOPS = {"and", "or", "not", "implies"}
_ARITH_CMP = {"<", "<="}
_ARITH = {"+", "-"}


def _check_sig(op, payload, children):
    def want(i, sort):
        if children[i].sort != sort:
            raise SortMismatch(
                f"operator {op}: child {i} has sort {children[i].sort!r}, "
                f"expected {sort!r}", child=i)

    if op in _BOOLOPS:
        if op == "not" and len(children) != 1:
            raise SortMismatch("not takes one argument")
        if op == "implies" and len(children) != 2:
            raise SortMismatch("implies takes two arguments")
        if op in ("and", "or") and len(children) < 2:
            raise SortMismatch(f"{op} takes at least two arguments")
        for i in range(len(children)):
            want(i, BOOL)
        return BOOL
    if op == "ite":
        if len(children) != 3:
            raise SortMismatch("ite takes three arguments")
        want(0, BOOL)
        if children[1].sort != children[2].sort:
            raise SortMismatch("ite branches disagree on sort", child=2)
        return children[1].sort
    if op == "=":
        if len(children) != 2:
            raise SortMismatch("= takes two arguments")
        if children[0].sort != children[1].sort:
            raise SortMismatch("= children disagree on sort", child=1)
        return BOOL
    if op in _ARITH_CMP:
        if len(children) != 2:
            raise SortMismatch(f"{op} takes two arguments")
        want(0, INT)
        want(1, INT)
        return BOOL
    if op == "+":
        if len(children) < 2:
            raise SortMismatch("+ takes at least two arguments")
        for i in range(len(children)):
            want(i, INT)
        return INT
    if op == "-":
        if len(children) != 2:
            raise SortMismatch("- takes two arguments")
        want(0, INT)
        want(1, INT)
        return INT
    if op == "*":
        if len(children) != 1 or not isinstance(payload, int):
            raise SortMismatch("* takes one argument and a literal constant")
        want(0, INT)
        return INT
    if op == "read":
        if len(children) != 2 or not isinstance(children[0].sort, ArraySort):
            raise SortMismatch("read takes an array and an index", child=0)
        want(1, children[0].sort.index)
        return children[0].sort.elem
    if op == "write":
        if len(children) != 3 or not isinstance(children[0].sort, ArraySort):
            raise SortMismatch("write takes an array, index, element", child=0)
        want(1, children[0].sort.index)
        want(2, children[0].sort.elem)
        return children[0].sort
    if op == "constarr":
        if len(children) != 1 or not isinstance(payload, ArraySort):
            raise SortMismatch("constarr takes an element and a target sort")
        want(0, payload.elem)
        return payload
    if op == "uf":
        f = payload
        if not isinstance(f, FunSym) or len(children) != len(f.arg_sorts):
            raise SortMismatch(f"bad application of {payload}")
        for i, s in enumerate(f.arg_sorts):
            want(i, s)
        return f.ret
    raise SortMismatch(f"unknown operator {op!r}")


def _payload_key(op, payload):
    if op == "uf":
        return payload.name
    if op == "*":
        return payload
    if op == "constarr":
        return repr(payload)
    return None


class TermManager:
    """Owns the interned term store for one engine instance."""

    def __init__(self):
        self._terms = {}
        self._next_id = 0
        self._funs = {}
        self._fresh_counter = 0
        self.true_ = self._make(BLIT, BOOL, key=("b", True), value=True)
        self.false_ = self._make(BLIT, BOOL, key=("b", False), value=False)

    def _make(self, tag, sort, key, **fields):
        t = self._terms.get(key)
        if t is not None:
            return t
        t = Term(self._next_id, tag, sort)
        self._next_id += 1
        for k, v in fields.items():
            setattr(t, k, v)
        self._terms[key] = t
        return t

    # constructors -----------------------------------------------------------

    def intlit(self, value: int) -> Term:
        return self._make(ILIT, INT, key=("i", value), value=int(value))

    def boollit(self, value: bool) -> Term:
        return self.true_ if value else self.false_

    def var(self, name: str, sort: Sort, kind=INPUT) -> Term:
        key = ("v", name)
        t = self._terms.get(key)
        if t is not None:
            if t.sort != sort:
                raise SortMismatch(
                    f"variable {name} redeclared at sort {sort!r} "
                    f"(was {t.sort!r})")
            return t
        return self._make(VAR, sort, key=key, name=name, kind=kind)

    def has_var(self, name: str) -> bool:
        return ("v", name) in self._terms

    def fresh_name(self, stem: str) -> str:
        while True:
            self._fresh_counter += 1
            name = f"{stem}{self._fresh_counter}"
            if ("v", name) not in self._terms:
                return name

    def declare_fun(self, name: str, arg_sorts, ret: Sort) -> FunSym:
        f = self._funs.get(name)
        sig = FunSym(name, tuple(arg_sorts), ret)
        if f is not None:
            if f != sig:
                raise SortMismatch(f"function {name} redeclared")
            return f
        self._funs[name] = sig
        return sig

    def fun(self, name: str) -> Optional[FunSym]:
        return self._funs.get(name)

    def mk_term(self, op: str, children, payload=None) -> Term:
        children = tuple(children)
        sort = _check_sig(op, payload, children)
        key = ("a", op, _payload_key(op, payload)) + tuple(c.id for c in children)
        return self._make(APP, sort, key=key, op=op, payload=payload,
                          children=children)

    # sugar ------------------------------------------------------------------

    def conj(self, ts) -> Term:
        ts = [t for t in ts]
        if not ts:
            return self.true_
        if len(ts) == 1:
            return ts[0]
        return self.mk_term("and", ts)

    def disj(self, ts) -> Term:
        ts = [t for t in ts]
        if not ts:
            return self.false_
        if len(ts) == 1:
            return ts[0]
        return self.mk_term("or", ts)

    def not_(self, t) -> Term:
        return self.mk_term("not", [t])

    def implies(self, a, b) -> Term:
        return self.mk_term("implies", [a, b])

    def eq(self, a, b) -> Term:
        return self.mk_term("=", [a, b])

    def neq(self, a, b) -> Term:
        return self.not_(self.eq(a, b))

    def lt(self, a, b) -> Term:
        return self.mk_term("<", [a, b])

    def le(self, a, b) -> Term:
        return self.mk_term("<=", [a, b])

    def add(self, ts) -> Term:
        return self.mk_term("+", ts)

    def sub(self, a, b) -> Term:
        return self.mk_term("-", [a, b])

    def mulc(self, c: int, t) -> Term:
        return self.mk_term("*", [t], payload=int(c))

    def ite(self, c, a, b) -> Term:
        return self.mk_term("ite", [c, a, b])

    def read(self, a, i) -> Term:
        return self.mk_term("read", [a, i])

    def write(self, a, i, e) -> Term:
        return self.mk_term("write", [a, i, e])

    def constarr(self, sort: ArraySort, elem) -> Term:
        return self.mk_term("constarr", [elem], payload=sort)

    def apply(self, f: FunSym, args) -> Term:
        return self.mk_term("uf", args, payload=f)

    # analysis ---------------------------------------------------------------

    def free_vars(self, t: Term) -> frozenset:
        if t._fvs is not None:
            return t._fvs
        stack, seen, out = [t], set(), set()
        while stack:
            u = stack.pop()
            if u.id in seen:
                continue
            seen.add(u.id)
            if u.tag == VAR:
                out.add(u)
            elif u._fvs is not None:
                out.update(u._fvs)
            else:
                stack.extend(u.children)
        t._fvs = frozenset(out)
        return t._fvs

    def times_of(self, t: Term) -> frozenset:
        """Set of unrolling steps of all timed variables in t."""
        if t._times is not None:
            return t._times
        out = set()
        for v in self.free_vars(t):
            if isinstance(v.kind, TimedK):
                out.add(v.kind.step)
        t._times = frozenset(out)
        return t._times

    def substitute(self, t: Term, mapping: dict) -> Term:
        for src, dst in mapping.items():
            if src.sort != dst.sort:
                raise SortMismatch(
                    f"substitution changes sort of {src}: "
                    f"{src.sort!r} -> {dst.sort!r}")
        if not mapping:
            return t
        memo = {}

        def walk(u):
            r = memo.get(u.id)
            if r is not None:
                return r
            if u in mapping:
                r = mapping[u]
            elif u.tag == APP:
                cs = tuple(walk(c) for c in u.children)
                r = u if cs == u.children else self.mk_term(u.op, cs, u.payload)
            else:
                r = u
            memo[u.id] = r
            return r

        return walk(t)

    def conjuncts(self, t: Term) -> list:
        """Flatten nested conjunctions into a list."""
        if t.is_app("and"):
            out = []
            for c in t.children:
                out.extend(self.conjuncts(c))
            return out
        if t is self.true_:
            return []
        return [t]

    def atoms(self, t: Term) -> list:
        """Boolean atoms (non-connective boolean subterms), in id order."""
        seen, out = set(), {}
        stack = [t]
        while stack:
            u = stack.pop()
            if u.id in seen:
                continue
            seen.add(u.id)
            if u.tag == APP and u.op in ("and", "or", "not", "implies") or \
                    (u.tag == APP and u.op == "ite" and u.sort == BOOL):
                stack.extend(u.children)
            elif u.sort == BOOL and u.tag in (APP, VAR):
                out[u.id] = u
        return [out[i] for i in sorted(out)]


# ---------------------------------------------------------------------------
# Evaluation against a model (duck-typed: .var_value(v), .fun_value(f, args, term))


def evaluate(mgr: TermManager, t: Term, model):
    memo = {}

    def ev(u):
        r = memo.get(u.id)
        if r is not None:
            return r
        if u.tag == ILIT:
            r = u.value
        elif u.tag == BLIT:
            r = u.value
        elif u.tag == VAR:
            r = model.var_value(u)
        elif u.op == "uf":
            args = tuple(ev(c) for c in u.children)
            r = model.fun_value(u.payload, args, u)
        elif u.op == "ite":
            r = ev(u.children[1]) if ev(u.children[0]) else ev(u.children[2])
        elif u.op == "and":
            r = all(ev(c) for c in u.children)
        elif u.op == "or":
            r = any(ev(c) for c in u.children)
        elif u.op == "not":
            r = not ev(u.children[0])
        elif u.op == "implies":
            r = (not ev(u.children[0])) or ev(u.children[1])
        elif u.op == "=":
            r = ev(u.children[0]) == ev(u.children[1])
        elif u.op == "<":
            r = ev(u.children[0]) < ev(u.children[1])
        elif u.op == "<=":
            r = ev(u.children[0]) <= ev(u.children[1])
        elif u.op == "+":
            r = sum(ev(c) for c in u.children)
        elif u.op == "-":
            r = ev(u.children[0]) - ev(u.children[1])
        elif u.op == "*":
            r = u.payload * ev(u.children[0])
        else:
            raise UnsupportedEval(f"cannot evaluate {u.op} application")
        memo[u.id] = r
        return r

    return ev(t)


# ---------------------------------------------------------------------------
# Printing

_SMT_OP = {"and": "and", "or": "or", "not": "not", "implies": "=>",
           "ite": "ite", "=": "=", "<": "<", "<=": "<=", "+": "+", "-": "-",
           "read": "select", "write": "store"}

_SIMPLE = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
              "0123456789~!$%^&*_-+=<>.?/")


def sanitize_symbol(name: str) -> str:
    out = name.replace("'", "!next").replace("@", ".")
    out = "".join(c if c in _SIMPLE else "." for c in out)
    if not out or out[0].isdigit():
        out = "s." + out
    return out


class NameTable:
    """Internal symbol <-> emitted SMT-LIB symbol, collision-free."""

    def __init__(self):
        self._fwd = {}
        self._bwd = {}

    def emit(self, name: str) -> str:
        got = self._fwd.get(name)
        if got is not None:
            return got
        cand = sanitize_symbol(name)
        base, n = cand, 0
        while cand in self._bwd:
            n += 1
            cand = f"{base}!{n}"
        self._fwd[name] = cand
        self._bwd[cand] = name
        return cand

    def intern(self, emitted: str) -> Optional[str]:
        return self._bwd.get(emitted)


def sort_to_smt(s: Sort) -> str:
    if isinstance(s, BoolSort):
        return "Bool"
    if isinstance(s, IntSort):
        return "Int"
    if isinstance(s, ArraySort):
        return f"(Array {sort_to_smt(s.index)} {sort_to_smt(s.elem)})"
    return sanitize_symbol(s.name)


def to_smt(t: Term, namer: Callable[[str], str] = sanitize_symbol) -> str:
    parts = []

    def walk(u):
        if u.tag == ILIT:
            parts.append(str(u.value) if u.value >= 0 else f"(- {-u.value})")
        elif u.tag == BLIT:
            parts.append("true" if u.value else "false")
        elif u.tag == VAR:
            parts.append(namer(u.name))
        elif u.op == "uf":
            if not u.children:
                parts.append(namer(u.payload.name))
                return
            parts.append(f"({namer(u.payload.name)}")
            for c in u.children:
                parts.append(" ")
                walk(c)
            parts.append(")")
        elif u.op == "*":
            parts.append("(* ")
            parts.append(str(u.payload) if u.payload >= 0
                         else f"(- {-u.payload})")
            parts.append(" ")
            walk(u.children[0])
            parts.append(")")
        elif u.op == "constarr":
            parts.append(f"((as const {sort_to_smt(u.payload)}) ")
            walk(u.children[0])
            parts.append(")")
        else:
            parts.append(f"({_SMT_OP[u.op]}")
            for c in u.children:
                parts.append(" ")
                walk(c)
            parts.append(")")

    walk(t)
    return "".join(parts)


def pretty(t: Term) -> str:
    return to_smt(t, namer=lambda n: n)


# ---------------------------------------------------------------------------
# Alpha-equivalence up to renaming of chosen variable kinds


def alpha_equal(t1: Term, t2: Term, renameable=None) -> bool:
    """Structural equality allowing a bijective rename of some variables.

    renameable(v) decides whether a variable may be renamed; by default the
    auxiliary kinds (history, prophecy, witness, lambda) and their timed
    copies are renameable.
    """
    if renameable is None:
        def renameable(v):
            k = v.kind
            if isinstance(k, TimedK):
                k = k.base.kind
            if isinstance(k, NextK):
                k = k.base.kind
            return isinstance(k, (HistoryK, ProphecyK, WitnessK, LambdaK))

    fwd, bwd = {}, {}

    def walk(a, b):
        if a is b:
            return True
        if a.tag != b.tag or a.sort != b.sort:
            return False
        if a.tag == VAR:
            if not (renameable(a) and renameable(b)):
                return False
            if a in fwd or b in bwd:
                return fwd.get(a) is b and bwd.get(b) is a
            fwd[a] = b
            bwd[b] = a
            return True
        if a.tag in (ILIT, BLIT):
            return a.value == b.value
        if a.op != b.op or len(a.children) != len(b.children):
            return False
        if a.op == "uf" and a.payload.name != b.payload.name:
            return False
        if a.op == "*" and a.payload != b.payload:
            return False
        if a.op == "constarr" and a.payload != b.payload:
            return False
        return all(walk(x, y) for x, y in zip(a.children, b.children))

    return walk(t1, t2)
