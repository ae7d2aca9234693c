"""VMT reader/writer: SMT-LIB 2 scripts with :next / :init / :trans /
:invar-property annotations.

Variables without a :next partner are inputs in VMT terms; internally they
become state variables with an unconstrained next-state copy, which is
behaviorally identical and lets lifted two-step lemmas mention them on
either side of a transition.
"""

from __future__ import annotations

from .errors import (MissingSection, ParseError, UnsupportedLogic,
                     UnknownVariable)
from .smtsolver import sexpr
from .sts import Property, TransitionSystem
from .terms import (ArraySort, BOOL, BoolSort, INT, IntSort, NameTable, NextK,
                    STATE, Term, TermManager, USort, sort_to_smt, to_smt)


class VmtEnv:
    def __init__(self, mgr: TermManager):
        self.mgr = mgr
        self.sorts = {}
        self.vars = {}       # emitted name -> Term
        self.funs = {}       # name -> FunSym
        self.macros = {}     # name -> (params, body sexp)


def parse_sort(e, env: VmtEnv):
    if isinstance(e, str):
        if e == "Bool":
            return BOOL
        if e == "Int":
            return INT
        if e in env.sorts:
            return env.sorts[e]
        raise UnsupportedLogic(f"unknown sort {e}")
    if e and e[0] == "Array":
        if len(e) != 3:
            raise ParseError("Array sort takes two arguments")
        idx = parse_sort(e[1], env)
        elem = parse_sort(e[2], env)
        if isinstance(idx, ArraySort) or isinstance(elem, ArraySort):
            raise UnsupportedLogic("nested array sorts are not supported")
        if not isinstance(idx, (IntSort, USort)):
            raise UnsupportedLogic(
                "array index sorts must have an infinite domain "
                "(Int or an uninterpreted sort)")
        return ArraySort(idx, elem)
    if e and e[0] == "_":
        raise UnsupportedLogic(f"unsupported sort {sexpr.to_str(e)}: "
                               "bit-vectors are out of scope")
    raise ParseError(f"bad sort {sexpr.to_str(e)}")


def _numeral(s):
    if isinstance(s, str) and (s.isdigit() or
                               (s.startswith("-") and s[1:].isdigit())):
        return int(s)
    return None


def parse_term(e, env: VmtEnv, scope=None) -> Term:
    mgr = env.mgr
    scope = scope or {}

    def p(e, scope):
        if isinstance(e, str):
            if e in scope:
                return scope[e]
            if e == "true":
                return mgr.true_
            if e == "false":
                return mgr.false_
            v = _numeral(e)
            if v is not None:
                return mgr.intlit(v)
            if e in env.vars:
                return env.vars[e]
            if e in env.macros:
                params, body = env.macros[e]
                if params:
                    raise ParseError(f"{e} expects arguments")
                return p(body, {})
            if e in env.funs:
                raise ParseError(f"function {e} expects arguments")
            raise ParseError(f"unknown symbol {e}")
        if not e:
            raise ParseError("empty application")
        head = e[0]
        if head == "!":
            return p(e[1], scope)
        if head == "let":
            inner = dict(scope)
            for b in e[1]:
                inner[b[0]] = p(b[1], scope)
            return p(e[2], inner)
        if isinstance(head, list):
            if head and head[0] == "as" and head[1] == "const":
                asort = parse_sort(head[2], env)
                return mgr.constarr(asort, p(e[1], scope))
            raise UnsupportedLogic(f"unsupported term {sexpr.to_str(e)}")
        if head in ("forall", "exists"):
            raise UnsupportedLogic("quantifiers are not supported "
                                   "(systems must be quantifier-free)")
        if head in ("div", "mod", "abs", "/"):
            raise UnsupportedLogic(f"operator {head} is outside linear "
                                   "integer arithmetic")
        if head in env.macros:
            params, body = env.macros[head]
            if len(params) != len(e) - 1:
                raise ParseError(f"{head}: arity mismatch")
            inner = {pn: p(arg, scope) for (pn, _), arg
                     in zip(params, e[1:])}
            return p(body, inner)
        args = [p(x, scope) for x in e[1:]]
        if head == "and":
            return mgr.conj(args) if len(args) != 1 else args[0]
        if head == "or":
            return mgr.disj(args) if len(args) != 1 else args[0]
        if head == "not":
            return mgr.not_(args[0])
        if head == "=>":
            out = args[-1]
            for x in reversed(args[:-1]):
                out = mgr.implies(x, out)
            return out
        if head == "xor":
            a, b = args
            return mgr.disj([mgr.conj([a, mgr.not_(b)]),
                             mgr.conj([mgr.not_(a), b])])
        if head == "ite":
            return mgr.ite(*args)
        if head == "=":
            pairs = [mgr.eq(args[i], args[i + 1])
                     for i in range(len(args) - 1)]
            return mgr.conj(pairs) if len(pairs) != 1 else pairs[0]
        if head == "distinct":
            outs = []
            for i in range(len(args)):
                for j in range(i + 1, len(args)):
                    outs.append(mgr.neq(args[i], args[j]))
            return mgr.conj(outs) if len(outs) != 1 else outs[0]
        if head == "<":
            return mgr.lt(args[0], args[1])
        if head == "<=":
            return mgr.le(args[0], args[1])
        if head == ">":
            return mgr.lt(args[1], args[0])
        if head == ">=":
            return mgr.le(args[1], args[0])
        if head == "+":
            return mgr.add(args)
        if head == "-":
            if len(args) == 1:
                if args[0].tag == "int":
                    return mgr.intlit(-args[0].value)
                return mgr.mulc(-1, args[0])
            out = args[0]
            for x in args[1:]:
                out = mgr.sub(out, x)
            return out
        if head == "*":
            c = 1
            rest = []
            for a in args:
                if a.tag == "int":
                    c *= a.value
                else:
                    rest.append(a)
            if not rest:
                return mgr.intlit(c)
            if len(rest) > 1:
                raise UnsupportedLogic("nonlinear multiplication")
            return rest[0] if c == 1 else mgr.mulc(c, rest[0])
        if head == "select":
            return mgr.read(args[0], args[1])
        if head == "store":
            return mgr.write(args[0], args[1], args[2])
        if head in env.funs:
            return mgr.apply(env.funs[head], args)
        raise ParseError(f"unknown symbol {head}")

    return p(e, scope)


def parse_vmt(text: str, mgr: TermManager):
    """Parse a VMT script into (TransitionSystem, [Property])."""
    try:
        cmds = sexpr.parse_all(text)
    except sexpr.SexprError as ex:
        raise ParseError(str(ex))
    env = VmtEnv(mgr)
    next_of = {}     # current name -> next name
    init = trans = None
    props = {}
    for e in cmds:
        if isinstance(e, str) or not e:
            raise ParseError(f"stray token {e}")
        cmd = e[0]
        if cmd in ("set-logic", "set-option", "set-info", "check-sat",
                   "exit", "get-model", "assert"):
            continue
        if cmd == "declare-sort":
            if len(e) > 2 and e[2] not in ("0",):
                raise UnsupportedLogic("parameterized sorts not supported")
            env.sorts[e[1]] = USort(e[1])
        elif cmd in ("declare-fun", "declare-const"):
            name = e[1]
            if cmd == "declare-const":
                argsorts, ret = [], parse_sort(e[2], env)
            else:
                argsorts = [parse_sort(s, env) for s in e[2]]
                ret = parse_sort(e[3], env)
            if argsorts:
                env.funs[name] = mgr.declare_fun(name, argsorts, ret)
            else:
                env.vars[name] = mgr.var(name, ret)
        elif cmd == "define-fun":
            name, params, _ret, body = e[1], e[2], e[3], e[4]
            attr = None
            if isinstance(body, list) and body and body[0] == "!":
                attr = body[2:]
                body = body[1]
            if attr is None:
                env.macros[name] = ([(pr[0], parse_sort(pr[1], env))
                                     for pr in params], body)
                continue
            term = parse_term(body, env)
            i = 0
            while i + 1 < len(attr) + 1 and i < len(attr):
                key = attr[i]
                val = attr[i + 1] if i + 1 < len(attr) else None
                if key == ":next":
                    if not term.is_var():
                        raise ParseError(":next annotates state variables")
                    next_of[term.name] = val
                elif key == ":init":
                    if init is not None:
                        raise MissingSection("more than one :init section")
                    init = term
                elif key == ":trans":
                    if trans is not None:
                        raise MissingSection("more than one :trans section")
                    trans = term
                elif key == ":invar-property":
                    idx = int(val)
                    if idx in props:
                        raise MissingSection(
                            f"duplicate :invar-property index {idx}")
                    props[idx] = term
                elif key == ":live-property":
                    raise UnsupportedLogic("liveness properties are out of "
                                           "scope")
                i += 2
        else:
            raise ParseError(f"unsupported command {cmd}")

    if init is None:
        raise MissingSection("no :init section")
    if trans is None:
        raise MissingSection("no :trans section")
    if not props:
        raise MissingSection("no :invar-property section")

    S = TransitionSystem(mgr)
    next_names = set(next_of.values())
    for name, v in env.vars.items():
        if name in next_of:
            nxt = env.vars.get(next_of[name])
            if nxt is None:
                raise UnknownVariable(f":next partner {next_of[name]} "
                                      "undeclared")
            # pairing metadata (terms are interned, kinds are set before any
            # unrolling consumes them)
            v.kind = STATE
            nxt.kind = NextK(v)
            S.add_state_var(v, nxt)
    # inputs become state variables with an unconstrained next copy
    for name, v in env.vars.items():
        if name not in next_of and name not in next_names:
            v.kind = STATE
            S.add_state_var(v)

    for c in mgr.conjuncts(init):
        S.conjoin_init(c)
    rev = {n: c for c, n in next_of.items()}
    for c in mgr.conjuncts(trans):
        tag = "base"
        if c.is_app("="):
            a, b = c.children
            if b.is_var() and a.is_var() and \
                    S.next_map.get(b) is a:
                S.frozen.add(b)
                tag = "frozen"
            elif a.is_var() and b.is_var() and S.next_map.get(a) is b:
                S.frozen.add(a)
                tag = "frozen"
        S.conjoin_trans(c, tag=tag)
    out_props = [Property.of(props[i]) for i in sorted(props)]
    for p in out_props:
        for v in mgr.free_vars(p.formula):
            if isinstance(v.kind, NextK):
                raise ParseError("property mentions next-state variables")
    return S, out_props


def emit_vmt(S: TransitionSystem, props) -> str:
    """Serialize a system (possibly abstract) to a VMT script."""
    mgr = S.mgr
    names = NameTable()
    if isinstance(props, Property):
        props = [props]
    lines = []
    sorts_done = set()
    funs_done = set()

    def decl_sort(s):
        if isinstance(s, USort) and s.name not in sorts_done:
            sorts_done.add(s.name)
            lines.append(f"(declare-sort {names.emit(s.name)} 0)")
        elif isinstance(s, ArraySort):
            decl_sort(s.index)
            decl_sort(s.elem)

    def decl_funs(t):
        stack = [t]
        seen = set()
        while stack:
            u = stack.pop()
            if u.id in seen:
                continue
            seen.add(u.id)
            if u.is_app("uf") and u.payload.name not in funs_done:
                f = u.payload
                funs_done.add(f.name)
                for s in f.arg_sorts:
                    decl_sort(s)
                decl_sort(f.ret)
                argstr = " ".join(sort_to_smt_named(s, names)
                                  for s in f.arg_sorts)
                lines.append(f"(declare-fun {names.emit(f.name)} ({argstr}) "
                             f"{sort_to_smt_named(f.ret, names)})")
            if u.is_app("constarr"):
                decl_sort(u.payload)
            stack.extend(u.children)

    all_terms = [S.init, S.trans] + [p.formula for p in props]
    for v in S.state_vars:
        decl_sort(v.sort)
    for t in all_terms:
        for v in mgr.free_vars(t):
            decl_sort(v.sort)
        decl_funs(t)
    for i, v in enumerate(S.state_vars):
        nv = S.next_map[v]
        sstr = sort_to_smt_named(v.sort, names)
        lines.append(f"(declare-fun {names.emit(v.name)} () {sstr})")
        lines.append(f"(declare-fun {names.emit(nv.name)} () {sstr})")
        lines.append(f"(define-fun .sv{i} () {sstr} "
                     f"(! {names.emit(v.name)} :next {names.emit(nv.name)}))")
    for v in S.input_vars:
        sstr = sort_to_smt_named(v.sort, names)
        lines.append(f"(declare-fun {names.emit(v.name)} () {sstr})")
    emit = lambda t: to_smt(t, names.emit)  # noqa: E731
    lines.append(f"(define-fun .init () Bool (! {emit(S.init)} :init true))")
    lines.append(f"(define-fun .trans () Bool (! {emit(S.trans)} "
                 ":trans true))")
    for i, p in enumerate(props):
        lines.append(f"(define-fun .prop{i} () Bool (! {emit(p.formula)} "
                     f":invar-property {i}))")
    return "\n".join(lines) + "\n"


def sort_to_smt_named(s, names: NameTable) -> str:
    if isinstance(s, USort):
        return names.emit(s.name)
    if isinstance(s, ArraySort):
        return (f"(Array {sort_to_smt_named(s.index, names)} "
                f"{sort_to_smt_named(s.elem, names)})")
    return sort_to_smt(s)
