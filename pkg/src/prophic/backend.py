"""Session client for an external SMT solver speaking SMT-LIB 2.

The default backend is the bundled `prophic.smtsolver` subprocess; any solver
accepting SMT-LIB 2 on stdin with :produce-models / :produce-unsat-cores can
be substituted (`--solver`, or the PROPHIC_SOLVER environment variable; the
value is split shlex-style, e.g. "z3 -in").
"""

from __future__ import annotations

import os
import select
import shlex
import subprocess
import sys
import time

from . import terms as T
from .errors import (ProtocolError, SolverCrashed, SolverTimeout,
                     UnassignedVariable)
from .smtsolver import sexpr
from .terms import (ArraySort, BOOL, BoolSort, INT, IntSort, NameTable, Term,
                    USort, UVal, sort_to_smt, to_smt)

DEFAULT_SOLVER = (sys.executable, "-m", "prophic.smtsolver")


def solver_command(spec=None):
    if spec:
        return tuple(shlex.split(spec)) if isinstance(spec, str) else tuple(spec)
    env = os.environ.get("PROPHIC_SOLVER")
    if env:
        return tuple(shlex.split(env))
    return DEFAULT_SOLVER


class Telemetry:
    """Cross-cutting counters surfaced in the stats report."""

    def __init__(self):
        self.solver_queries = 0
        self.sessions = 0


class UnsatCore:
    def __init__(self, names):
        self.names = frozenset(names)

    def __contains__(self, name):
        return name in self.names

    def __iter__(self):
        return iter(sorted(self.names))

    def __repr__(self):
        return f"UnsatCore({sorted(self.names)})"


class CexModel:
    """Assignment harvested from a sat answer.

    Scalar values per variable plus per-function tables keyed by argument
    values.  While the originating session is alive, missing points are
    resolved by live get-value queries (and memoized); afterwards the
    function's default (captured or synthesized) is used.
    """

    def __init__(self, mgr, resolver=None):
        self.mgr = mgr
        self.vars = {}
        self.tables = {}
        self.defaults = {}
        self.resolver = resolver

    def var_value(self, v):
        if v not in self.vars:
            if self.resolver is not None:
                self.vars[v] = self.resolver(v)
                return self.vars[v]
            raise UnassignedVariable(v.name)
        return self.vars[v]

    def fun_value(self, f, args, term):
        tab = self.tables.setdefault(f.name, {})
        if args in tab:
            return tab[args]
        if self.resolver is not None:
            val = self.resolver(term)
            tab[args] = val
            if f.name not in self.defaults:
                self.defaults[f.name] = val
            return val
        if f.name in self.defaults:
            return self.defaults[f.name]
        return self._static_default(f.ret)

    @staticmethod
    def _static_default(sort):
        if isinstance(sort, IntSort):
            return 0
        if isinstance(sort, BoolSort):
            return False
        name = sort.name if isinstance(sort, USort) else repr(sort)
        return UVal(name, "@default")

    def evaluate(self, t):
        return T.evaluate(self.mgr, t, self)

    def detach(self):
        self.resolver = None


def model_value(m: CexModel, t: Term):
    """Value of t under m, resolving fresh points via defaults/session."""
    return m.evaluate(t)


class SolverSession:
    def __init__(self, mgr, logic="QF_UFLIA", command=None, timeout=None,
                 telemetry=None):
        self.mgr = mgr
        self.logic = logic
        self.timeout = timeout
        self.telemetry = telemetry
        self.names = NameTable()
        self._declared_sorts = set()
        self._declared_syms = set()
        self._scope_decls = [[]]
        self._n_assert = 0
        self._last_verdict = None
        self.cmd = solver_command(command)
        try:
            self.proc = subprocess.Popen(
                self.cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=subprocess.PIPE, text=True, bufsize=1)
        except OSError as e:
            raise SolverCrashed(f"cannot start solver {self.cmd}: {e}")
        if telemetry is not None:
            telemetry.sessions += 1
        self._cmd("(set-option :print-success true)")
        self._cmd("(set-option :produce-models true)")
        self._cmd("(set-option :produce-unsat-cores true)")
        self._cmd(f"(set-logic {logic})")

    # --- wire --------------------------------------------------------------

    def _send(self, line):
        if self.proc.poll() is not None:
            raise SolverCrashed("solver process died",
                                stderr=self._drain_stderr())
        try:
            self.proc.stdin.write(line + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError):
            raise SolverCrashed("solver pipe broken",
                                stderr=self._drain_stderr())

    def _drain_stderr(self):
        try:
            os.set_blocking(self.proc.stderr.fileno(), False)
            return self.proc.stderr.read() or ""
        except Exception:
            return ""

    def _read_response(self):
        deadline = None if self.timeout is None else time.time() + self.timeout
        fd = self.proc.stdout
        buf = []
        depth = 0
        seen_any = False
        while True:
            if deadline is not None:
                remain = deadline - time.time()
                if remain <= 0:
                    self.kill()
                    raise SolverTimeout(f"solver exceeded {self.timeout}s")
                ready, _, _ = select.select([fd], [], [], remain)
                if not ready:
                    continue
            line = fd.readline()
            if line == "":
                raise SolverCrashed("solver closed its output",
                                    stderr=self._drain_stderr())
            buf.append(line)
            depth += line.count("(") - line.count(")")
            seen_any = seen_any or line.strip() != ""
            if seen_any and depth <= 0:
                return "".join(buf).strip()

    def _cmd(self, line):
        """Send a command that acknowledges with success/error."""
        self._send(line)
        resp = self._read_response()
        if resp.startswith("(error"):
            raise ProtocolError(f"solver error for {line!r}: {resp}")
        if resp != "success":
            raise ProtocolError(f"unexpected response {resp!r} to {line!r}")

    def _query(self, line):
        self._send(line)
        resp = self._read_response()
        if resp.startswith("(error"):
            raise ProtocolError(f"solver error for {line!r}: {resp}")
        return resp

    # --- declarations ------------------------------------------------------

    def _declare_sort(self, s):
        if isinstance(s, USort):
            if s.name not in self._declared_sorts:
                self._declared_sorts.add(s.name)
                self._scope_decls[-1].append(("sort", s.name))
                self._cmd(f"(declare-sort {self.names.emit(s.name)} 0)")
        elif isinstance(s, ArraySort):
            self._declare_sort(s.index)
            self._declare_sort(s.elem)

    def declare(self, t: Term):
        stack = [t]
        seen = set()
        while stack:
            u = stack.pop()
            if u.id in seen:
                continue
            seen.add(u.id)
            if u.is_var():
                if u.name not in self._declared_syms:
                    self._declared_syms.add(u.name)
                    self._scope_decls[-1].append(("sym", u.name))
                    self._declare_sort(u.sort)
                    self._cmd(f"(declare-fun {self.names.emit(u.name)} () "
                              f"{self._sort_str(u.sort)})")
            elif u.is_app("uf"):
                f = u.payload
                if f.name not in self._declared_syms:
                    self._declared_syms.add(f.name)
                    self._scope_decls[-1].append(("sym", f.name))
                    for s in f.arg_sorts:
                        self._declare_sort(s)
                    self._declare_sort(f.ret)
                    argstr = " ".join(self._sort_str(s) for s in f.arg_sorts)
                    self._cmd(f"(declare-fun {self.names.emit(f.name)} "
                              f"({argstr}) {self._sort_str(f.ret)})")
            elif u.is_app("constarr"):
                self._declare_sort(u.payload)
            stack.extend(u.children)

    def _sort_str(self, s):
        if isinstance(s, USort):
            return self.names.emit(s.name)
        if isinstance(s, ArraySort):
            return f"(Array {self._sort_str(s.index)} {self._sort_str(s.elem)})"
        return sort_to_smt(s)

    # --- assertions and queries ---------------------------------------------

    def assert_term(self, t: Term, name=None):
        self.declare(t)
        body = to_smt(t, self.names.emit)
        if name is not None:
            self._cmd(f"(assert (! {body} :named {self.names.emit(name)}))")
        else:
            self._cmd(f"(assert {body})")
        self._n_assert += 1

    def push(self):
        self._cmd("(push 1)")
        self._scope_decls.append([])

    def pop(self):
        self._cmd("(pop 1)")
        for kind, name in self._scope_decls.pop():
            (self._declared_sorts if kind == "sort"
             else self._declared_syms).discard(name)

    def check_sat(self):
        if self.telemetry is not None:
            self.telemetry.solver_queries += 1
        resp = self._query("(check-sat)")
        if resp not in ("sat", "unsat", "unknown"):
            raise ProtocolError(f"bad check-sat answer {resp!r}")
        self._last_verdict = resp
        return resp

    def get_values(self, ts):
        """Model values for terms, in order."""
        if not ts:
            return []
        out = []
        for chunk_start in range(0, len(ts), 64):
            chunk = ts[chunk_start:chunk_start + 64]
            body = " ".join(to_smt(t, self.names.emit) for t in chunk)
            resp = self._query(f"(get-value ({body}))")
            try:
                pairs = sexpr.parse_all(resp)[0]
            except (sexpr.SexprError, IndexError):
                raise ProtocolError(f"unparseable get-value reply: {resp!r}")
            if len(pairs) != len(chunk):
                raise ProtocolError("get-value arity mismatch")
            for t, pair in zip(chunk, pairs):
                out.append(self._parse_value(pair[1], t.sort))
        return out

    def _parse_value(self, v, sort):
        if isinstance(v, str):
            if v == "true":
                return True
            if v == "false":
                return False
            if v.lstrip("-").isdigit():
                return int(v)
        else:
            if len(v) == 2 and v[0] == "-" and isinstance(v[1], str) \
                    and v[1].isdigit():
                return -int(v[1])
        if isinstance(sort, IntSort):
            raise ProtocolError(f"expected integer value, got {v!r}")
        if isinstance(sort, BoolSort):
            raise ProtocolError(f"expected boolean value, got {v!r}")
        name = sort.name if isinstance(sort, USort) else repr(sort)
        return UVal(name, sexpr.to_str(v))

    def get_unsat_core(self):
        resp = self._query("(get-unsat-core)")
        try:
            names = sexpr.parse_all(resp)[0]
        except (sexpr.SexprError, IndexError):
            raise ProtocolError(f"unparseable core: {resp!r}")
        out = []
        for n in names:
            if not isinstance(n, str):
                raise ProtocolError("core entries must be symbols")
            internal = self.names.intern(n)
            out.append(internal if internal is not None else n)
        return UnsatCore(out)

    def harvest_model(self, roots):
        """Build a CexModel covering all variables and UF applications in
        the given terms; leaves a live resolver attached."""
        vars_, apps = set(), set()
        seen = set()
        stack = list(roots)
        while stack:
            u = stack.pop()
            if u.id in seen:
                continue
            seen.add(u.id)
            if u.is_var():
                vars_.add(u)
            elif u.is_app("uf"):
                apps.add(u)
            stack.extend(u.children)
        order = sorted(vars_, key=lambda v: v.id)
        # args first so table keys can be computed
        apporder = sorted(apps, key=lambda a: a.id)
        model = CexModel(self.mgr, resolver=self._resolve_one)
        vals = self.get_values(order)
        for v, val in zip(order, vals):
            model.vars[v] = val
        if apporder:
            appvals = self.get_values(apporder)
            for a, val in zip(apporder, appvals):
                args = tuple(model.evaluate(c) for c in a.children)
                model.tables.setdefault(a.payload.name, {})[args] = val
                model.defaults.setdefault(a.payload.name, val)
        return model

    def _resolve_one(self, t: Term):
        self.declare(t)
        return self.get_values([t])[0]

    # --- one-shot convenience (spec: check) ---------------------------------

    def check(self, assertions, want="model"):
        """Scoped check of (name, term) or bare-term assertions.

        Returns ("sat", CexModel|None) / ("unsat", UnsatCore|None) /
        ("unknown", None).  The session stays reusable.
        """
        self.push()
        roots = []
        try:
            for item in assertions:
                if isinstance(item, tuple):
                    name, t = item
                else:
                    name, t = None, item
                self.assert_term(t, name)
                roots.append(t)
            verdict = self.check_sat()
            if verdict == "sat":
                model = self.harvest_model(roots) if want == "model" else None
                if model is not None:
                    model.detach()  # scope closes below
                return ("sat", model)
            if verdict == "unsat":
                core = self.get_unsat_core() if want == "core" else None
                return ("unsat", core)
            return ("unknown", None)
        finally:
            self.pop()

    def close(self):
        try:
            if self.proc.poll() is None:
                self._send("(exit)")
        except SolverCrashed:
            pass
        try:
            self.proc.wait(timeout=2)
        except subprocess.TimeoutExpired:
            self.kill()

    def kill(self):
        try:
            self.proc.kill()
            self.proc.wait(timeout=2)
        except Exception:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
