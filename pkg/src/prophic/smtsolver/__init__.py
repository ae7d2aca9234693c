"""A small SMT-LIB 2 solver used as the default backend subprocess.

Decides quantifier-free formulas over linear integer arithmetic,
uninterpreted sorts/functions, and (by eager lazy-style instantiation of the
read-over-write, constant-array and extensionality axioms) the theory of
arrays.  Speaks enough of the SMT-LIB 2 command language for the engine:
push/pop, named assertions, models via get-value, and unsat cores.

Run with `python -m prophic.smtsolver`.
"""

from .engine import Server  # noqa: F401
