"""Seeded random small array systems, used for the differential suites and
to generate the rand_*.vmt corpus entries."""

import random

from prophic.sts import Property, TransitionSystem
from prophic.terms import ArraySort, BOOL, INT, STATE, TermManager


def random_system(mgr: TermManager, seed: int, prefix=None):
    rnd = random.Random(seed)
    prefix = prefix or f"r{seed}_"
    S = TransitionSystem(mgr)
    asort = ArraySort(INT, INT)
    a = mgr.var(prefix + "a", asort, STATE)
    x = mgr.var(prefix + "x", INT, STATE)
    y = mgr.var(prefix + "y", INT, STATE)
    u = mgr.var(prefix + "u", INT, STATE)
    for v in (a, x, y, u):
        S.add_state_var(v)

    base = rnd.choice([0, 1])
    S.conjoin_init(mgr.eq(a, mgr.constarr(asort, mgr.intlit(base))))
    S.conjoin_init(mgr.eq(x, mgr.intlit(0)))

    idx = rnd.choice([x, u, mgr.add([x, mgr.intlit(1)])])
    val = rnd.choice([mgr.intlit(base), mgr.add([x, mgr.intlit(base)]),
                      mgr.read(a, u)])
    guard = rnd.choice([mgr.true_, mgr.lt(x, mgr.intlit(3)),
                        mgr.le(mgr.intlit(0), u)])
    upd = mgr.write(a, idx, val)
    if guard is mgr.true_:
        S.conjoin_trans(mgr.eq(S.next_map[a], upd))
    else:
        S.conjoin_trans(mgr.eq(S.next_map[a], mgr.ite(guard, upd, a)))
    S.conjoin_trans(mgr.eq(S.next_map[x], mgr.add([x, mgr.intlit(1)])))
    S.conjoin_trans(mgr.eq(S.next_map[y], mgr.read(a, u)))

    bound = rnd.choice([0, 1, 4])
    prop = rnd.choice([
        mgr.le(mgr.intlit(-bound), y),
        mgr.le(mgr.intlit(0), mgr.read(a, u)),
        mgr.lt(y, mgr.intlit(bound + 5)),
    ])
    return S, Property.of(prop)
