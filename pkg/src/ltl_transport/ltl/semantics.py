"""Direct evaluation of LTL on ultimately periodic words ``prefix . cycle^omega``.

Positions ``0 .. p+c-1`` form a lasso graph whose last position loops back to
``p``. Until is the least and release the greatest fixed point of its one-step
unfolding over that graph, so every subformula gets one truth value per position.
"""

from __future__ import annotations

from .formula import (Always, And, Atom, Eventually, FalseF, Formula, Implies, Next, Not, Or, Release,
                      TrueF, Until, subformulas)


def _lfp(a, b, nxt):
    val = [False] * len(a)
    changed = True
    while changed:
        changed = False
        for i in reversed(range(len(a))):
            v = b[i] or (a[i] and val[nxt[i]])
            if v != val[i]:
                val[i] = v
                changed = True
    return val


def _gfp(a, b, nxt):
    val = [True] * len(a)
    changed = True
    while changed:
        changed = False
        for i in reversed(range(len(a))):
            v = b[i] and (a[i] or val[nxt[i]])
            if v != val[i]:
                val[i] = v
                changed = True
    return val


def evaluate_positions(f: Formula, prefix, cycle) -> list[bool]:
    """Truth value of ``f`` at every lasso position."""
    cycle = list(cycle)
    if not cycle:
        raise ValueError("cycle must be non-empty")
    word = [frozenset(w) for w in list(prefix) + cycle]
    n, p = len(word), len(prefix)
    nxt = [i + 1 for i in range(n - 1)] + [p]
    always_true = [True] * n
    always_false = [False] * n
    val: dict[Formula, list[bool]] = {}
    for g in subformulas(f):
        if isinstance(g, TrueF):
            v = always_true
        elif isinstance(g, FalseF):
            v = always_false
        elif isinstance(g, Atom):
            v = [g.name in w for w in word]
        elif isinstance(g, Not):
            v = [not x for x in val[g.arg]]
        elif isinstance(g, And):
            v = [x and y for x, y in zip(val[g.left], val[g.right])]
        elif isinstance(g, Or):
            v = [x or y for x, y in zip(val[g.left], val[g.right])]
        elif isinstance(g, Implies):
            v = [(not x) or y for x, y in zip(val[g.left], val[g.right])]
        elif isinstance(g, Next):
            v = [val[g.arg][nxt[i]] for i in range(n)]
        elif isinstance(g, Until):
            v = _lfp(val[g.left], val[g.right], nxt)
        elif isinstance(g, Release):
            v = _gfp(val[g.left], val[g.right], nxt)
        elif isinstance(g, Eventually):
            v = _lfp(always_true, val[g.arg], nxt)
        elif isinstance(g, Always):
            v = _gfp(always_false, val[g.arg], nxt)
        else:
            raise TypeError(f"not a formula: {g!r}")
        val[g] = v
    return val[f]


def eval_on_lasso(f: Formula, prefix, cycle) -> bool:
    """Whether ``prefix . cycle^omega`` satisfies ``f`` at position 0."""
    return evaluate_positions(f, prefix, cycle)[0]
