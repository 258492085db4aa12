"""LTL abstract syntax.

``Eventually``, ``Always`` and ``Implies`` are kept in the tree for printing and
for the lasso evaluator; :func:`nnf` rewrites everything into the core
``true/false, literal, and, or, next, until, release`` used by the automaton
construction.
"""

from __future__ import annotations

import re
from dataclasses import dataclass


class Formula:
    __slots__ = ()

    def children(self) -> tuple["Formula", ...]:
        return ()

    def __and__(self, other):
        return And(self, other)

    def __or__(self, other):
        return Or(self, other)

    def __invert__(self):
        return Not(self)


@dataclass(frozen=True)
class TrueF(Formula):
    def __str__(self):
        return "true"


@dataclass(frozen=True)
class FalseF(Formula):
    def __str__(self):
        return "false"


_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_KEYWORDS = {"true", "false", "X", "U", "R"}


@dataclass(frozen=True)
class Atom(Formula):
    name: str

    def __str__(self):
        if _IDENT.match(self.name) and self.name not in _KEYWORDS:
            return self.name
        return '"' + self.name.replace("\\", "\\\\").replace('"', '\\"') + '"'


@dataclass(frozen=True)
class Not(Formula):
    arg: Formula

    def children(self):
        return (self.arg,)

    def __str__(self):
        return f"!{_wrap(self.arg)}"


@dataclass(frozen=True)
class Next(Formula):
    arg: Formula

    def children(self):
        return (self.arg,)

    def __str__(self):
        return f"X {_wrap(self.arg)}"


@dataclass(frozen=True)
class Eventually(Formula):
    arg: Formula

    def children(self):
        return (self.arg,)

    def __str__(self):
        return f"<>{_wrap(self.arg)}"


@dataclass(frozen=True)
class Always(Formula):
    arg: Formula

    def children(self):
        return (self.arg,)

    def __str__(self):
        return f"[]{_wrap(self.arg)}"


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula

    def children(self):
        return (self.left, self.right)

    def __str__(self):
        return f"({self.left} && {self.right})"


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula

    def children(self):
        return (self.left, self.right)

    def __str__(self):
        return f"({self.left} || {self.right})"


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula

    def children(self):
        return (self.left, self.right)

    def __str__(self):
        return f"({self.left} -> {self.right})"


@dataclass(frozen=True)
class Until(Formula):
    left: Formula
    right: Formula

    def children(self):
        return (self.left, self.right)

    def __str__(self):
        return f"({self.left} U {self.right})"


@dataclass(frozen=True)
class Release(Formula):
    """Dual of until; produced by negation normal form, not by the parser."""

    left: Formula
    right: Formula

    def children(self):
        return (self.left, self.right)

    def __str__(self):
        return f"!(!{_wrap(self.left)} U !{_wrap(self.right)})"


TRUE = TrueF()
FALSE = FalseF()


def _wrap(f: Formula) -> str:
    s = str(f)
    if isinstance(f, (TrueF, FalseF, Atom)) or s.startswith("("):
        return s
    return f"({s})"


def atoms(f: Formula) -> frozenset:
    if isinstance(f, Atom):
        return frozenset({f.name})
    out = frozenset()
    for c in f.children():
        out |= atoms(c)
    return out


def depth(f: Formula) -> int:
    """Operator nesting depth; atoms and constants have depth 0."""
    kids = f.children()
    return 0 if not kids else 1 + max(depth(c) for c in kids)


def subformulas(f: Formula) -> list[Formula]:
    """Distinct subformulas, children before parents."""
    seen, out = set(), []

    def walk(g):
        for c in g.children():
            walk(c)
        if g not in seen:
            seen.add(g)
            out.append(g)

    walk(f)
    return out


def conjunction(fs) -> Formula:
    fs = list(fs)
    if not fs:
        return TRUE
    out = fs[0]
    for f in fs[1:]:
        out = And(out, f)
    return out


def nnf(f: Formula, negate: bool = False) -> Formula:
    """Negation normal form over true, false, literals, and, or, X, U, R."""
    if isinstance(f, TrueF):
        return FALSE if negate else TRUE
    if isinstance(f, FalseF):
        return TRUE if negate else FALSE
    if isinstance(f, Atom):
        return Not(f) if negate else f
    if isinstance(f, Not):
        return nnf(f.arg, not negate)
    if isinstance(f, Next):
        return Next(nnf(f.arg, negate))
    if isinstance(f, And):
        l, r = nnf(f.left, negate), nnf(f.right, negate)
        return Or(l, r) if negate else And(l, r)
    if isinstance(f, Or):
        l, r = nnf(f.left, negate), nnf(f.right, negate)
        return And(l, r) if negate else Or(l, r)
    if isinstance(f, Implies):
        return nnf(Or(Not(f.left), f.right), negate)
    if isinstance(f, Eventually):
        return Release(FALSE, nnf(f.arg, True)) if negate else Until(TRUE, nnf(f.arg))
    if isinstance(f, Always):
        return Until(TRUE, nnf(f.arg, True)) if negate else Release(FALSE, nnf(f.arg))
    if isinstance(f, Until):
        l, r = nnf(f.left, negate), nnf(f.right, negate)
        return Release(l, r) if negate else Until(l, r)
    if isinstance(f, Release):
        l, r = nnf(f.left, negate), nnf(f.right, negate)
        return Until(l, r) if negate else Release(l, r)
    raise TypeError(f"not a formula: {f!r}")
