"""Recursive-descent parser for ASCII LTL.

Grammar, loosest binding first::

    implication := disjunction ('->' implication)?
    disjunction := conjunction ('||' conjunction)*
    conjunction := until ('&&' until)*
    until       := unary ('U' until)?
    unary       := ('!' | 'X' | '<>' | '[]') unary | primary
    primary     := 'true' | 'false' | IDENT | STRING | '(' implication ')'

The Unicode operators (¬ ∧ ∨ → ○ ◇ □) are accepted as aliases.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .formula import (FALSE, TRUE, Always, And, Atom, Eventually, Formula, Implies, Next, Not, Or,
                      Until)


class LTLSyntaxError(ValueError):
    def __init__(self, message: str, text: str, pos: int):
        super().__init__(f"{message} at position {pos}: {text!r}")
        self.text = text
        self.pos = pos


@dataclass(frozen=True)
class Token:
    kind: str
    value: str
    pos: int


_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<op>->|&&|\|\||<>|\[\]|[!()¬∧∨→○◇□])
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
""", re.VERBOSE)

_ALIASES = {"¬": "!", "∧": "&&", "∨": "||", "→": "->", "○": "X", "◇": "<>", "□": "[]"}
_KEYWORDS = {"true", "false", "X", "U"}


def tokenize(text: str) -> list[Token]:
    out, pos = [], 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise LTLSyntaxError(f"unexpected character {text[pos]!r}", text, pos)
        kind = m.lastgroup
        value = m.group()
        if kind == "op":
            out.append(Token("op", _ALIASES.get(value, value), pos))
        elif kind == "ident":
            out.append(Token("op" if value in _KEYWORDS else "ident", value, pos))
        elif kind == "string":
            out.append(Token("ident", re.sub(r"\\(.)", r"\1", value[1:-1]), pos))
        pos = m.end()
    out.append(Token("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def accept(self, value: str) -> bool:
        if self.tok.kind == "op" and self.tok.value == value:
            self.i += 1
            return True
        return False

    def fail(self, message: str):
        raise LTLSyntaxError(message, self.text, self.tok.pos)

    def implication(self) -> Formula:
        left = self.disjunction()
        if self.accept("->"):
            return Implies(left, self.implication())
        return left

    def disjunction(self) -> Formula:
        left = self.conjunction()
        while self.accept("||"):
            left = Or(left, self.conjunction())
        return left

    def conjunction(self) -> Formula:
        left = self.until()
        while self.accept("&&"):
            left = And(left, self.until())
        return left

    def until(self) -> Formula:
        left = self.unary()
        if self.accept("U"):
            return Until(left, self.until())
        return left

    def unary(self) -> Formula:
        for op, ctor in (("!", Not), ("X", Next), ("<>", Eventually), ("[]", Always)):
            if self.accept(op):
                return ctor(self.unary())
        return self.primary()

    def primary(self) -> Formula:
        tok = self.tok
        if self.accept("("):
            inner = self.implication()
            if not self.accept(")"):
                self.fail("expected ')'")
            return inner
        if self.accept("true"):
            return TRUE
        if self.accept("false"):
            return FALSE
        if tok.kind == "ident":
            self.i += 1
            return Atom(tok.value)
        if tok.kind == "end":
            self.fail("unexpected end of formula")
        self.fail(f"unexpected {tok.value!r}")


def parse(text: str) -> Formula:
    p = _Parser(text)
    f = p.implication()
    if p.tok.kind != "end":
        p.fail(f"unexpected {p.tok.value!r}")
    return f
