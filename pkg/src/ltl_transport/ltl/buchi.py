"""LTL to Büchi automaton by tableau expansion with node merging, followed by
a counter construction that turns generalized acceptance into plain Büchi.

Each automaton state carries a guard, a conjunction of literals. A run reads
letter ``w[i]`` while sitting in state ``q_i``; the letter must satisfy
``q_i``'s guard. Every state starts at least one edge, so guards live on the
outgoing transitions of their state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .formula import And, Atom, FalseF, Formula, Next, Not, Or, Release, TrueF, Until, nnf


@dataclass(frozen=True)
class Guard:
    pos: frozenset = frozenset()
    neg: frozenset = frozenset()

    def holds(self, letter) -> bool:
        return self.pos <= letter and not (self.neg & letter)

    def __str__(self):
        lits = sorted(self.pos) + ["!" + a for a in sorted(self.neg)]
        return " && ".join(lits) or "true"


@dataclass
class BuchiAutomaton:
    states: list[int]
    initial: list[int]
    accepting: frozenset
    guards: dict[int, Guard]
    successors: dict[int, list[int]]
    atoms: frozenset = frozenset()

    def enabled(self, q: int, letter) -> bool:
        return self.guards[q].holds(letter)

    def step(self, q: int, letter) -> list[int]:
        return self.successors[q] if self.enabled(q, letter) else []

    def to_text(self) -> str:
        lines = [f"initial {self.initial}", f"accepting {sorted(self.accepting)}"]
        for q in self.states:
            lines.append(f"{q} [{self.guards[q]}] -> {self.successors[q]}")
        return "\n".join(lines) + "\n"


def _key(f: Formula) -> str:
    return f"{type(f).__name__}:{f}"


@dataclass
class _Node:
    ident: int
    incoming: set
    new: set
    old: set = field(default_factory=set)
    nxt: set = field(default_factory=set)


def _is_literal(f) -> bool:
    return isinstance(f, (Atom, TrueF, FalseF)) or (isinstance(f, Not) and isinstance(f.arg, Atom))


def _negation(f):
    return f.arg if isinstance(f, Not) else Not(f)


def _tableau(formula: Formula):
    """Tableau nodes as ``(id, incoming, old, next)``; id 0 stands for the pre-initial source."""
    nodes: list[_Node] = []
    counter = [1]

    def fresh():
        counter[0] += 1
        return counter[0] - 1

    stack = [_Node(fresh(), {0}, {formula})]
    while stack:
        node = stack.pop()
        if not node.new:
            twin = next((n for n in nodes if n.old == node.old and n.nxt == node.nxt), None)
            if twin is not None:
                twin.incoming |= node.incoming
                continue
            nodes.append(node)
            stack.append(_Node(fresh(), {node.ident}, set(node.nxt)))
            continue
        eta = min(node.new, key=_key)
        node.new.discard(eta)
        if _is_literal(eta):
            if isinstance(eta, FalseF) or _negation(eta) in node.old:
                continue
            if not isinstance(eta, TrueF):
                node.old.add(eta)
            stack.append(node)
        elif isinstance(eta, And):
            node.new |= {eta.left, eta.right} - node.old
            node.old.add(eta)
            stack.append(node)
        elif isinstance(eta, Next):
            node.old.add(eta)
            node.nxt.add(eta.arg)
            stack.append(node)
        elif isinstance(eta, (Or, Until, Release)):
            if isinstance(eta, Or):
                first, second, carry = {eta.left}, {eta.right}, set()
            elif isinstance(eta, Until):
                first, second, carry = {eta.left}, {eta.right}, {eta}
            else:
                first, second, carry = {eta.right}, {eta.left, eta.right}, {eta}
            old = node.old | {eta}
            n1 = _Node(fresh(), set(node.incoming), node.new | (first - old), set(old), node.nxt | carry)
            n2 = _Node(fresh(), set(node.incoming), node.new | (second - old), set(old), set(node.nxt))
            # second branch popped last, so the first is explored first
            stack.append(n2)
            stack.append(n1)
        else:
            raise TypeError(f"formula not in negation normal form: {eta}")
    return nodes


def _until_subformulas(f: Formula) -> list[Until]:
    out, seen = [], set()

    def walk(g):
        if isinstance(g, Until) and g not in seen:
            seen.add(g)
            out.append(g)
        for c in g.children():
            walk(c)

    walk(f)
    return sorted(out, key=_key)


def to_buchi(formula: Formula) -> BuchiAutomaton:
    """Büchi automaton accepting exactly the words that satisfy ``formula``."""
    f = nnf(formula)
    nodes = _tableau(f)
    ids = {n.ident: i for i, n in enumerate(nodes)}
    guards = {}
    for n in nodes:
        pos = frozenset(l.name for l in n.old if isinstance(l, Atom))
        neg = frozenset(l.arg.name for l in n.old if isinstance(l, Not) and isinstance(l.arg, Atom))
        guards[ids[n.ident]] = Guard(pos, neg)
    succ = {i: set() for i in range(len(nodes))}
    initial = set()
    for n in nodes:
        for src in n.incoming:
            if src == 0:
                initial.add(ids[n.ident])
            else:
                succ[ids[src]].add(ids[n.ident])
    untils = _until_subformulas(f)
    acc_sets = [
        frozenset(ids[n.ident] for n in nodes
                  if u not in n.old or u.right in n.old or isinstance(u.right, TrueF))
        for u in untils
    ]

    # counter construction; a node skips every level it already satisfies and
    # a state is accepting when its step wraps the counter
    k = len(acc_sets)
    index: dict[tuple[int, int], int] = {}
    order = []

    def sid(q, lvl):
        if (q, lvl) not in index:
            index[(q, lvl)] = len(order)
            order.append((q, lvl))
        return index[(q, lvl)]

    def advance(q, lvl):
        while lvl < k and q in acc_sets[lvl]:
            lvl += 1
        return (True, 0) if lvl == k else (False, lvl)

    init = [sid(q, 0) for q in sorted(initial)]
    succ_out: dict[int, list[int]] = {}
    wraps = set()
    frontier = list(init)
    while frontier:
        s = frontier.pop()
        if s in succ_out:
            continue
        q, lvl = order[s]
        wrapped, nxt_lvl = advance(q, lvl)
        if wrapped:
            wraps.add(s)
        targets = sorted(sid(q2, nxt_lvl) for q2 in succ[q])
        succ_out[s] = targets
        frontier.extend(t for t in targets if t not in succ_out)
    states = sorted(succ_out)
    accepting = frozenset(wraps)
    remap = {s: i for i, s in enumerate(sorted(states))}
    return BuchiAutomaton(
        states=[remap[s] for s in states],
        initial=sorted(remap[s] for s in init),
        accepting=frozenset(remap[s] for s in accepting),
        guards={remap[s]: guards[order[s][0]] for s in states},
        successors={remap[s]: sorted(remap[t] for t in succ_out[s]) for s in states},
        atoms=frozenset(a for g in guards.values() for a in g.pos | g.neg),
    )


def accepts_lasso(ba: BuchiAutomaton, prefix, cycle) -> bool:
    """Büchi acceptance of ``prefix . cycle^omega``: a reachable accepting
    (position, state) pair that lies on a cycle of the run graph."""
    word = [frozenset(w) for w in list(prefix) + list(cycle)]
    if len(word) == len(prefix):
        raise ValueError("cycle must be non-empty")
    n, p = len(word), len(prefix)

    def nxt(node):
        i, q = node
        if not ba.enabled(q, word[i]):
            return []
        j = i + 1 if i + 1 < n else p
        return [(j, q2) for q2 in ba.successors[q]]

    reach, todo = set(), [(0, q) for q in ba.initial]
    while todo:
        v = todo.pop()
        if v not in reach:
            reach.add(v)
            todo.extend(nxt(v))
    for v in sorted(reach):
        if v[1] not in ba.accepting:
            continue
        seen, todo = set(), list(nxt(v))
        while todo:
            u = todo.pop()
            if u == v:
                return True
            if u not in seen:
                seen.add(u)
                todo.extend(nxt(u))
    return False
