"""Product of the transition system with a Büchi automaton, accepting-lasso
search by nested depth-first search, and plan projection."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from ..abstraction import FREE, LabelingMap, SystemState, TransitionSystem, derive_assignment
from .buchi import BuchiAutomaton, to_buchi
from .formula import Formula


class ProductGraph:
    """Implicit product: ``(s, q) -> (s', q')`` iff ``s -> s'``, ``q -> q'`` and ``L(s)`` meets ``q``'s guard.

    A product state reads its own label, which is the same as checking the
    automaton edge on the label of the TS state being left.
    """

    def __init__(self, ts, ba: BuchiAutomaton):
        self.ts = ts
        self.ba = ba
        self.initial = sorted((ts.initial, q) for q in ba.initial)
        self._labels = {}
        self._succ = {}

    def label(self, s):
        if s not in self._labels:
            self._labels[s] = frozenset(self.ts.label(s))
        return self._labels[s]

    def successors(self, v) -> list:
        out = self._succ.get(v)
        if out is None:
            s, q = v
            if not self.ba.enabled(q, self.label(s)):
                out = []
            else:
                out = sorted((s2, q2) for s2 in self.ts.post(s) for q2 in self.ba.successors[q])
            self._succ[v] = out
        return out

    def accepting(self, v) -> bool:
        return v[1] in self.ba.accepting

    def reachable(self) -> list:
        seen, todo = set(), list(self.initial)
        while todo:
            v = todo.pop()
            if v not in seen:
                seen.add(v)
                todo.extend(self.successors(v))
        return sorted(seen)


def product(ts, ba: BuchiAutomaton) -> ProductGraph:
    return ProductGraph(ts, ba)


def nested_dfs(graph: ProductGraph):
    """Return ``(stem, cycle)`` product paths or ``None``.

    ``stem`` ends just before the accepting seed, ``cycle`` starts at the seed
    and its last state has an edge back to it. Successors are explored in
    sorted order, so the result is deterministic.
    """
    outer_seen, inner_seen = set(), set()

    def inner(seed):
        stack = [(seed, iter(graph.successors(seed)))]
        while stack:
            v, it = stack[-1]
            w = next(it, None)
            if w is None:
                stack.pop()
            elif w == seed:
                return [u for u, _ in stack]
            elif w not in inner_seen:
                inner_seen.add(w)
                stack.append((w, iter(graph.successors(w))))
        return None

    for root in graph.initial:
        if root in outer_seen:
            continue
        outer_seen.add(root)
        stack = [(root, iter(graph.successors(root)))]
        while stack:
            v, it = stack[-1]
            w = next(it, None)
            if w is not None:
                if w not in outer_seen:
                    outer_seen.add(w)
                    stack.append((w, iter(graph.successors(w))))
                continue
            stack.pop()
            if graph.accepting(v):
                cycle = inner(v)
                if cycle is not None:
                    return [u for u, _ in stack], cycle
    return None


@dataclass(frozen=True)
class Plan:
    """Run ``prefix . cycle^omega`` of the transition system; ``prefix`` may be empty."""

    prefix: tuple[SystemState, ...]
    cycle: tuple[SystemState, ...]

    def __post_init__(self):
        object.__setattr__(self, "prefix", tuple(self.prefix))
        object.__setattr__(self, "cycle", tuple(self.cycle))
        if not self.cycle:
            raise ValueError("plan cycle must be non-empty")

    @property
    def initial(self) -> SystemState:
        return (self.prefix or self.cycle)[0]

    def steps(self) -> list[tuple[SystemState, SystemState]]:
        """Every distinct step of the lasso, including the one closing the cycle."""
        seq = list(self.prefix) + list(self.cycle) + [self.cycle[0]]
        return list(zip(seq, seq[1:]))

    def assignments(self):
        return [derive_assignment(a, b) for a, b in self.steps()]

    def word(self, ts) -> tuple[list[frozenset], list[frozenset]]:
        return [ts.label(s) for s in self.prefix], [ts.label(s) for s in self.cycle]

    def is_run_of(self, ts) -> bool:
        if self.initial != ts.initial:
            return False
        return all(b in ts.post(a) for a, b in self.steps())


def _bfs_tree(graph: ProductGraph, sources, limit=None):
    """Parents and depths of a breadth-first search, optionally cut at ``limit`` edges."""
    parent = {s: None for s in sources}
    depth = {s: 0 for s in sources}
    queue = deque(sources)
    while queue:
        v = queue.popleft()
        if limit is not None and depth[v] >= limit:
            continue
        for w in graph.successors(v):
            if w not in parent:
                parent[w] = v
                depth[w] = depth[v] + 1
                queue.append(w)
    return parent, depth


def _bfs_path(graph: ProductGraph, sources, goal, limit=None):
    """Shortest path (as a state list ending in ``goal``) from any of ``sources``."""
    parent = {s: None for s in sources}
    depth = {s: 0 for s in sources}
    queue = deque(sources)
    while queue:
        v = queue.popleft()
        if v == goal:
            path = []
            while v is not None:
                path.append(v)
                v = parent[v]
            return path[::-1]
        if limit is not None and depth[v] >= limit:
            continue
        for w in graph.successors(v):
            if w not in parent:
                parent[w] = v
                depth[w] = depth[v] + 1
                queue.append(w)
    return None


def _cycle_through(graph: ProductGraph, seed, limit=None):
    """Shortest cycle ``[seed, ...]`` whose last state steps back to ``seed``."""
    succ = graph.successors(seed)
    if seed in succ:
        return [seed]
    path = _bfs_path(graph, succ, seed, None if limit is None else limit - 1)
    return None if path is None else [seed] + path[:-1]


def shorten_lasso(graph: ProductGraph, stem, cycle):
    """Shortest stem to the accepting seed and shortest cycle through it.

    The seed stays the one nested DFS certified, so the result is still an
    accepting lasso; only the detours are dropped.
    """
    seed = cycle[0]
    path = _bfs_path(graph, list(graph.initial), seed)
    loop = _cycle_through(graph, seed)
    if path is None or loop is None:
        return stem, cycle
    return path[:-1], loop


def shortest_lasso(graph: ProductGraph):
    """Accepting lasso minimizing ``len(stem) + len(cycle)``, or ``None``.

    Accepting states are tried by increasing stem length and cycle searches
    are cut once they cannot beat the best lasso so far.
    """
    parent, depth = _bfs_tree(graph, list(graph.initial))
    best, best_cost = None, None
    for a in sorted((v for v in parent if graph.accepting(v)), key=lambda v: (depth[v], v)):
        if best_cost is not None and depth[a] + 1 >= best_cost:
            break
        loop = _cycle_through(graph, a, None if best_cost is None else best_cost - depth[a] - 1)
        if loop is None:
            continue
        cost = depth[a] + len(loop)
        if best_cost is None or cost < best_cost:
            stem, v = [], parent[a]
            while v is not None:
                stem.append(v)
                v = parent[v]
            best, best_cost = (stem[::-1], loop), cost
    return best


def find_accepting_lasso(graph: ProductGraph, shortest: bool = True) -> Plan | None:
    """Plan whose label word is accepted, or ``None`` if the language is empty.

    Nested DFS decides emptiness; with ``shortest`` the returned lasso is a
    globally shortest one instead of the first one found.
    """
    found = nested_dfs(graph)
    if found is None:
        return None
    stem, cycle = shortest_lasso(graph) if shortest else found
    return Plan(tuple(s for s, _ in stem), tuple(s for s, _ in cycle))


def synthesize(ts, formula: Formula) -> Plan | None:
    return find_accepting_lasso(product(ts, to_buchi(formula)))


@dataclass(frozen=True)
class AgentProjection:
    regions: tuple[tuple[int, ...], tuple[int, ...]]  # (prefix, cycle)
    grasp: tuple[tuple[int, ...], tuple[int, ...]]
    actions: tuple[tuple[tuple, ...], tuple[tuple, ...]]  # per step leaving each state


@dataclass(frozen=True)
class PlanProjection:
    agents: tuple[AgentProjection, ...]
    objects: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]

    def agent_word(self, i: int, labeling: LabelingMap):
        pre, cyc = self.agents[i].regions
        return [labeling.of_agent(i, k) for k in pre], [labeling.of_agent(i, k) for k in cyc]

    def object_word(self, j: int, labeling: LabelingMap):
        pre, cyc = self.objects[j]
        return [labeling.of_object(j, k) for k in pre], [labeling.of_object(j, k) for k in cyc]


def _tag(assignment, src: SystemState, dst: SystemState, i: int) -> tuple:
    kind = assignment.tag(i)
    if kind == "transit":
        return ("transit", src.agents[i], dst.agents[i])
    if kind == "transport":
        return ("transport", src.grasp[i], src.agents[i], dst.agents[i])
    if kind == "grasp":
        return ("grasp", dst.grasp[i])
    if kind == "release":
        return ("release", src.grasp[i])
    return ("idle",)


def project_plan(plan: Plan) -> PlanProjection:
    """Per-agent region, grasp and action sequences and per-object region sequences."""
    steps = plan.steps()
    tags = [derive_assignment(a, b) for a, b in steps]
    p = len(plan.prefix)
    n_agents = len(plan.cycle[0].agents)
    n_objects = len(plan.cycle[0].objects)
    agents = []
    for i in range(n_agents):
        acts = [_tag(asg, a, b, i) for asg, (a, b) in zip(tags, steps)]
        agents.append(AgentProjection(
            regions=(tuple(s.agents[i] for s in plan.prefix), tuple(s.agents[i] for s in plan.cycle)),
            grasp=(tuple(s.grasp[i] for s in plan.prefix), tuple(s.grasp[i] for s in plan.cycle)),
            actions=(tuple(acts[:p]), tuple(acts[p:])),
        ))
    objects = tuple((tuple(s.objects[j] for s in plan.prefix), tuple(s.objects[j] for s in plan.cycle))
                    for j in range(n_objects))
    return PlanProjection(tuple(agents), objects)


def describe_action(tag: tuple) -> str:
    kind = tag[0]
    if kind == "transit":
        return f"transit {tag[1]}->{tag[2]}"
    if kind == "transport":
        return f"transport object {tag[1]} {tag[2]}->{tag[3]}"
    if kind in ("grasp", "release"):
        return f"{kind} object {tag[1]}"
    return "idle"


__all__ = [
    "AgentProjection", "FREE", "Plan", "PlanProjection", "ProductGraph", "TransitionSystem",
    "describe_action", "find_accepting_lasso", "nested_dfs", "shortest_lasso", "product", "project_plan", "synthesize",
]
