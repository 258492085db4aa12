"""Finite transition system over agent regions, object regions and grasp flags.

Agents and objects are indexed from 0. A grasp flag is ``FREE`` or the index
of the held object. Region identifiers are whatever the workspace declares.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

from .navfield import ActionAssignment

FREE = -1


class InfeasibleScenarioError(ValueError):
    """No valid discrete state exists for the requested sizes."""


class PlanInconsistencyError(RuntimeError):
    """A pair of states is not related by any admissible action assignment."""


@dataclass(frozen=True, order=True)
class SystemState:
    agents: tuple[int, ...]  # region of each agent
    objects: tuple[int, ...]  # region of each object
    grasp: tuple[int, ...]  # held object per agent, FREE if none

    def __post_init__(self):
        for name in ("agents", "objects", "grasp"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        if len(self.grasp) != len(self.agents):
            raise ValueError("one grasp flag per agent is required")

    def is_valid(self) -> bool:
        if len(set(self.agents)) != len(self.agents) or len(set(self.objects)) != len(self.objects):
            return False
        held = [w for w in self.grasp if w != FREE]
        if len(held) != len(set(held)):
            return False
        return all(w == FREE or (0 <= w < len(self.objects) and self.agents[i] == self.objects[w])
                   for i, w in enumerate(self.grasp))

    def __str__(self):
        flags = ",".join("0" if w == FREE else str(w + 1) for w in self.grasp)
        return f"(a={list(self.agents)}, o={list(self.objects)}, g=[{flags}])"


@dataclass(frozen=True)
class StateCounts:
    raw_bound: int  # K^(N+M) (M+1)^N
    distinct: int  # after the one-entity-per-region filter
    valid: int  # after grasp co-location


@dataclass(frozen=True)
class LabelingMap:
    agents: tuple[dict, ...] = ()  # per agent: region -> set of propositions
    objects: tuple[dict, ...] = ()

    def __post_init__(self):
        norm = lambda maps: tuple({k: frozenset(v) for k, v in m.items()} for m in maps)
        object.__setattr__(self, "agents", norm(self.agents))
        object.__setattr__(self, "objects", norm(self.objects))
        seen: dict[str, str] = {}
        for kind, maps in (("agent", self.agents), ("object", self.objects)):
            for i, m in enumerate(maps):
                for props in m.values():
                    for p in props:
                        owner = f"{kind} {i}"
                        if seen.setdefault(p, owner) != owner:
                            raise ValueError(f"proposition {p!r} used by both {seen[p]} and {owner}")

    @property
    def propositions(self) -> frozenset:
        out = set()
        for m in self.agents + self.objects:
            for v in m.values():
                out |= v
        return frozenset(out)

    def agent_props(self, i: int) -> frozenset:
        return frozenset().union(*self.agents[i].values()) if i < len(self.agents) else frozenset()

    def object_props(self, j: int) -> frozenset:
        return frozenset().union(*self.objects[j].values()) if j < len(self.objects) else frozenset()

    def of_agent(self, i: int, region: int) -> frozenset:
        return self.agents[i].get(region, frozenset()) if i < len(self.agents) else frozenset()

    def of_object(self, j: int, region: int) -> frozenset:
        return self.objects[j].get(region, frozenset()) if j < len(self.objects) else frozenset()


def label(state: SystemState, labeling: LabelingMap) -> frozenset:
    out = set()
    for i, k in enumerate(state.agents):
        out |= labeling.of_agent(i, k)
    for j, k in enumerate(state.objects):
        out |= labeling.of_object(j, k)
    return frozenset(out)


def _region_list(regions) -> list[int]:
    return list(range(1, regions + 1)) if isinstance(regions, int) else sorted(regions)


def _all_tuples(regions, n_agents, n_objects):
    ks = _region_list(regions)
    flags = [FREE] + list(range(n_objects))
    for a in product(ks, repeat=n_agents):
        for o in product(ks, repeat=n_objects):
            for w in product(flags, repeat=n_agents):
                yield SystemState(a, o, w)


def state_counts(regions, n_agents: int, n_objects: int) -> StateCounts:
    K = len(_region_list(regions))
    distinct = valid = 0
    for s in _all_tuples(regions, n_agents, n_objects):
        if len(set(s.agents)) == n_agents and len(set(s.objects)) == n_objects:
            distinct += 1
            valid += s.is_valid()
    return StateCounts(K ** (n_agents + n_objects) * (n_objects + 1) ** n_agents, distinct, valid)


def enumerate_states(regions, n_agents: int, n_objects: int) -> list[SystemState]:
    """All valid states, sorted. ``regions`` is a count K or an iterable of ids."""
    K = len(_region_list(regions))
    if K < n_agents or K < n_objects:
        raise InfeasibleScenarioError(
            f"{K} regions cannot host {n_agents} agents and {n_objects} objects one per region")
    ks = _region_list(regions)
    out = []
    for a in product(ks, repeat=n_agents):
        if len(set(a)) < n_agents:
            continue
        for o in product(ks, repeat=n_objects):
            if len(set(o)) < n_objects:
                continue
            options = []
            for i in range(n_agents):
                opts = [FREE] + [j for j in range(n_objects) if o[j] == a[i]]
                options.append(opts)
            for w in product(*options):
                s = SystemState(a, o, w)
                if s.is_valid():
                    out.append(s)
    return sorted(out)


def _agent_options(state: SystemState, i: int, regions: list[int]):
    """(kind, new region, new flag, object, target) choices for agent ``i``."""
    k, w = state.agents[i], state.grasp[i]
    yield ("idle", k, w, None)
    if w == FREE:
        for k2 in regions:
            if k2 != k:
                yield ("transit", k2, FREE, None)
        for j, kj in enumerate(state.objects):
            if kj == k and j not in state.grasp:
                yield ("grasp", k, j, j)
    else:
        for k2 in regions:
            if k2 != k:
                yield ("transport", k2, w, w)
        yield ("release", k, FREE, w)


def successors(state: SystemState, regions, max_concurrent: int | None = None):
    """All ``(next_state, assignment)`` pairs, sorted; the all-idle self-loop included."""
    ks = _region_list(regions)
    n = len(state.agents)
    cap = n if max_concurrent is None else max_concurrent
    out = set()
    for choice in product(*(list(_agent_options(state, i, ks)) for i in range(n))):
        acting = sum(c[0] != "idle" for c in choice)
        if acting > cap:
            continue
        grasped = [c[3] for c in choice if c[0] == "grasp"]
        if len(grasped) != len(set(grasped)):
            continue
        objects = list(state.objects)
        for c in choice:
            if c[0] == "transport":
                objects[c[3]] = c[1]
        nxt = SystemState(tuple(c[1] for c in choice), tuple(objects), tuple(c[2] for c in choice))
        if not nxt.is_valid():
            continue
        out.add((nxt, _assignment_from(choice)))
    return sorted(out, key=lambda p: (p[0], _assignment_key(p[1])))


def _assignment_from(choice) -> ActionAssignment:
    return ActionAssignment(
        transit=tuple((i, c[1]) for i, c in enumerate(choice) if c[0] == "transit"),
        transport=tuple((i, c[3], c[1]) for i, c in enumerate(choice) if c[0] == "transport"),
        grasp=tuple((i, c[3]) for i, c in enumerate(choice) if c[0] == "grasp"),
        release=tuple((i, c[3]) for i, c in enumerate(choice) if c[0] == "release"),
        idle=tuple(i for i, c in enumerate(choice) if c[0] == "idle"),
    )


def _assignment_key(a: ActionAssignment):
    return (a.transit, a.transport, a.grasp, a.release, a.idle)


def derive_assignment(src: SystemState, dst: SystemState) -> ActionAssignment:
    """Unique decomposition of a step into transit/transport/grasp/release/idle."""
    if len(src.agents) != len(dst.agents) or len(src.objects) != len(dst.objects):
        raise PlanInconsistencyError("states have different shapes")
    choice = []
    moved = {}
    for i, (k, k2, w, w2) in enumerate(zip(src.agents, dst.agents, src.grasp, dst.grasp)):
        if w == w2 and k == k2:
            choice.append(("idle", k, w, None))
        elif w == FREE and w2 == FREE:
            choice.append(("transit", k2, FREE, None))
        elif w == w2:
            choice.append(("transport", k2, w, w))
            moved[w] = k2
        elif w == FREE and k == k2:
            choice.append(("grasp", k, w2, w2))
        elif w2 == FREE and k == k2:
            choice.append(("release", k, FREE, w))
        else:
            raise PlanInconsistencyError(f"agent {i}: no action turns {src} into {dst}")
    for j, (kj, kj2) in enumerate(zip(src.objects, dst.objects)):
        if moved.get(j, kj) != kj2:
            raise PlanInconsistencyError(f"object {j} moves from {kj} to {kj2} without a carrier")
    if not src.is_valid() or not dst.is_valid():
        raise PlanInconsistencyError("step endpoints violate the state invariants")
    for i, c in enumerate(choice):
        if c[0] == "grasp" and (src.objects[c[3]] != src.agents[i] or c[3] in src.grasp):
            raise PlanInconsistencyError(f"agent {i} cannot grasp object {c[3]}")
    return _assignment_from(choice)


@dataclass
class TransitionSystem:
    regions: list[int]
    n_agents: int
    n_objects: int
    initial: SystemState
    labeling: LabelingMap = field(default_factory=LabelingMap)
    max_concurrent: int | None = None
    states: list[SystemState] = field(init=False)
    edges: dict = field(init=False)

    def __post_init__(self):
        self.regions = _region_list(self.regions)
        self.states = enumerate_states(self.regions, self.n_agents, self.n_objects)
        if self.initial not in set(self.states):
            raise InfeasibleScenarioError(f"initial state {self.initial} is not a valid state")
        self.edges = {s: successors(s, self.regions, self.max_concurrent) for s in self.states}

    def post(self, s: SystemState) -> list[SystemState]:
        seen, out = set(), []
        for t, _ in self.edges[s]:
            if t not in seen:
                seen.add(t)
                out.append(t)
        return out

    def label(self, s: SystemState) -> frozenset:
        return label(s, self.labeling)

    @property
    def propositions(self) -> frozenset:
        return self.labeling.propositions

    def to_text(self) -> str:
        """One line per edge: ``src -> dst | transit=... transport=...``."""
        lines = []
        for s in self.states:
            for t, a in self.edges[s]:
                parts = [f"{name}={list(getattr(a, name))}" for name in ("transit", "transport", "grasp", "release")
                         if getattr(a, name)]
                lines.append(f"{s} -> {t} | {' '.join(parts) or 'idle'}")
        return "\n".join(lines) + "\n"
