"""Scenario files: YAML description of workspace, bodies, initial state,
labels, formulas and controller settings, plus validation of everything a
run assumes about them."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .abstraction import FREE, LabelingMap, SystemState, TransitionSystem
from .dynamics import (AgentModel, AgentState, GraspCoupling, ObjectModel, ObjectState, World, WorldState,
                       default_agent_geometry)
from .executor import ExecutorSettings
from .geometry import BodyGeometry, InvalidInputError, Pose, Region, Sphere, Workspace, min_clearance, \
    spheres_in_region
from .ltl import TRUE, Formula, LTLSyntaxError, atoms, conjunction, parse
from .navfield import NavConfig

BUILTIN = Path(__file__).with_name("scenarios")


class ScenarioError(ValueError):
    """Scenario could not be read or violates one or more invariants."""

    def __init__(self, problems):
        self.problems = [problems] if isinstance(problems, str) else list(problems)
        super().__init__("; ".join(self.problems))


@dataclass
class Scenario:
    name: str
    workspace: Workspace
    world: World
    initial: WorldState
    labeling: LabelingMap
    agent_formulas: tuple[Formula | None, ...]
    object_formulas: tuple[Formula | None, ...]
    nav: NavConfig = field(default_factory=NavConfig)
    settings: ExecutorSettings = field(default_factory=ExecutorSettings)
    max_concurrent: int | None = None
    strict_boundary: bool = True
    source: str = ""

    @property
    def epsilon(self) -> float:
        return self.nav.goal_epsilon

    @property
    def formula(self) -> Formula:
        """Conjunction of every agent and object formula; ``true`` if none is given."""
        parts = [f for f in self.agent_formulas + self.object_formulas if f is not None]
        return conjunction(parts) if parts else TRUE

    def initial_discrete(self) -> SystemState:
        from .executor import recover_state
        return recover_state(self.world, self.workspace, self.initial, self.epsilon)

    def transition_system(self) -> TransitionSystem:
        return TransitionSystem(self.workspace.region_ids, len(self.world.agents), len(self.world.objects),
                                self.initial_discrete(), self.labeling, self.max_concurrent)


# -- reading --------------------------------------------------------------

def _vec(value, n, where):
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.shape != (n,):
        raise ScenarioError(f"{where}: expected {n} numbers, got {value!r}")
    return arr


def _labels(raw, where) -> dict:
    out = {}
    for k, props in (raw or {}).items():
        props = [props] if isinstance(props, str) else list(props)
        out[int(k)] = frozenset(str(p) for p in props)
    return out


def _formula(text, where):
    if text is None:
        return None
    try:
        return parse(str(text))
    except LTLSyntaxError as exc:
        raise ScenarioError(f"{where}: {exc}") from exc


def _agent_model(raw) -> AgentModel:
    raw = dict(raw or {})
    known = {f.name for f in fields(AgentModel)} - {"geometry"}
    unknown = set(raw) - known
    if unknown:
        raise ScenarioError(f"agent_model: unknown keys {sorted(unknown)}")
    dims = {k: raw[k] for k in ("base_size", "link1_length", "link2_length", "link_width") if k in raw}
    return AgentModel(**{k: float(v) for k, v in raw.items()}, geometry=default_agent_geometry(**dims))


def _object_model(raw) -> ObjectModel:
    raw = dict(raw or {})
    mass = float(raw.pop("mass", 0.5))
    edge = float(raw.pop("edge", 0.1))  # cube edge, m
    if raw:
        raise ScenarioError(f"object_model: unknown keys {sorted(raw)}")
    if not edge > 0:
        raise ScenarioError("object_model: edge must be positive")
    radius = 0.5 * edge * np.sqrt(3.0) + 1e-3
    return ObjectModel(mass=mass, inertia=np.eye(3) * (mass * edge**2 / 6.0),
                       geometry=BodyGeometry((Sphere("object", (0.0, 0.0, 0.0), radius),)))


def _dataclass_from(cls, raw, where, rename=None):
    raw = dict(raw or {})
    rename = rename or {}
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for key, value in raw.items():
        name = rename.get(key, key)
        if name not in known:
            raise ScenarioError(f"{where}: unknown key {key!r}")
        kwargs[name] = value
    if "singularity_spheres" in kwargs:
        kwargs["singularity_spheres"] = tuple((tuple(s["center"]), float(s["radius"]))
                                              for s in kwargs["singularity_spheres"])
    if "agent_gains" in kwargs:
        kwargs["agent_gains"] = tuple((int(a), float(g)) for a, g in dict(kwargs["agent_gains"]).items())
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}: {exc}") from exc


def scenario_from_dict(data: dict, source: str = "") -> Scenario:
    """Build a scenario from parsed YAML; raises :class:`ScenarioError` on malformed input."""
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a mapping")
    try:
        ws_raw = data["workspace"]
        regions = tuple(Region(int(r["id"]), _vec(r["center"], 3, f"region {r.get('id')}"), float(r["radius"]))
                        for r in data.get("regions", []))
        workspace = Workspace(_vec(ws_raw.get("center", [0, 0, 0]), 3, "workspace.center"),
                              float(ws_raw["radius"]), regions)
        strict = str(ws_raw.get("boundary_check", "strict")) != "warn"

        agent_model = _agent_model(data.get("agent_model"))
        object_model = _object_model(data.get("object_model"))
        agents_raw = list(data.get("agents", []))
        objects_raw = list(data.get("objects", []))
        agents = tuple(agent_model for _ in agents_raw)
        objects = tuple(object_model for _ in objects_raw)

        agent_states = []
        for i, a in enumerate(agents_raw):
            q = _vec(a["q"], 3, f"agent {i}.q")
            qd = _vec(a.get("qd", [0, 0, 0]), 3, f"agent {i}.qd")
            agent_states.append(AgentState(q, qd))

        grasps = []
        for g in data.get("grasps", []) or []:
            a, j = int(g["agent"]), int(g["object"])
            if not (0 <= a < len(agents) and 0 <= j < len(objects)):
                raise ScenarioError(f"grasp {g}: agent or object index out of range")
            grasps.append(GraspCoupling(a, j, _vec(g.get("offset", [0, 0, 0]), 3, f"grasp of object {j}"),
                                        np.asarray(g.get("rotation", np.eye(3)), dtype=float)))
        holder = {g.obj: g for g in grasps}

        object_states = []
        for j, o in enumerate(objects_raw):
            if j in holder:
                g = holder[j]
                pose = g.object_pose(agents[g.agent], agent_states[g.agent].q)
            elif "position" in o:
                pose = Pose(_vec(o["position"], 3, f"object {j}.position"),
                            _vec(o.get("orientation", [0, 0, 0]), 3, f"object {j}.orientation"))
            else:
                raise ScenarioError(f"object {j}: needs a position or a grasp")
            object_states.append(ObjectState(pose, np.zeros(6), supported=True))

        labeling = LabelingMap(
            agents=tuple(_labels(a.get("labels"), f"agent {i}.labels") for i, a in enumerate(agents_raw)),
            objects=tuple(_labels(o.get("labels"), f"object {j}.labels") for j, o in enumerate(objects_raw)),
        )
        agent_formulas = tuple(_formula(a.get("formula"), f"agent {i}.formula") for i, a in enumerate(agents_raw))
        object_formulas = tuple(_formula(o.get("formula"), f"object {j}.formula")
                                for j, o in enumerate(objects_raw))

        nav = _dataclass_from(NavConfig, data.get("navigation"), "navigation",
                              rename={"damping": "gain", "epsilon": "goal_epsilon"})
        settings = _dataclass_from(ExecutorSettings, data.get("executor"), "executor")
        mc = data.get("planning", {}) or {}
        max_concurrent = mc.get("max_concurrent")
    except KeyError as exc:
        raise ScenarioError(f"missing key {exc.args[0]!r}") from exc
    except (InvalidInputError, TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(str(exc)) from exc

    return Scenario(
        name=str(data.get("name", source or "scenario")),
        workspace=workspace,
        world=World(agents, objects),
        initial=WorldState(tuple(agent_states), tuple(object_states), tuple(grasps), 0.0),
        labeling=labeling,
        agent_formulas=agent_formulas,
        object_formulas=object_formulas,
        nav=nav,
        settings=settings,
        max_concurrent=None if max_concurrent is None else int(max_concurrent),
        strict_boundary=strict,
        source=source,
    )


def resolve_path(path) -> Path:
    """A path on disk, or the name of a bundled scenario (``scenario1``, ``scenario2``)."""
    p = Path(path)
    if p.exists():
        return p
    bundled = BUILTIN / (p.name if p.suffix else p.name + ".yaml")
    if bundled.exists():
        return bundled
    raise FileNotFoundError(f"scenario file not found: {path}")


def load_scenario(path) -> Scenario:
    p = resolve_path(path)
    try:
        data = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{p}: not valid YAML: {exc}") from exc
    return scenario_from_dict(data, str(p))


# -- validation -------------------------------------------------------------

def body_radius(model) -> float:
    """Horizontal radius around the body's reference point that it never leaves."""
    if isinstance(model, AgentModel):
        fixed, rot = model._sphere_fixed, model._sphere_rot
        reach = np.linalg.norm(fixed[:, :2], axis=1) + np.linalg.norm(rot, axis=1)
        return float(np.max(reach + model._sphere_radii))
    return float(np.max(np.linalg.norm(model.sphere_offsets, axis=1) + model.geometry.radii))


@dataclass
class Report:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def __str__(self):
        lines = [f"error: {e}" for e in self.errors] + [f"warning: {w}" for w in self.warnings]
        lines.append("valid" if self.ok else f"invalid ({len(self.errors)} problems)")
        return "\n".join(lines)


def validate_scenario(sc: Scenario) -> Report:
    """Every violated invariant, each naming the entity it concerns."""
    rep = Report()
    ws, world, st, eps = sc.workspace, sc.world, sc.initial, sc.epsilon
    K, N, M = len(ws.regions), len(world.agents), len(world.objects)

    for problem in ws.violations():
        boundary = "workspace center" in problem
        (rep.warnings if boundary and not sc.strict_boundary else rep.errors).append(problem)
    ids = [r.id for r in ws.regions]
    if len(set(ids)) != len(ids):
        rep.errors.append("region ids must be unique")
    if K < N or K < M:
        rep.errors.append(f"infeasible: {K} regions for {N} agents and {M} objects")

    need = (max((body_radius(m) for m in world.agents), default=0.0)
            + max((body_radius(m) for m in world.objects), default=0.0) + eps)
    for reg in ws.regions:
        if reg.radius < need:
            rep.errors.append(f"region {reg.id}: radius {reg.radius:g} m cannot hold an agent and an object "
                              f"(needs {need:.3f} m)")

    def where(centers, radii):
        return [r.id for r in ws.regions if spheres_in_region(centers, radii, r, eps)]

    bodies = []
    agent_regions = []
    for i, (m, a) in enumerate(zip(world.agents, st.agents)):
        if np.any(a.qd != 0):
            rep.errors.append(f"agent {i}: initial joint rates must be zero")
        c, r = m.world_spheres(a.q)
        bodies.append((f"agent {i}", c, r))
        inside = where(c, r)
        agent_regions.append(inside[0] if inside else None)
        if not inside:
            rep.errors.append(f"agent {i}: not inside any region")
    object_regions = []
    for j, (m, o) in enumerate(zip(world.objects, st.objects)):
        c, r = m.world_spheres(o.pose)
        if st.holder_of(j) is None:
            bodies.append((f"object {j}", c, r))
        inside = where(c, r)
        object_regions.append(inside[0] if inside else None)
        if not inside:
            rep.errors.append(f"object {j}: not inside any region")
    for kind, regs in (("agents", agent_regions), ("objects", object_regions)):
        seen = {}
        for idx, k in enumerate(regs):
            if k is not None and k in seen:
                rep.errors.append(f"{kind} {seen[k]} and {idx} share region {k}")
            seen.setdefault(k, idx)
    for a_idx in range(len(bodies)):
        for b_idx in range(a_idx + 1, len(bodies)):
            na, ca, ra = bodies[a_idx]
            nb, cb, rb = bodies[b_idx]
            if min_clearance(ca, ra, cb, rb) <= 0:
                rep.errors.append(f"{na} and {nb} overlap")
    owners = [g.agent for g in st.grasps]
    if len(owners) != len(set(owners)):
        rep.errors.append("an agent holds more than one object")
    if len({g.obj for g in st.grasps}) != len(st.grasps):
        rep.errors.append("an object is held by more than one agent")

    props = sc.labeling.propositions
    for kind, forms in (("agent", sc.agent_formulas), ("object", sc.object_formulas)):
        for idx, f in enumerate(forms):
            if f is None:
                continue
            missing = sorted(atoms(f) - props)
            if missing:
                rep.errors.append(f"{kind} {idx}: formula uses unknown propositions {missing}")
    for i, m in enumerate(sc.labeling.agents):
        bad = sorted(set(m) - set(ids))
        if bad:
            rep.errors.append(f"agent {i}: labels for unknown regions {bad}")
    for j, m in enumerate(sc.labeling.objects):
        bad = sorted(set(m) - set(ids))
        if bad:
            rep.errors.append(f"object {j}: labels for unknown regions {bad}")
    if rep.ok:
        grasp = [FREE] * N
        for g in st.grasps:
            grasp[g.agent] = g.obj
        s0 = SystemState(tuple(agent_regions), tuple(object_regions), tuple(grasp))
        if not s0.is_valid():
            rep.errors.append(f"initial discrete state {s0} is not valid (held objects must share the region)")
    return rep


def check(sc: Scenario) -> Report:
    rep = validate_scenario(sc)
    if not rep.ok:
        raise ScenarioError(rep.errors)
    return rep
