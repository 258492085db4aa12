"""Multi-agent navigation function and the transition/transport control laws.

The obstacle term is a product of smoothed sphere-pair clearances. Each pair
contributes ``b(d) = s (2 - s)`` with ``s = d / R`` below the activation radius
``R`` and exactly 1 beyond it, so far obstacles leave the field untouched and
any contact drives the product to zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _fast
from .dynamics import AgentModel, GraspCoupling, ObjectModel, coupled_terms, agent_terms
from .geometry import Region, Workspace, min_clearance


class SingularFieldError(ArithmeticError):
    """Gradient requested where the obstacle or boundary term vanishes."""


class InvalidStateError(ValueError):
    """Operation requires a grasp (or other state) that is not active."""


@dataclass(frozen=True)
class NavConfig:
    kappa: float = 7.0
    gain: float = 30.0  # damping k_i, N*s/m or N*m*s/rad
    agent_gains: tuple[tuple[int, float], ...] = ()
    activation_radius: float = 2.0  # m
    self_activation_radius: float = 0.1  # m, pairs within one agent and its load
    kappa_step: float = 1.0
    kappa_max: float = 12.0
    goal_epsilon: float = 0.01  # m
    rate_tolerance: float = 1e-3
    potential_gain: float = 1.0
    drive_force: float | None = None  # N; if set, potential_gain is rescaled per round
    saddle_force_tolerance: float = 1e-6
    saddle_time: float = 0.5  # s
    self_collision: bool = True
    singularity_spheres: tuple[tuple[tuple[float, float, float], float], ...] = ()

    def __post_init__(self):
        if not self.kappa >= 1:
            raise ValueError("kappa must be >= 1")
        if not self.gain > 0 or any(g <= 0 for _, g in self.agent_gains):
            raise ValueError("damping gains must be positive")
        if not (self.activation_radius > 0 and self.self_activation_radius > 0):
            raise ValueError("activation radius must be positive")

    def damping(self, agent: int) -> float:
        return dict(self.agent_gains).get(agent, self.gain)


@dataclass(frozen=True)
class ActionAssignment:
    """Disjoint transit / transport / grasp / release sets for one round."""

    transit: tuple[tuple[int, int], ...] = ()  # (agent, target region)
    transport: tuple[tuple[int, int, int], ...] = ()  # (agent, object, target region)
    grasp: tuple[tuple[int, int], ...] = ()  # (agent, object)
    release: tuple[tuple[int, int], ...] = ()  # (agent, object)
    idle: tuple[int, ...] = ()

    def __post_init__(self):
        for name in ("transit", "transport", "grasp", "release"):
            object.__setattr__(self, name, tuple(sorted(tuple(x) for x in getattr(self, name))))
        object.__setattr__(self, "idle", tuple(sorted(self.idle)))
        agents = ([a for a, _ in self.transit] + [a for a, _, _ in self.transport]
                  + [a for a, _ in self.grasp] + [a for a, _ in self.release] + list(self.idle))
        if len(agents) != len(set(agents)):
            raise ValueError("action sets must be pairwise disjoint")
        objs = [o for _, o, _ in self.transport] + [o for _, o in self.grasp] + [o for _, o in self.release]
        if len(objs) != len(set(objs)):
            raise ValueError("each object may appear in at most one action")

    @property
    def acting(self) -> set[int]:
        return ({a for a, _ in self.transit} | {a for a, _, _ in self.transport}
                | {a for a, _ in self.grasp} | {a for a, _ in self.release})

    @property
    def is_empty(self) -> bool:
        return not self.acting

    def tag(self, agent: int) -> str:
        if agent in dict(self.transit):
            return "transit"
        if agent in {a for a, _, _ in self.transport}:
            return "transport"
        if agent in dict(self.grasp):
            return "grasp"
        if agent in dict(self.release):
            return "release"
        return "idle"


def bump(d, radius):
    """Smoothed clearance term and its derivative with respect to ``d``."""
    d = np.asarray(d, dtype=float)
    s = d / radius
    near = s < 1.0
    b = np.where(near, s * (2.0 - s), 1.0)
    db = np.where(near, (2.0 - 2.0 * s) / radius, 0.0)
    return np.where(d <= 0.0, 0.0, b), db


def gamma_transition(model: AgentModel, q, region: Region) -> float:
    e = model.ee_position(q) - region.center
    return float(e @ e)


def gamma_transport(model: AgentModel, q, coupling: GraspCoupling | None, region: Region) -> float:
    if coupling is None:
        raise InvalidStateError("transport error needs an active grasp")
    e = coupling.object_pose(model, q).position - region.center
    return float(e @ e)


def delta_terms(centers, radii, workspace: Workspace) -> np.ndarray:
    r = workspace.radius - np.asarray(radii)
    d2 = np.sum((np.asarray(centers) - workspace.center) ** 2, axis=-1)
    return np.maximum(r * r - d2, 0.0)


def delta_workspace(model: AgentModel, q, workspace: Workspace) -> float:
    c, r = model.world_spheres(q)
    return float(np.prod(delta_terms(c, r, workspace)))


def nav_value(gamma: float, obstacle: float, kappa: float) -> float:
    """``gamma / (gamma**kappa + obstacle)**(1/kappa)`` with the limits made explicit."""
    if gamma <= 0.0:
        return 0.0
    if obstacle <= 0.0:
        return 1.0
    return float(gamma / (gamma**kappa + obstacle) ** (1.0 / kappa))


@dataclass
class _Mover:
    agent: int
    kind: str  # transit | transport | grasp
    dof: slice
    target: np.ndarray
    home: int | None
    goal_region: int | None
    coupling: GraspCoupling | None = None
    body: slice = slice(0)  # agent (+ carried object) spheres in the point table
    n_agent_spheres: int = 0
    goal_index: int = -1


@dataclass
class WorldView:
    """Everything the field needs to know about the current continuous state."""

    workspace: Workspace
    agents: tuple[AgentModel, ...]
    objects: tuple[ObjectModel, ...]
    q: list[np.ndarray]  # per-agent configurations
    object_poses: list  # per-object Pose
    grasps: dict[int, GraspCoupling] = field(default_factory=dict)  # agent -> coupling
    regions_of: dict[int, int] = field(default_factory=dict)  # agent -> region at round start


class _PointTable:
    """Accumulates attached points; static points get the dummy owner slot."""

    def __init__(self):
        self.fixed, self.rot, self.radii, self.owner = [], [], [], []

    def add(self, fixed, rot, radii, owner) -> slice:
        start = len(self.radii)
        self.fixed.extend(np.atleast_2d(fixed))
        self.rot.extend(np.atleast_2d(rot))
        self.radii.extend(np.atleast_1d(radii))
        self.owner.extend([owner] * len(np.atleast_1d(radii)))
        return slice(start, len(self.radii))


class NavigationField:
    """Navigation function over the stacked configuration of the acting agents.

    Movers are transit and transport agents plus grasping agents while they
    approach their object. Everything else is a static obstacle.
    """

    def __init__(self, view: WorldView, assignment: ActionAssignment, config: NavConfig,
                 approach: tuple[int, ...] | None = None, latched: frozenset = frozenset()):
        self.view = view
        self.assignment = assignment
        self.config = config
        self.kappa = config.kappa
        self.latched = frozenset(latched)  # (agent, region) pairs treated as obstacles
        if approach is None:
            approach = tuple(a for a, _ in assignment.grasp)
        acts = ([(a, "transit", k, None) for a, k in assignment.transit]
                + [(a, "transport", k, j) for a, j, k in assignment.transport]
                + [(a, "grasp", None, j) for a, j in assignment.grasp if a in approach])
        acts.sort()
        self.movers: list[_Mover] = []
        offset = 0
        for a, kind, k, j in acts:
            n = view.agents[a].n
            self.movers.append(self._mover(a, kind, slice(offset, offset + n), k, j))
            offset += n
        self.ndof = offset
        self._build()

    def _mover(self, a, kind, dof, goal_region, obj):
        view = self.view
        coupling = None
        if kind == "transport":
            coupling = view.grasps.get(a)
            if coupling is None or coupling.obj != obj:
                raise InvalidStateError(f"agent {a} does not hold object {obj}")
        if kind == "grasp":
            target = view.object_poses[obj].position
        else:
            target = view.workspace.region(goal_region).center
        return _Mover(a, kind, dof, np.asarray(target, dtype=float), view.regions_of.get(a),
                      goal_region, coupling)

    def _build(self):
        view, cfg = self.view, self.config
        pts = _PointTable()
        sing = [(np.asarray(c, dtype=float), float(r)) for c, r in cfg.singularity_spheres]
        pairs, tags, radius = [], [], []  # tag: 0 collision, 1 forbidden region, 2 singularity

        mover_ids = {m.agent for m in self.movers}
        carried = {m.coupling.obj for m in self.movers if m.coupling is not None}
        ee_points = {}
        sing_points = {}
        for m in self.movers:
            model = view.agents[m.agent]
            d0 = m.dof.start
            start = len(pts.radii)
            pts.add(model._sphere_fixed, model._sphere_rot, model._sphere_radii, d0)
            m.n_agent_spheres = len(model._sphere_radii)
            if m.coupling is not None:
                om = view.objects[m.coupling.obj]
                pts.add(*m.coupling.object_fixed_rot(model, om.sphere_offsets), om.geometry.radii, d0)
                goal = m.coupling.object_fixed_rot(model, np.zeros((1, 3)))
            else:
                goal = model.attach_many(["ee"], [np.zeros(3)])
            m.body = slice(start, len(pts.radii))
            m.goal_index = pts.add(*goal, [0.0], d0).start
            if sing:
                ee_points[m.agent] = (m.goal_index if m.coupling is None
                                      else pts.add(*model.attach_many(["ee"], [np.zeros(3)]), [0.0], d0).start)
                sf, sr = model.attach_many(["base"] * len(sing), [c for c, _ in sing])
                sing_points[m.agent] = pts.add(sf, sr, [r for _, r in sing], d0)

        static = self.ndof  # dummy owner slot for non-moving points
        static_bodies = []
        for a, model in enumerate(view.agents):
            if a not in mover_ids:
                c, r = model.world_spheres(view.q[a])
                static_bodies.append(pts.add(c, np.zeros_like(c), r, static))
        for j, om in enumerate(view.objects):
            if j in carried:
                continue
            holder = next((a for a, g in view.grasps.items() if g.obj == j), None)
            if holder is not None:
                pose = view.grasps[holder].object_pose(view.agents[holder], view.q[holder])
            else:
                pose = view.object_poses[j]
            c, r = om.world_spheres(pose)
            static_bodies.append(pts.add(c, np.zeros_like(c), r, static))
        region_point = {}
        for reg in view.workspace.regions:
            region_point[reg.id] = pts.add(reg.center, np.zeros(3), reg.radius, static).start

        def connect(A, B, tag, R=cfg.activation_radius):
            for p in A:
                for p2 in B:
                    pairs.append((p, p2))
                    tags.append(tag)
                    radius.append(R)

        for i, m in enumerate(self.movers):
            body = range(m.body.start, m.body.stop)
            for sb in static_bodies:
                connect(body, range(sb.start, sb.stop), 0)
            allowed = {m.home} if m.kind == "grasp" else {m.home, m.goal_region}
            for rid, p in region_point.items():
                if rid not in allowed or (m.agent, rid) in self.latched:
                    connect(body, [p], 1)
            for m2 in self.movers[i + 1:]:
                connect(body, range(m2.body.start, m2.body.stop), 0)
            if cfg.self_collision:
                frames = view.agents[m.agent].sphere_frames()
                at = lambda names: [m.body.start + k for k, f in enumerate(frames) if f in names]
                Rs = cfg.self_activation_radius
                connect(at(("base",)), at(("link2",)), 0, Rs)
                connect(range(m.body.start + m.n_agent_spheres, m.body.stop), at(("base", "link1")), 0, Rs)
            if sing:
                s = sing_points[m.agent]
                connect([ee_points[m.agent]], range(s.start, s.stop), 2)

        self._fixed = np.array(pts.fixed, dtype=float).reshape(-1, 3)
        self._rot = np.array(pts.rot, dtype=float).reshape(-1, 3)
        self._radii = np.array(pts.radii, dtype=float)
        self._owner = np.array(pts.owner, dtype=np.int64)
        pairs = np.array(pairs, dtype=np.int64).reshape(-1, 2)
        self._ia, self._ib = pairs[:, 0], pairs[:, 1]
        self._tags = np.array(tags, dtype=np.int64)
        self._pair_radius = np.array(radius, dtype=float)
        self._rsum = self._radii[self._ia] + self._radii[self._ib]
        self._goal_idx = np.array([m.goal_index for m in self.movers], dtype=np.int64)
        self._targets = np.array([m.target for m in self.movers], dtype=float).reshape(-1, 3)
        self._delta_idx = np.concatenate(
            [np.arange(m.body.start, m.body.start + m.n_agent_spheres) for m in self.movers]
        ).astype(np.int64) if self.movers else np.zeros(0, dtype=np.int64)
        rr = view.workspace.radius - self._radii[self._delta_idx]
        self._delta_r2 = rr * rr
        self._center = np.asarray(view.workspace.center, dtype=float)

    def tables(self) -> tuple:
        """Arrays consumed by the compiled evaluators, in their argument order."""
        return (self._fixed, self._rot, self._owner, self._ia, self._ib, self._rsum, self._pair_radius,
                self._tags, self._goal_idx, self._targets, self._delta_idx, self._delta_r2, self._center)

    # -- evaluation ---------------------------------------------------------
    def stack(self, q_list) -> np.ndarray:
        """Stacked mover configuration from per-agent configurations."""
        out = np.zeros(self.ndof)
        for m in self.movers:
            out[m.dof] = q_list[m.agent]
        return out

    def _points(self, qt):
        """All point positions ``(k,3)`` and their theta-derivatives ``(k,3)``."""
        qe = np.concatenate([np.asarray(qt, dtype=float), np.zeros(3)])
        o = self._owner
        th = qe[o + 2]
        c, s = np.cos(th), np.sin(th)
        a, b, z = self._rot[:, 0], self._rot[:, 1], self._rot[:, 2]
        P = self._fixed.copy()
        P[:, 0] += c * a - s * z + qe[o]
        P[:, 1] += b + qe[o + 1]
        P[:, 2] += s * a + c * z
        dth = np.stack([-s * a - c * z, np.zeros_like(a), c * a - s * z], axis=1)
        return P, dth

    def components(self, qt, need_grad=True):
        """Return ``(gamma, grad_gamma, log_F, grad_log_F, F_is_zero)``."""
        gamma, ggrad, logF, glog, zero, _, _ = _fast.field_components(
            np.asarray(qt, dtype=float), *self.tables()[:-1], self._center, need_grad)
        if zero:
            return gamma, ggrad if need_grad else None, -np.inf, None, True
        return gamma, ggrad if need_grad else None, logF, glog if need_grad else None, False

    def _pair_gaps(self, qt):
        P, _ = self._points(qt)
        diff = P[self._ia] - P[self._ib]
        return np.sqrt(np.einsum("ij,ij->i", diff, diff)) - self._rsum, P

    def beta(self, qt) -> float:
        d, _ = self._pair_gaps(qt)
        return float(np.prod(bump(d, self._pair_radius)[0]))

    def delta(self, qt) -> float:
        P, _ = self._points(qt)
        idx = self._delta_idx
        return float(np.prod(delta_terms(P[idx], self._radii[idx], self.view.workspace)))

    def gamma(self, qt) -> float:
        P, _ = self._points(qt)
        e = P[self._goal_idx] - self._targets
        return float(np.sum(e * e))

    def phi(self, qt) -> float:
        gamma, _, logF, _, zero = self.components(qt, need_grad=False)
        if gamma <= 0.0:
            return 0.0
        if zero:
            return 1.0
        k = self.kappa
        lg = np.log(gamma)
        return float(np.exp(lg - np.logaddexp(k * lg, logF) / k))

    def phi_and_grad(self, qt):
        phi, grad, _ = self.phi_grad_parts(qt)
        return phi, grad

    def phi_grad_parts(self, qt):
        """``(phi, grad, attractive part of grad)``; the rest comes from obstacles and boundary."""
        gamma, ggrad, logF, glog, zero = self.components(qt)
        if zero:
            raise SingularFieldError("navigation gradient evaluated on a zero of the obstacle/boundary term")
        phi, grad, attract = _fast.nav_phi_grad(float(self.kappa), gamma, ggrad, logF, glog)
        return float(phi), grad, attract

    def grad(self, qt) -> np.ndarray:
        return self.phi_and_grad(qt)[1]

    # -- diagnostics --------------------------------------------------------
    def clearance(self, qt) -> float:
        """Smallest gap over collision pairs (regions and singularities excluded)."""
        d, _ = self._pair_gaps(qt)
        d = d[self._tags == 0]
        return float(np.min(d)) if d.size else np.inf

    def forbidden_clearance(self, qt) -> float:
        d, _ = self._pair_gaps(qt)
        d = d[self._tags == 1]
        return float(np.min(d)) if d.size else np.inf

    def mover_spheres(self, qt, agent: int):
        """World spheres (agent plus carried object) of one mover."""
        P, _ = self._points(qt)
        for m in self.movers:
            if m.agent == agent:
                return P[m.body], self._radii[m.body]
        raise KeyError(agent)

    def region_gap(self, qt, agent: int, region_id: int) -> float:
        c, r = self.mover_spheres(qt, agent)
        reg = self.view.workspace.region(region_id)
        return min_clearance(c, r, reg.center, reg.radius)



def control_transition(model: AgentModel, q, qd, grad, config: NavConfig, agent: int = 0) -> np.ndarray:
    g = model.gravity_vector(np.asarray(q, dtype=float))
    return g - config.potential_gain * np.asarray(grad) - config.damping(agent) * np.asarray(qd)


def control_transport(model: AgentModel, q, qd, coupling: GraspCoupling | None, obj: ObjectModel,
                      grad, config: NavConfig, agent: int = 0) -> np.ndarray:
    if coupling is None:
        raise InvalidStateError("transport control needs an active grasp")
    _, _, g_bar = coupled_terms(model, q, qd, obj, coupling)
    return g_bar - config.potential_gain * np.asarray(grad) - config.damping(agent) * np.asarray(qd)


def hold_torque(model: AgentModel, q, qd, config: NavConfig, agent: int = 0,
                coupling: GraspCoupling | None = None, obj: ObjectModel | None = None) -> np.ndarray:
    """Gravity compensation plus damping; keeps a resting agent at rest."""
    if coupling is None:
        _, _, g = agent_terms(model, q, qd)
    else:
        _, _, g = coupled_terms(model, q, qd, obj, coupling)
    return g - config.damping(agent) * np.asarray(qd)
