"""Plan execution: per step, run the feedback controllers of the acting agents
until every action completes, then synchronize on a shared round boundary."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .abstraction import FREE, LabelingMap, PlanInconsistencyError, SystemState, derive_assignment, label
from . import _fast
from .dynamics import (AgentState, GraspCoupling, NumericalBlowupError, ObjectState, World, WorldState,
                       grasp_matrix, object_rhs, rk4)
from .geometry import Pose, Workspace, in_region, spheres_in_region
from .navfield import ActionAssignment, NavConfig, NavigationField, SingularFieldError, WorldView

__all__ = [
    "BehaviorLog", "ExecutorSettings", "RoundFailure", "RoundResult", "TrajectoryWriter",
    "derive_assignment", "execute", "recover_state", "run_round",
]


@dataclass(frozen=True)
class ExecutorSettings:
    dt: float = 1e-3  # s
    timeout: float = 120.0  # simulated s per round
    grasp_dwell: float = 1.0  # s
    grasp_reach: float = 0.3  # m, end-effector to object COM
    approach_rate: float = 0.05  # joint-rate norm below which an approach may stop
    lyapunov_tolerance: float = 1e-6
    log_every: int = 100  # integration steps between trajectory rows
    latch_every: int = 10  # integration steps between departure-region checks
    max_halvings: int = 12  # step refinements allowed inside one dt


@dataclass
class RoundResult:
    step: int
    success: bool
    t_final: float
    state: WorldState
    completion: dict[int, float] = field(default_factory=dict)
    min_clearance: float = np.inf
    max_phi: float = 0.0
    max_dV: float = -np.inf
    lyapunov_violations: int = 0
    kappa: float = 0.0
    refined_steps: int = 0  # step halvings the integrator needed
    message: str = ""

    def summary(self) -> str:
        status = "ok" if self.success else "FAILED"
        times = ", ".join(f"agent {a}: {t:.3f}s" for a, t in sorted(self.completion.items()))
        if not np.isfinite(self.min_clearance):
            return f"round {self.step}: {status} idle" + (f" {self.message}" if self.message else "")
        return (f"round {self.step}: {status} t_f={self.t_final:.3f}s min_clearance={self.min_clearance:.4g}m "
                f"max_phi={self.max_phi:.4g} max_dV={self.max_dV:.3g} kappa={self.kappa:g} refined={self.refined_steps}"
                + (f" [{times}]" if times else "") + (f" {self.message}" if self.message else ""))


class RoundFailure(RuntimeError):
    def __init__(self, result: RoundResult, log: "BehaviorLog | None" = None):
        super().__init__(result.summary())
        self.result = result
        self.log = log


@dataclass
class BehaviorLog:
    """Timestamped configurations and provided services of every entity."""

    agents: dict[int, list] = field(default_factory=dict)  # i -> [(t, q, services)]
    objects: dict[int, list] = field(default_factory=dict)  # j -> [(t, pose vector, services)]
    rounds: list[RoundResult] = field(default_factory=list)
    boundaries: list[SystemState] = field(default_factory=list)  # recovered at every round boundary
    times: list[float] = field(default_factory=list)

    def record(self, state: WorldState, discrete: SystemState, labeling: LabelingMap):
        t = state.time
        if self.times and t <= self.times[-1]:
            # zero-duration (all idle) round: same instant, same services
            self.boundaries.append(discrete)
            return
        self.times.append(t)
        self.boundaries.append(discrete)
        for i, a in enumerate(state.agents):
            sigma = labeling.of_agent(i, discrete.agents[i])
            self.agents.setdefault(i, []).append((t, a.q.copy(), sigma))
        for j, o in enumerate(state.objects):
            sigma = labeling.of_object(j, discrete.objects[j])
            self.objects.setdefault(j, []).append((t, o.pose.as_vector(), sigma))

    def words(self, labeling: LabelingMap) -> list[frozenset]:
        return [label(s, labeling) for s in self.boundaries]


class TrajectoryWriter:
    """CSV trajectory log, floats with 17 significant digits."""

    header = ["t", "round", "entity", "id"] + [f"c{k}" for k in range(6)] + ["phi", "V", "min_clearance"]

    def __init__(self, stream):
        self._w = csv.writer(stream, lineterminator="\n")
        self._w.writerow(self.header)

    @staticmethod
    def _f(x) -> str:
        return format(float(x), ".17g")

    def __call__(self, round_index: int, state: WorldState, phi: float, V: float, clearance: float):
        t = self._f(state.time)
        tail = [self._f(phi), self._f(V), self._f(clearance)]
        for i, a in enumerate(state.agents):
            comps = [self._f(v) for v in a.q] + [""] * (6 - len(a.q))
            self._w.writerow([t, round_index, "agent", i] + comps + tail)
        for j, o in enumerate(state.objects):
            self._w.writerow([t, round_index, "object", j] + [self._f(v) for v in o.pose.as_vector()] + tail)


def _object_pose(world: World, state: WorldState, j: int) -> Pose:
    holder = state.holder_of(j)
    if holder is None:
        return state.objects[j].pose
    return state.grasp_of(holder).object_pose(world.agents[holder], state.agents[holder].q)


def recover_state(world: World, workspace: Workspace, state: WorldState, eps: float = 0.01) -> SystemState:
    """Discrete state read off the continuous one via region containment and grasp flags."""
    def where(spheres, what):
        for reg in workspace.regions:
            if spheres_in_region(*spheres, reg, eps):
                return reg.id
        raise PlanInconsistencyError(f"{what} is not inside any region")

    agents = tuple(where(m.world_spheres(s.q), f"agent {i}")
                   for i, (m, s) in enumerate(zip(world.agents, state.agents)))
    objects = tuple(where(m.world_spheres(_object_pose(world, state, j)), f"object {j}")
                    for j, m in enumerate(world.objects))
    grasp = []
    for i in range(len(world.agents)):
        g = state.grasp_of(i)
        grasp.append(FREE if g is None else g.obj)
    return SystemState(agents, objects, tuple(grasp))


def _view(world, workspace, state, regions_of) -> WorldView:
    return WorldView(
        workspace=workspace,
        agents=world.agents,
        objects=world.objects,
        q=[a.q for a in state.agents],
        object_poses=[_object_pose(world, state, j) for j in range(len(world.objects))],
        grasps={g.agent: g for g in state.grasps},
        regions_of=regions_of,
    )


class _Round:
    """Closed loop for one synchronized step."""

    def __init__(self, world, workspace, assignment, nav: NavConfig, settings: ExecutorSettings, state, start):
        self.world, self.workspace, self.assignment = world, workspace, assignment
        self.nav, self.settings = nav, settings
        self.regions_of = dict(enumerate(start.agents))
        self.n = [m.n for m in world.agents]
        self.offsets = np.concatenate([[0], np.cumsum(self.n)]).astype(int)
        self.kappa = nav.kappa
        self.latched: set = set()
        self.approach = {a for a, _ in assignment.grasp}
        self.gain = nav.potential_gain
        self.field: NavigationField | None = None
        self.refinements = 0
        n_agents = len(world.agents)
        self.params = np.array([[m.base_mass, m.link1_mass, m.link2_mass, m.base_size, m.link1_length,
                                 m.link2_length, m.gravity] for m in world.agents], dtype=float)
        self.damping = np.array([nav.damping(i) for i in range(n_agents)], dtype=float)
        self.rebuild(state)
        if self.field.ndof and nav.drive_force is not None:
            self.gain = self._auto_gain(state)

    def set_grasps(self, grasps: dict):
        n_agents = len(self.world.agents)
        self.grasped = np.zeros(n_agents, dtype=np.bool_)
        self.gpos = np.zeros((n_agents, 3))
        self.grot = np.tile(np.eye(3), (n_agents, 1, 1))
        self.omass = np.zeros(n_agents)
        self.oinertia = np.zeros((n_agents, 3, 3))
        self.ograv = np.zeros(n_agents)
        for a, g in grasps.items():
            om = self.world.objects[g.obj]
            self.grasped[a] = True
            self.gpos[a], self.grot[a] = g.position, g.rotation
            self.omass[a], self.oinertia[a], self.ograv[a] = om.mass, om.inertia, om.gravity

    def rebuild(self, state):
        cfg = replace(self.nav, kappa=self.kappa)
        view = _view(self.world, self.workspace, state, self.regions_of)
        self.field = NavigationField(view, self.assignment, cfg, approach=tuple(sorted(self.approach)),
                                     latched=frozenset(self.latched))
        self.kappa_built = self.kappa
        self.mover_index = {}
        self.mover_dof = np.full(len(self.n), -1, dtype=np.int64)
        idx = []
        for m in self.field.movers:
            self.mover_index[m.agent] = m.dof
            self.mover_dof[m.agent] = m.dof.start
            o = self.offsets[m.agent]
            idx.extend(range(o, o + self.n[m.agent]))
        self.q_index = np.array(idx, dtype=np.int64)
        self.tables = self.field.tables()
        self.set_grasps({g.agent: g for g in state.grasps})

    def _auto_gain(self, state) -> float:
        """Potential gain giving ``drive_force`` of goal attraction on the most pulled base."""
        q_all = np.concatenate([a.q for a in state.agents])
        _, _, attract = self.field.phi_grad_parts(q_all[self.q_index])
        peak = max(np.linalg.norm(attract[dof][:2]) for dof in self.mover_index.values())
        return self.nav.drive_force / peak if peak > 0 else self.nav.potential_gain

    def pack(self, state: WorldState) -> np.ndarray:
        return np.concatenate([a.q for a in state.agents] + [a.qd for a in state.agents])

    def unpack(self, x, state: WorldState) -> WorldState:
        nq = self.offsets[-1]
        agents = tuple(AgentState(x[self.offsets[i]:self.offsets[i + 1]],
                                  x[nq + self.offsets[i]: nq + self.offsets[i + 1]])
                       for i in range(len(self.n)))
        return replace(state, agents=agents)

    def _model(self):
        return (self.params, self.damping, self.grasped, self.gpos, self.grot, self.omass, self.oinertia,
                self.ograv, self.mover_dof, self.q_index)

    def rhs(self, x):
        """Closed-loop state derivative."""
        out, *_, singular = _fast.closed_loop(x, self._model(), self.tables, float(self.gain),
                                              float(self.kappa_built))
        if singular:
            raise SingularFieldError("navigation gradient evaluated on a zero of the obstacle/boundary term")
        return out

    def step(self, x, dt):
        """Advance by ``dt``; keeps phi, gradient, mover kinetic energy and clearance at ``x``.

        Returns the new state and a status: 0 ok, 1 ``x`` itself is singular,
        2 no admissible refined step exists.
        """
        s = self.settings
        x_new, phi, grad, ke, gap, status, refined = _fast.advance(
            x, dt, self._model(), self.tables, float(self.gain), float(self.kappa_built),
            s.lyapunov_tolerance, s.max_halvings)
        self.last_phi, self.last_grad, self.last_ke, self.last_gap = phi, grad, ke, gap
        self.refinements += refined
        return x_new, status


def _check_preconditions(assignment: ActionAssignment, start: SystemState):
    for a, _ in assignment.transit:
        if start.grasp[a] != FREE:
            raise PlanInconsistencyError(f"agent {a} cannot transit while holding object {start.grasp[a]}")
    for a, j, _ in assignment.transport:
        if start.grasp[a] != j:
            raise PlanInconsistencyError(f"agent {a} does not hold object {j}")
    for a, j in assignment.grasp:
        if start.grasp[a] != FREE or j in start.grasp or start.objects[j] != start.agents[a]:
            raise PlanInconsistencyError(f"agent {a} cannot grasp object {j}")
    for a, j in assignment.release:
        if start.grasp[a] != j:
            raise PlanInconsistencyError(f"agent {a} cannot release object {j}")


def run_round(world: World, workspace: Workspace, state: WorldState, assignment: ActionAssignment,
              nav: NavConfig = NavConfig(), settings: ExecutorSettings = ExecutorSettings(),
              step: int = 0, recorder=None) -> RoundResult:
    """Drive every acting agent to completion of its action on a shared clock."""
    eps = nav.goal_epsilon
    if assignment.is_empty:
        return RoundResult(step, True, state.time, state, kappa=nav.kappa)
    start = recover_state(world, workspace, state, eps)
    _check_preconditions(assignment, start)

    loop = _Round(world, workspace, assignment, nav, settings, state, start)
    dt = settings.dt
    t0 = state.time
    targets = dict(assignment.transit)
    targets.update({a: k for a, _, k in assignment.transport})
    carried = {a: j for a, j, _ in assignment.transport}
    grasp_obj = dict(assignment.grasp)
    release_obj = dict(assignment.release)
    dwell_start = {a: t0 for a in release_obj}  # releases start dwelling at once
    completion: dict[int, float] = {}
    result = RoundResult(step, False, t0, state, kappa=loop.kappa)
    grasps = {g.agent: g for g in state.grasps}
    x = loop.pack(state)
    nq = loop.offsets[-1]
    slow_since = None
    V_prev = None
    steps = 0

    def done_moving(i, xq, xqd) -> bool:
        sl = slice(loop.offsets[i], loop.offsets[i + 1])
        if np.linalg.norm(xqd[sl]) >= nav.rate_tolerance:
            return False
        reg = workspace.region(targets[i])
        if not in_region(world.agents[i], xq[sl], reg, eps):
            return False
        if i in carried:
            pose = grasps[i].object_pose(world.agents[i], xq[sl])
            return in_region(world.objects[carried[i]], pose, reg, eps)
        return True

    def snapshot(x_now, t_now):
        cur = loop.unpack(x_now, state)
        objs = list(state.objects)
        for a, g in grasps.items():
            am = world.agents[a]
            q, qd = cur.agents[a].q, cur.agents[a].qd
            twist = grasp_matrix(g, am, q).T @ am.jacobian(q) @ qd
            objs[g.obj] = replace(objs[g.obj], pose=g.object_pose(am, q), twist=twist)
        return replace(cur, objects=tuple(objs), grasps=tuple(grasps[a] for a in sorted(grasps)), time=t_now)

    def free_objects_step(cur_objs):
        """Advance free objects that still move; ``None`` when all of them rest."""
        out, moved = list(cur_objs), False
        for j, o in enumerate(cur_objs):
            if any(g.obj == j for g in grasps.values()) or not np.any(o.twist):
                continue
            m = world.objects[j]
            w = m.gravity_vector() if o.supported else np.zeros(6)
            x0 = np.concatenate([o.pose.position, o.pose.orientation, o.twist])
            xo = rk4(lambda z: object_rhs(m, z, w), x0, dt)
            out[j] = replace(o, pose=Pose(xo[:3], xo[3:6]), twist=xo[6:])
            moved = True
        return out if moved else None

    while True:
        t = t0 + steps * dt
        xq, xqd = x[:nq], x[nq:]
        x_next, status = loop.step(x, dt)
        if status == 1:
            result.message = f"configuration inside an obstacle at t={t:.3f}s"
            break
        phi = clearance = V = 0.0
        if loop.field.ndof:
            phi = loop.last_phi
            clearance = loop.last_gap
            result.min_clearance = min(result.min_clearance, clearance)
            result.max_phi = max(result.max_phi, phi)
            V = loop.gain * phi + loop.last_ke
            if V_prev is not None:
                dV = V - V_prev
                result.max_dV = max(result.max_dV, dV)
                result.lyapunov_violations += dV > settings.lyapunov_tolerance
            V_prev = V
            if phi >= 1.0 or clearance <= 0.0:
                result.message = f"safety lost at t={t:.3f}s (phi={phi:.4g}, clearance={clearance:.4g})"
                break
        if recorder is not None and steps % settings.log_every == 0:
            recorder(step, snapshot(x, t), phi, V, clearance)

        for i in targets:
            if done_moving(i, xq, xqd):
                completion.setdefault(i, t)
            else:
                completion.pop(i, None)
        rebuild = False
        for a, j in grasp_obj.items():
            sl = slice(loop.offsets[a], loop.offsets[a + 1])
            if a in loop.approach:
                reach = np.linalg.norm(world.agents[a].ee_position(xq[sl]) - state.objects[j].pose.position)
                if reach <= settings.grasp_reach and np.linalg.norm(xqd[sl]) < settings.approach_rate:
                    loop.approach.discard(a)
                    dwell_start[a] = t
                    rebuild = True
            elif a not in completion and t - dwell_start[a] >= settings.grasp_dwell - 1e-9:
                grasps[a] = GraspCoupling.from_poses(a, j, world.agents[a], xq[sl], state.objects[j].pose)
                completion[a] = t
                rebuild = True
        for a, j in release_obj.items():
            if a not in completion and t - dwell_start[a] >= settings.grasp_dwell - 1e-9:
                pose = snapshot(x, t).objects[j].pose
                objs = list(state.objects)
                objs[j] = ObjectState(pose, np.zeros(6), supported=True)
                state = replace(state, objects=tuple(objs))
                del grasps[a]
                completion[a] = t
                rebuild = True
        if loop.field.ndof and steps % settings.latch_every == 0:
            for m in loop.field.movers:
                key = (m.agent, m.home)
                if m.kind != "grasp" and m.home is not None and key not in loop.latched:
                    if loop.field.region_gap(xq[loop.q_index], m.agent, m.home) >= nav.activation_radius:
                        loop.latched.add(key)
                        rebuild = True
        if len(completion) == len(assignment.acting):
            result.success = True
            break
        if t - t0 >= settings.timeout - 1e-9:
            pending = sorted(assignment.acting - set(completion))
            result.message = f"timeout after {settings.timeout:g}s; pending agents {pending}"
            break
        if loop.field.ndof and not rebuild:
            resting = all(np.linalg.norm(xqd[loop.offsets[a]:loop.offsets[a + 1]]) < nav.rate_tolerance
                          for a in loop.mover_index)
            if resting and loop.gain * np.linalg.norm(loop.last_grad) < nav.saddle_force_tolerance:
                slow_since = t if slow_since is None else slow_since
                if t - slow_since >= nav.saddle_time:
                    if loop.kappa + nav.kappa_step > nav.kappa_max:
                        result.message = f"stuck at a critical point with kappa={loop.kappa:g}"
                        break
                    loop.kappa += nav.kappa_step
                    result.kappa = loop.kappa
                    rebuild = True
                    slow_since = None
            else:
                slow_since = None
        if rebuild:
            movers_before = (loop.kappa_built, {m.agent for m in loop.field.movers})
            state = snapshot(x, t)
            loop.rebuild(state)
            loop.set_grasps(grasps)
            if movers_before != (loop.kappa_built, {m.agent for m in loop.field.movers}):
                V_prev = None  # new mode, new Lyapunov function
            x_next, status = loop.step(x, dt)
            if status == 1:
                result.message = f"configuration inside an obstacle at t={t:.3f}s"
                break
        if status == 2:
            result.message = f"no admissible integration step at t={t:.3f}s"
            break
        x = x_next
        if not np.all(np.isfinite(x)):
            raise NumericalBlowupError(f"closed loop diverged at t={t + dt:.6g}", snapshot(x, t + dt))
        moved = free_objects_step(state.objects)
        if moved is not None:
            state = replace(state, objects=tuple(moved))
        steps += 1

    t_end = t0 + steps * dt
    final = snapshot(x, t_end)
    result.state = final
    result.t_final = t_end
    result.completion = {a: tc - t0 for a, tc in completion.items()}
    result.refined_steps = loop.refinements
    if recorder is not None and steps % settings.log_every != 0:
        recorder(step, final, loop.field.phi(x[:nq][loop.q_index]) if loop.field.ndof else 0.0, V_prev or 0.0,
                 result.min_clearance)
    return result


def plan_sequence(plan, rounds: int) -> list[SystemState]:
    """States visited when running the prefix and ``rounds`` repetitions of the cycle."""
    prefix, cycle = list(plan.prefix), list(plan.cycle)
    if rounds <= 0:
        return prefix or cycle[:1]
    return prefix + cycle * rounds + cycle[:1]


def execute(plan, world: World, workspace: Workspace, state: WorldState, labeling: LabelingMap,
            nav: NavConfig = NavConfig(), settings: ExecutorSettings = ExecutorSettings(),
            rounds: int = 1, recorder=None, progress=None) -> BehaviorLog:
    """Run the plan prefix and ``rounds`` cycle repetitions; abort on the first failed round."""
    eps = nav.goal_epsilon
    seq = plan_sequence(plan, rounds)
    log = BehaviorLog()
    current = recover_state(world, workspace, state, eps)
    if current != seq[0]:
        raise PlanInconsistencyError(f"initial state {current} does not realize plan state {seq[0]}")
    for a in state.agents:
        if np.any(a.qd != 0):
            raise PlanInconsistencyError("agents must start at rest")
    log.record(state, current, labeling)
    for k, (src, dst) in enumerate(zip(seq, seq[1:])):
        assignment = derive_assignment(src, dst)
        res = run_round(world, workspace, state, assignment, nav, settings, step=k, recorder=recorder)
        log.rounds.append(res)
        if progress is not None:
            progress(res)
        if not res.success:
            raise RoundFailure(res, log)
        state = res.state
        reached = recover_state(world, workspace, state, eps)
        if reached != dst:
            res.success = False
            res.message = f"reached {reached}, plan expects {dst}"
            raise RoundFailure(res, log)
        log.record(state, reached, labeling)
    log.final_state = state
    return log
