"""Lagrangian dynamics of agents, objects and rigidly coupled agent-object pairs.

The agent is a planar mobile manipulator with joint vector ``q = [x, y, theta]``:
a point-mass cubic base translating in the x-y plane, a vertical first link
rigidly mounted on it and a second link hinged at the top of the first one,
rotating about the negative y axis. Every point attached to the agent can be
written as ``(x, y, 0) + fixed + R(theta) @ rotating`` which keeps forward
kinematics and all derivatives in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import BodyGeometry, InvalidInputError, Pose, Sphere, matrix_to_euler, skew

GRAVITY = 9.81  # m/s^2


class NumericalBlowupError(FloatingPointError):
    """Raised when integration produces non-finite values."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


def _link2_rotation(theta: float) -> np.ndarray:
    # rotation by theta about -y
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


def _link2_rotation_dot(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[-s, 0.0, -c], [0.0, 0.0, 0.0], [c, 0.0, -s]])


def _link2_rotation_ddot(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[-c, 0.0, s], [0.0, 0.0, 0.0], [-s, 0.0, -c]])


def default_agent_geometry(base_size=0.3, link1_length=0.3, link2_length=0.3, link_width=0.05):
    """Six spheres: two per body, each covering half of a box."""
    half = base_size / 2.0
    r_base = float(np.sqrt(2.0 * half**2 + (base_size / 4.0) ** 2))
    r_link1 = float(np.sqrt(2.0 * (link_width / 2.0) ** 2 + (link1_length / 4.0) ** 2))
    r_link2 = float(np.sqrt(2.0 * (link_width / 2.0) ** 2 + (link2_length / 4.0) ** 2))
    return BodyGeometry((
        Sphere("base", (0.0, 0.0, -base_size / 4.0), r_base),
        Sphere("base", (0.0, 0.0, base_size / 4.0), r_base),
        Sphere("link1", (0.0, 0.0, link1_length / 4.0), r_link1),
        Sphere("link1", (0.0, 0.0, 3.0 * link1_length / 4.0), r_link1),
        Sphere("link2", (0.0, 0.0, link2_length / 4.0), r_link2),
        Sphere("link2", (0.0, 0.0, 3.0 * link2_length / 4.0), r_link2),
    ))


@dataclass(frozen=True)
class AgentModel:
    """Planar 3-DOF mobile manipulator.

    Frames: ``base`` at the base center, ``link1`` at the top face of the base,
    ``link2`` at the hinge (top of link 1), ``ee`` at the tip of link 2. Base
    and link 1 translate only; link 2 and ``ee`` also rotate with ``theta``.
    """

    base_mass: float = 10.0
    link1_mass: float = 1.0
    link2_mass: float = 1.0
    base_size: float = 0.3
    link1_length: float = 0.3
    link2_length: float = 0.3
    link_width: float = 0.05
    gravity: float = GRAVITY
    geometry: BodyGeometry = field(default_factory=default_agent_geometry)

    n = 3

    def __post_init__(self):
        for name in ("base_mass", "link1_mass", "link2_mass", "base_size", "link1_length", "link2_length"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"agent {name} must be positive")
        fixed, rot = self.attach_many([s.frame for s in self.geometry.spheres],
                                      [s.offset for s in self.geometry.spheres])
        object.__setattr__(self, "_sphere_fixed", fixed)
        object.__setattr__(self, "_sphere_rot", rot)
        object.__setattr__(self, "_sphere_radii", self.geometry.radii)

    # -- kinematics -----------------------------------------------------
    @property
    def hinge_height(self) -> float:
        return self.base_size + self.link1_length

    @property
    def total_mass(self) -> float:
        return self.base_mass + self.link1_mass + self.link2_mass

    def attach(self, frame: str, offset) -> tuple[np.ndarray, np.ndarray]:
        """Decompose a point fixed in ``frame`` into (fixed, rotating) parts."""
        o = np.asarray(offset, dtype=float)
        if frame == "base":
            return np.array([0.0, 0.0, self.base_size / 2.0]) + o, np.zeros(3)
        if frame == "link1":
            return np.array([0.0, 0.0, self.base_size]) + o, np.zeros(3)
        if frame == "link2":
            return np.array([0.0, 0.0, self.hinge_height]), o.copy()
        if frame == "ee":
            return np.array([0.0, 0.0, self.hinge_height]), o + np.array([0.0, 0.0, self.link2_length])
        raise InvalidInputError(f"unknown agent frame {frame!r}")

    def attach_many(self, frames, offsets):
        parts = [self.attach(f, o) for f, o in zip(frames, offsets)]
        fixed = np.array([p[0] for p in parts]).reshape(-1, 3)
        rot = np.array([p[1] for p in parts]).reshape(-1, 3)
        return fixed, rot

    def check_q(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float).reshape(-1)
        if q.shape != (self.n,):
            raise InvalidInputError(f"agent configuration must have {self.n} entries, got {q.shape[0]}")
        return q

    def points(self, q, fixed, rot):
        """World positions ``(k,3)`` and Jacobians ``(k,3,n)`` of attached points."""
        R = _link2_rotation(q[2])
        dR = _link2_rotation_dot(q[2])
        P = fixed + rot @ R.T
        P[:, 0] += q[0]
        P[:, 1] += q[1]
        dP = np.zeros((P.shape[0], 3, 3))
        dP[:, 0, 0] = 1.0
        dP[:, 1, 1] = 1.0
        dP[:, :, 2] = rot @ dR.T
        return P, dP

    def world_spheres(self, q):
        q = self.check_q(q)
        P, _ = self.points(q, self._sphere_fixed, self._sphere_rot)
        return P, self._sphere_radii.copy()

    def sphere_points(self, q):
        """Sphere centers, their Jacobians and radii."""
        P, dP = self.points(q, self._sphere_fixed, self._sphere_rot)
        return P, dP, self._sphere_radii

    def sphere_frames(self) -> list[str]:
        return [s.frame for s in self.geometry.spheres]

    def ee_position(self, q) -> np.ndarray:
        q = self.check_q(q)
        R = _link2_rotation(q[2])
        return np.array([q[0], q[1], self.hinge_height]) + R[:, 2] * self.link2_length

    def ee_rotation(self, q) -> np.ndarray:
        return _link2_rotation(self.check_q(q)[2])

    def jacobian(self, q) -> np.ndarray:
        """6 x n end-effector Jacobian mapping joint rates to ``[p_dot; omega]``."""
        q = self.check_q(q)
        dR = _link2_rotation_dot(q[2])
        J = np.zeros((6, 3))
        J[0, 0] = 1.0
        J[1, 1] = 1.0
        J[:3, 2] = dR[:, 2] * self.link2_length
        J[4, 2] = -1.0
        return J

    def jacobian_dot(self, q, qd) -> np.ndarray:
        q = self.check_q(q)
        J = np.zeros((6, 3))
        J[:3, 2] = _link2_rotation_ddot(q[2])[:, 2] * self.link2_length * qd[2]
        return J

    # -- dynamics ---------------------------------------------------------
    def mass_matrix(self, q) -> np.ndarray:
        m2, l2 = self.link2_mass, self.link2_length
        c = np.cos(q[2])
        b13 = -m2 * 0.5 * l2 * c
        M = self.total_mass
        return np.array([[M, 0.0, b13], [0.0, M, 0.0], [b13, 0.0, m2 * l2 * l2 / 3.0]])

    def mass_matrix_grad(self, q) -> np.ndarray:
        """``dB[:, :, k]`` is the partial derivative of B with respect to ``q_k``."""
        m2, l2 = self.link2_mass, self.link2_length
        d = m2 * 0.5 * l2 * np.sin(q[2])
        dB = np.zeros((3, 3, 3))
        dB[0, 2, 2] = d
        dB[2, 0, 2] = d
        return dB

    def coriolis_matrix(self, q, qd) -> np.ndarray:
        return christoffel_matrix(self.mass_matrix_grad(q), qd)

    def gravity_vector(self, q) -> np.ndarray:
        m2, l2 = self.link2_mass, self.link2_length
        return np.array([0.0, 0.0, -m2 * self.gravity * 0.5 * l2 * np.sin(q[2])])

    def potential_energy(self, q) -> float:
        m2, l2 = self.link2_mass, self.link2_length
        z_base = self.base_size / 2.0
        z_link1 = self.base_size + self.link1_length / 2.0
        z_link2 = self.hinge_height + 0.5 * l2 * np.cos(q[2])
        return self.gravity * (self.base_mass * z_base + self.link1_mass * z_link1 + m2 * z_link2)

    def kinetic_energy(self, q, qd) -> float:
        qd = np.asarray(qd, dtype=float)
        return 0.5 * float(qd @ self.mass_matrix(q) @ qd)


def christoffel_matrix(dB: np.ndarray, qd) -> np.ndarray:
    """Coriolis matrix from Christoffel symbols of the first kind.

    ``N[k, j] = sum_i c_ijk qd_i`` with
    ``c_ijk = 0.5 (dB_kj/dq_i + dB_ki/dq_j - dB_ij/dq_k)``.
    """
    qd = np.asarray(qd, dtype=float)
    t1 = np.einsum("kji,i->kj", dB, qd)
    t2 = np.einsum("kij,i->kj", dB, qd)
    t3 = np.einsum("ijk,i->kj", dB, qd)
    return 0.5 * (t1 + t2 - t3)


@dataclass(frozen=True)
class ObjectModel:
    mass: float = 0.5
    inertia: np.ndarray = field(default_factory=lambda: np.eye(3) * (0.5 * 0.1**2 / 6.0))
    geometry: BodyGeometry = field(
        default_factory=lambda: BodyGeometry((Sphere("object", (0.0, 0.0, 0.0), 0.05 * np.sqrt(3.0) + 1e-3),)))
    gravity: float = GRAVITY

    def __post_init__(self):
        I = np.asarray(self.inertia, dtype=float).reshape(3, 3)
        if not self.mass >= 0:
            raise InvalidInputError("object mass must be non-negative")
        if self.mass > 0 and (not np.allclose(I, I.T) or np.min(np.linalg.eigvalsh(I)) <= 0):
            raise InvalidInputError("object inertia must be symmetric positive definite")
        object.__setattr__(self, "inertia", I)
        offsets = np.array([s.offset for s in self.geometry.spheres]).reshape(-1, 3)
        object.__setattr__(self, "_offsets", offsets)

    @property
    def sphere_offsets(self) -> np.ndarray:
        return self._offsets

    def world_spheres(self, pose: Pose):
        if not isinstance(pose, Pose):
            pose = Pose(*np.split(np.asarray(pose, dtype=float).reshape(6), 2))
        return pose.position + self._offsets @ pose.rotation.T, self.geometry.radii

    def mass_matrix(self, R: np.ndarray) -> np.ndarray:
        M = np.zeros((6, 6))
        M[:3, :3] = self.mass * np.eye(3)
        M[3:, 3:] = R @ self.inertia @ R.T
        return M

    def coriolis_matrix(self, R: np.ndarray, omega) -> np.ndarray:
        """Choice with ``C v = [0; w x I w]`` and ``M_dot - 2C`` skew-symmetric."""
        Iw = R @ self.inertia @ R.T
        Sw = skew(omega)
        C = np.zeros((6, 6))
        C[3:, 3:] = 0.5 * (Sw @ Iw - Iw @ Sw - skew(Iw @ omega))
        return C

    def gravity_vector(self) -> np.ndarray:
        return np.array([0.0, 0.0, self.mass * self.gravity, 0.0, 0.0, 0.0])


@dataclass(frozen=True)
class GraspCoupling:
    """Rigid attachment: object COM at ``ee + R_ee @ position``, ``R_obj = R_ee @ rotation``."""

    agent: int
    obj: int
    position: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float).reshape(3)
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-9) or np.linalg.det(R) <= 0:
            raise InvalidInputError("grasp rotation must be a proper rotation")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "rotation", R)

    @classmethod
    def from_poses(cls, agent: int, obj: int, model: AgentModel, q, pose: Pose) -> "GraspCoupling":
        R_ee = model.ee_rotation(q)
        rel = R_ee.T @ (pose.position - model.ee_position(q))
        return cls(agent, obj, rel, R_ee.T @ pose.rotation)

    def object_fixed_rot(self, model: AgentModel, offsets) -> tuple[np.ndarray, np.ndarray]:
        """Attached-point decomposition of object-frame offsets."""
        offsets = np.atleast_2d(offsets)
        ee_fixed, ee_rot = model.attach("ee", self.position)
        rot = ee_rot + offsets @ self.rotation.T
        return np.repeat(ee_fixed[None, :], offsets.shape[0], axis=0), rot

    def object_pose(self, model: AgentModel, q) -> Pose:
        R_ee = model.ee_rotation(q)
        p = model.ee_position(q) + R_ee @ self.position
        return Pose(p, matrix_to_euler(R_ee @ self.rotation))

    def object_rotation(self, model: AgentModel, q) -> np.ndarray:
        return model.ee_rotation(q) @ self.rotation

    def lever_arm(self, model: AgentModel, q) -> np.ndarray:
        """World vector from end-effector to object COM."""
        return model.ee_rotation(q) @ self.position


def grasp_matrix(coupling: GraspCoupling, model: AgentModel, q) -> np.ndarray:
    """Wrench map ``f_ee = G f_obj`` for the rigid grasp."""
    r = coupling.lever_arm(model, q)
    G = np.eye(6)
    G[3:, :3] = skew(r)
    return G


def agent_terms(model: AgentModel, q, qd):
    q = model.check_q(q)
    return model.mass_matrix(q), model.coriolis_matrix(q, qd), model.gravity_vector(q)


def coupled_terms(model: AgentModel, q, qd, obj: ObjectModel, coupling: GraspCoupling):
    """Agent dynamics with the rigidly grasped object reflected through the grasp."""
    q = model.check_q(q)
    qd = np.asarray(qd, dtype=float)
    B, N, g = agent_terms(model, q, qd)
    if obj.mass == 0:
        return B, N, g
    J = model.jacobian(q)
    Jd = model.jacobian_dot(q, qd)
    G = grasp_matrix(coupling, model, q)
    r = coupling.lever_arm(model, q)
    omega = J[3:] @ qd
    Gd_T = np.zeros((6, 6))
    Gd_T[:3, 3:] = -skew(np.cross(omega, r))
    Gbar = G.T @ J
    Gbar_dot = Gd_T @ J + G.T @ Jd
    R_obj = coupling.object_rotation(model, q)
    M_o = obj.mass_matrix(R_obj)
    C_o = obj.coriolis_matrix(R_obj, omega)
    B_bar = B + Gbar.T @ M_o @ Gbar
    N_bar = N + Gbar.T @ M_o @ Gbar_dot + Gbar.T @ C_o @ Gbar
    g_bar = g + Gbar.T @ obj.gravity_vector()
    return B_bar, N_bar, g_bar


def joint_accel(B, N, g, qd, tau) -> np.ndarray:
    return np.linalg.solve(B, tau - N @ qd - g)


# -- world state and integration ----------------------------------------

@dataclass(frozen=True)
class AgentState:
    q: np.ndarray
    qd: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float).reshape(-1).copy())
        object.__setattr__(self, "qd", np.asarray(self.qd, dtype=float).reshape(-1).copy())


@dataclass(frozen=True)
class ObjectState:
    pose: Pose
    twist: np.ndarray = field(default_factory=lambda: np.zeros(6))
    supported: bool = True

    def __post_init__(self):
        object.__setattr__(self, "twist", np.asarray(self.twist, dtype=float).reshape(6).copy())


@dataclass(frozen=True)
class World:
    """Static description: models of all agents and objects."""

    agents: tuple[AgentModel, ...]
    objects: tuple[ObjectModel, ...] = ()


@dataclass(frozen=True)
class WorldState:
    agents: tuple[AgentState, ...]
    objects: tuple[ObjectState, ...] = ()
    grasps: tuple[GraspCoupling, ...] = ()
    time: float = 0.0

    def grasp_of(self, agent: int) -> GraspCoupling | None:
        for g in self.grasps:
            if g.agent == agent:
                return g
        return None

    def holder_of(self, obj: int) -> int | None:
        for g in self.grasps:
            if g.obj == obj:
                return g.agent
        return None


def euler_rate_matrix(euler) -> np.ndarray:
    """Columns map Z-Y-X Euler rates to world angular velocity."""
    yaw, pitch, _ = euler
    cz, sz = np.cos(yaw), np.sin(yaw)
    cy, sy = np.cos(pitch), np.sin(pitch)
    return np.array([[0.0, -sz, cz * cy], [0.0, cz, sz * cy], [1.0, 0.0, -sy]])


def rk4(f, x, dt):
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def object_rhs(model: ObjectModel, x, wrench):
    pos, eul, v = x[:3], x[3:6], x[6:]
    R = Pose(pos, eul).rotation
    M = model.mass_matrix(R)
    C = model.coriolis_matrix(R, v[3:])
    vdot = np.linalg.solve(M, wrench - C @ v - model.gravity_vector())
    eul_dot = np.linalg.solve(euler_rate_matrix(eul), v[3:])
    return np.concatenate([v[:3], eul_dot, vdot])


def step(world: World, state: WorldState, torques, dt: float) -> WorldState:
    """One classical RK4 step with joint torques held over the step.

    Grasped objects are not integrated: their pose and twist are recomputed
    from the carrier's forward kinematics after the step.
    """
    if not dt > 0:
        raise InvalidInputError("dt must be positive")
    torques = [np.asarray(t, dtype=float) for t in torques]
    if len(torques) != len(state.agents) or not all(np.all(np.isfinite(t)) for t in torques):
        raise InvalidInputError("one finite torque vector per agent is required")

    new_agents = []
    for i, (model, ast) in enumerate(zip(world.agents, state.agents)):
        coupling = state.grasp_of(i)
        obj = world.objects[coupling.obj] if coupling is not None else None
        tau = torques[i]
        n = model.n

        def f(x, model=model, coupling=coupling, obj=obj, tau=tau, n=n):
            q, qd = x[:n], x[n:]
            if coupling is None:
                B, N, g = agent_terms(model, q, qd)
            else:
                B, N, g = coupled_terms(model, q, qd, obj, coupling)
            return np.concatenate([qd, joint_accel(B, N, g, qd, tau)])

        x = rk4(f, np.concatenate([ast.q, ast.qd]), dt)
        new_agents.append(AgentState(x[:n], x[n:]))

    new_objects = []
    for j, (model, ost) in enumerate(zip(world.objects, state.objects)):
        holder = state.holder_of(j)
        if holder is not None:
            coupling = state.grasp_of(holder)
            am, ast = world.agents[holder], new_agents[holder]
            pose = coupling.object_pose(am, ast.q)
            G = grasp_matrix(coupling, am, ast.q)
            twist = G.T @ am.jacobian(ast.q) @ ast.qd
            new_objects.append(replace(ost, pose=pose, twist=twist))
            continue
        wrench = model.gravity_vector() if ost.supported else np.zeros(6)
        x0 = np.concatenate([ost.pose.position, ost.pose.orientation, ost.twist])
        x = rk4(lambda x, model=model, w=wrench: object_rhs(model, x, w), x0, dt)
        new_objects.append(replace(ost, pose=Pose(x[:3], x[3:6]), twist=x[6:]))

    out = WorldState(tuple(new_agents), tuple(new_objects), state.grasps, state.time + dt)
    check_finite(out)
    return out


def check_finite(state: WorldState) -> None:
    for i, a in enumerate(state.agents):
        if not (np.all(np.isfinite(a.q)) and np.all(np.isfinite(a.qd))):
            raise NumericalBlowupError(f"agent {i} state became non-finite at t={state.time:.6g}", state)
    for j, o in enumerate(state.objects):
        if not (np.all(np.isfinite(o.pose.as_vector())) and np.all(np.isfinite(o.twist))):
            raise NumericalBlowupError(f"object {j} state became non-finite at t={state.time:.6g}", state)
