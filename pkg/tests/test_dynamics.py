import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from ltl_transport.dynamics import (AgentModel, AgentState, GraspCoupling, InvalidInputError,
                                    NumericalBlowupError, ObjectModel, ObjectState, World, WorldState,
                                    agent_terms, coupled_terms, grasp_matrix, step)
from ltl_transport.geometry import Pose, euler_to_matrix, skew
import oracles as orc

MODEL = AgentModel()
CHAIN = orc.Chain()
OBJ = ObjectModel(mass=0.8, inertia=np.diag([0.002, 0.003, 0.004]))

q_st = arrays(float, 3, elements=st.floats(-4, 4))
qd_st = arrays(float, 3, elements=st.floats(-3, 3))
offset_st = arrays(float, 3, elements=st.floats(-0.3, 0.3))
euler_st = arrays(float, 3, elements=st.floats(-1.2, 1.2))


def coupling(offset=(0.05, -0.02, 0.12), euler=(0.3, -0.2, 0.5)):
    return GraspCoupling(0, 0, np.asarray(offset), euler_to_matrix(euler))


def test_zero_rates_give_zero_coriolis_force():
    _, N, _ = agent_terms(MODEL, [1.0, 2.0, 0.7], np.zeros(3))
    np.testing.assert_array_equal(N @ np.zeros(3), 0.0)


@given(q_st)
def test_mass_matrix_matches_composed_link_inertias(q):
    np.testing.assert_allclose(MODEL.mass_matrix(q), CHAIN.mass_matrix(q), atol=1e-8)


@given(q_st)
def test_gravity_is_potential_gradient(q):
    g = MODEL.gravity_vector(q)
    ref = orc.fd_gradient(CHAIN.potential, q)
    assert np.linalg.norm(g - ref) <= 1e-6 * max(1.0, np.linalg.norm(ref))
    assert MODEL.potential_energy(q) == pytest.approx(CHAIN.potential(q), rel=1e-12)


@given(q_st, qd_st)
def test_coriolis_force_matches_lagrangian(q, qd):
    _, N, _ = agent_terms(MODEL, q, qd)
    ref = orc.coriolis_vector(MODEL.mass_matrix, q, qd)
    np.testing.assert_allclose(N @ qd, ref, atol=1e-7)


@given(q_st, qd_st)
def test_agent_skew_symmetry(q, qd):
    _, N, _ = agent_terms(MODEL, q, qd)
    S = orc.mass_dot(MODEL.mass_matrix, q, qd) - 2 * N
    np.testing.assert_allclose(S, -S.T, atol=1e-8)
    assert abs(qd @ S @ qd) < 1e-8


def test_jacobian_structure_and_finite_differences(rng):
    for _ in range(20):
        q, qd = rng.uniform(-3, 3, 3), rng.uniform(-2, 2, 3)
        J = MODEL.jacobian(q)
        np.testing.assert_array_equal(J[:, 0], [1, 0, 0, 0, 0, 0])
        np.testing.assert_array_equal(J[:, 1], [0, 1, 0, 0, 0, 0])
        ref = orc.fd_jacobian(CHAIN.ee, q) @ qd
        assert np.linalg.norm(J[:3] @ qd - ref) <= 1e-6 * max(1.0, np.linalg.norm(ref))
        # angular rate of a rotation about -y
        h = 1e-6
        Rd = (orc.link2_rot(q[2] + h * qd[2]) - orc.link2_rot(q[2] - h * qd[2])) / (2 * h)
        W = Rd @ orc.link2_rot(q[2]).T
        np.testing.assert_allclose(J[3:] @ qd, [W[2, 1], W[0, 2], W[1, 0]], atol=1e-8)


def test_position_jacobian_singular_when_arm_is_stretched_upright():
    Jp = MODEL.jacobian([0.4, -0.1, 0.0])[:3]
    assert abs(np.linalg.det(Jp.T @ Jp)) < 1e-14
    assert abs(np.linalg.det(MODEL.jacobian([0.4, -0.1, 0.8])[:3])) > 1e-3


def test_grasp_matrix_identity_and_lever_arm():
    q, qd = np.array([0.2, 0.1, 0.6]), np.array([0.3, -0.4, 1.1])
    G0 = grasp_matrix(GraspCoupling(0, 0, np.zeros(3)), MODEL, q)
    np.testing.assert_array_equal(G0, np.eye(6))
    c = GraspCoupling(0, 0, np.array([0.0, 0.0, 0.2]))
    G = grasp_matrix(c, MODEL, q)
    twist = MODEL.jacobian(q) @ qd
    v_obj = G.T @ twist
    r = c.lever_arm(MODEL, q)
    np.testing.assert_allclose(v_obj[:3], twist[:3] + np.cross(twist[3:], r), atol=1e-14)
    np.testing.assert_allclose(v_obj[3:], twist[3:])
    assert np.linalg.matrix_rank(G) == 6


@given(q_st, qd_st, offset_st, euler_st)
def test_object_twist_matches_pose_derivative(q, qd, offset, euler):
    c = coupling(offset, euler)
    v = grasp_matrix(c, MODEL, q).T @ MODEL.jacobian(q) @ qd
    h = 1e-6
    pos = lambda s: orc.Chain().ee(q + s * qd) + orc.link2_rot(q[2] + s * qd[2]) @ offset
    rot = lambda s: orc.link2_rot(q[2] + s * qd[2]) @ euler_to_matrix(euler)
    pd = (pos(h) - pos(-h)) / (2 * h)
    W = (rot(h) - rot(-h)) / (2 * h) @ rot(0).T
    ref = np.concatenate([pd, [W[2, 1], W[0, 2], W[1, 0]]])
    assert np.linalg.norm(v - ref) <= 1e-5 * max(1.0, np.linalg.norm(ref))


def test_massless_object_leaves_agent_terms_unchanged():
    q, qd = [0.5, 0.2, 1.0], [0.1, 0.2, 0.3]
    for a, b in zip(coupled_terms(MODEL, q, qd, ObjectModel(mass=0.0), coupling()), agent_terms(MODEL, q, qd)):
        np.testing.assert_array_equal(a, b)


@given(q_st, qd_st, offset_st, euler_st)
def test_coupled_terms_match_composed_body(q, qd, offset, euler):
    c = coupling(offset, euler)
    Bb, Nb, gb = coupled_terms(MODEL, q, qd, OBJ, c)
    Rrel = euler_to_matrix(euler)
    mass = lambda v: orc.carried_mass_matrix(CHAIN, v, offset, Rrel, OBJ.mass, OBJ.inertia)
    np.testing.assert_allclose(Bb, mass(q), atol=1e-8)
    np.testing.assert_allclose(Nb @ qd, orc.coriolis_vector(mass, q, qd), atol=1e-7)
    ref_g = orc.fd_gradient(lambda v: orc.carried_potential(CHAIN, v, offset, OBJ.mass), q)
    assert np.linalg.norm(gb - ref_g) <= 1e-6 * max(1.0, np.linalg.norm(ref_g))


@given(q_st, qd_st, offset_st, euler_st)
def test_coupled_skew_symmetry_and_added_inertia(q, qd, offset, euler):
    c = coupling(offset, euler)
    Bb, Nb, _ = coupled_terms(MODEL, q, qd, OBJ, c)
    Bdot = orc.mass_dot(lambda v: coupled_terms(MODEL, v, qd, OBJ, c)[0], q, qd)
    S = Bdot - 2 * Nb
    np.testing.assert_allclose(S, -S.T, atol=1e-8)
    assert abs(qd @ S @ qd) < 1e-8
    assert np.min(np.linalg.eigvalsh(Bb - MODEL.mass_matrix(q))) > -1e-12
    assert np.min(np.linalg.eigvalsh(Bb)) > 0


def test_mass_matrices_positive_definite_on_many_states(rng):
    c = coupling()
    for q in rng.uniform(-np.pi, np.pi, (10_000, 3)):
        assert np.linalg.eigvalsh(MODEL.mass_matrix(q))[0] > 0
    for q in rng.uniform(-np.pi, np.pi, (500, 3)):
        assert np.linalg.eigvalsh(coupled_terms(MODEL, q, np.zeros(3), OBJ, c)[0])[0] > 0


def test_object_model_rejects_bad_inertia():
    with pytest.raises(InvalidInputError):
        ObjectModel(mass=1.0, inertia=np.diag([1.0, -1.0, 1.0]))
    with pytest.raises(InvalidInputError):
        GraspCoupling(0, 0, np.zeros(3), np.diag([1.0, 1.0, -1.0]))


def _world(q=(0.0, 0.0, 0.5), grasped=False):
    ast = AgentState(np.array(q), np.zeros(3))
    if grasped:
        g = coupling()
        return (World((MODEL,), (OBJ,)),
                WorldState((ast,), (ObjectState(g.object_pose(MODEL, ast.q)),), (g,)))
    return World((MODEL,)), WorldState((ast,))


def test_gravity_compensation_holds_a_resting_agent():
    world, state = _world()
    tau = MODEL.gravity_vector(state.agents[0].q)
    out = step(world, state, [tau], 1e-3)
    np.testing.assert_allclose(out.agents[0].q, state.agents[0].q, atol=1e-15)
    np.testing.assert_allclose(out.agents[0].qd, 0.0, atol=1e-15)


def test_free_object_conserves_linear_momentum():
    om = ObjectModel(mass=0.7, inertia=np.diag([0.01, 0.02, 0.03]), gravity=0.0)
    state = WorldState((), (ObjectState(Pose([0.0, 0.0, 1.0], [0.1, 0.2, 0.3]),
                                        np.array([0.3, -0.2, 0.1, 0.5, -0.4, 0.8]), supported=False),))
    world = World((), (om,))
    p0 = om.mass * state.objects[0].twist[:3]
    for _ in range(1000):
        state = step(world, state, [], 1e-3)
    np.testing.assert_allclose(om.mass * state.objects[0].twist[:3], p0, atol=1e-10)
    np.testing.assert_allclose(state.objects[0].pose.position, [0.3, -0.2, 1.1], atol=1e-10)


def test_rk4_error_shrinks_sixteenfold_when_dt_halves():
    # link swinging below the hinge: a smooth, non-stiff trajectory
    world, state = _world(q=(0.0, 0.0, np.pi - 0.5))
    tau = [np.array([1.0, -0.5, 0.0])]

    def run(dt):
        s = state
        for _ in range(int(round(1.0 / dt))):
            s = step(world, s, tau, dt)
        return np.concatenate([s.agents[0].q, s.agents[0].qd])

    a, b, c = run(0.02), run(0.01), run(0.005)
    ratio = np.linalg.norm(a - b) / np.linalg.norm(b - c)
    assert 12 < ratio < 20


def test_grasped_object_stays_rigidly_attached():
    world, state = _world(grasped=True)
    g = state.grasps[0]
    for k in range(50):
        state = step(world, state, [np.array([2.0, -1.0, 0.3 * np.sin(k)])], 1e-2)
        R_ee = MODEL.ee_rotation(state.agents[0].q)
        pose = state.objects[0].pose
        np.testing.assert_allclose(R_ee.T @ (pose.position - MODEL.ee_position(state.agents[0].q)),
                                   g.position, atol=1e-12)
        np.testing.assert_allclose(R_ee.T @ pose.rotation, g.rotation, atol=1e-12)


def test_step_errors():
    world, state = _world()
    with pytest.raises(InvalidInputError):
        step(world, state, [np.zeros(3)], 0.0)
    with pytest.raises(InvalidInputError):
        step(world, state, [np.array([np.nan, 0, 0])], 1e-3)
    with pytest.raises(NumericalBlowupError) as err:
        with np.errstate(all="ignore"):
            step(world, state, [np.array([1e308, 1e308, 0.0])], 10.0)
    assert err.value.state is not None


def test_skew_matches_cross_product(rng):
    a, b = rng.normal(size=3), rng.normal(size=3)
    np.testing.assert_allclose(skew(a) @ b, np.cross(a, b))
