import csv
import io

import numpy as np
import pytest

from ltl_transport.abstraction import FREE, LabelingMap, PlanInconsistencyError, SystemState
from ltl_transport.dynamics import AgentModel, AgentState, GraspCoupling, ObjectModel, ObjectState, World, WorldState
from ltl_transport.executor import (BehaviorLog, ExecutorSettings, TrajectoryWriter, derive_assignment,
                                    plan_sequence, recover_state, run_round)
from ltl_transport.geometry import Pose, Region, Workspace, in_region
from ltl_transport.ltl import Plan
from ltl_transport.navfield import ActionAssignment, NavConfig

AGENT = AgentModel()
WS = Workspace((0, 0, 0), 10, (Region(1, (-2.5, 0, 0.2), 1), Region(2, (2.5, 0, 0.2), 1)))
NAV = NavConfig(drive_force=300.0)


def lone_agent(q=(-2.7, 0.0, 1.0)):
    return World((AGENT,)), WorldState((AgentState(np.array(q), np.zeros(3)),))


def test_empty_assignment_returns_immediately():
    world, state = lone_agent()
    res = run_round(world, WS, state, ActionAssignment(idle=(0,)))
    assert res.success and res.state is state and res.t_final == state.time


def test_single_agent_transit_reaches_the_target():
    world, state = lone_agent()
    rows = []
    res = run_round(world, WS, state, ActionAssignment(transit=((0, 2),)), NAV,
                    ExecutorSettings(log_every=50), recorder=lambda *r: rows.append(r))
    assert res.success, res.summary()
    q = res.state.agents[0].q
    assert in_region(AGENT, q, WS.region(2), 0.01)
    assert np.linalg.norm(res.state.agents[0].qd) < NAV.rate_tolerance
    assert res.min_clearance > 0 and res.max_phi < 1
    assert res.max_dV <= 1e-6
    assert recover_state(world, WS, res.state) == SystemState((2,), (), (FREE,))
    times = [r[1].time for r in rows]
    assert all(t1 > t0 for t0, t1 in zip(times, times[1:]))
    assert all(r[2] < 1 for r in rows)


def test_grasp_then_release_are_timed_events():
    om = ObjectModel()
    world = World((AGENT,), (om,))
    state = WorldState((AgentState(np.array([-2.95, 0.0, -1.0]), np.zeros(3)),),
                       (ObjectState(Pose([-2.5, 0.0, 0.5])),))
    settings = ExecutorSettings()
    res = run_round(world, WS, state, ActionAssignment(grasp=((0, 0),)), NAV, settings)
    assert res.success, res.summary()
    assert len(res.state.grasps) == 1 and res.t_final >= settings.grasp_dwell
    assert recover_state(world, WS, res.state) == SystemState((1,), (1,), (0,))
    rel = run_round(world, WS, res.state, ActionAssignment(release=((0, 0),)), NAV, settings)
    assert rel.success and not rel.state.grasps
    assert rel.t_final - res.t_final == pytest.approx(settings.grasp_dwell, abs=2 * settings.dt)


def test_preconditions_are_checked():
    world, state = lone_agent()
    with pytest.raises(PlanInconsistencyError):
        run_round(world, WS, state, ActionAssignment(transport=((0, 0, 2),)), NAV)
    stray = WorldState((AgentState(np.array([0.0, 0.0, 1.0]), np.zeros(3)),))
    with pytest.raises(PlanInconsistencyError):
        recover_state(world, WS, stray)


def test_derive_assignment_identity_is_idle():
    s = SystemState((1, 2), (1,), (FREE, FREE))
    assert derive_assignment(s, s).is_empty


def test_plan_sequence_prefix_and_repetitions():
    s = [SystemState((k,), (), (FREE,)) for k in (1, 2, 3)]
    plan = Plan((s[0],), (s[1], s[2]))
    assert plan_sequence(plan, 0) == [s[0]]
    assert plan_sequence(plan, 1) == [s[0], s[1], s[2], s[1]]
    assert plan_sequence(plan, 2) == [s[0], s[1], s[2], s[1], s[2], s[1]]


def test_behavior_log_services_come_from_the_occupied_region():
    labels = LabelingMap(agents=({1: {"red"}, 2: {"blue"}},))
    log = BehaviorLog()
    world, state = lone_agent()
    log.record(state, SystemState((1,), (), (FREE,)), labels)
    later = WorldState(state.agents, time=3.0)
    log.record(later, SystemState((2,), (), (FREE,)), labels)
    log.record(later, SystemState((2,), (), (FREE,)), labels)
    assert log.times == [0.0, 3.0]
    assert [e[2] for e in log.agents[0]] == [{"red"}, {"blue"}]
    assert log.words(labels) == [{"red"}, {"blue"}, {"blue"}]


def test_trajectory_rows_use_seventeen_digits():
    buf = io.StringIO()
    g = GraspCoupling(0, 0, np.array([0.0, 0.0, 0.1]))
    q = np.array([0.1, 1 / 3, 0.2])
    state = WorldState((AgentState(q, np.zeros(3)),), (ObjectState(g.object_pose(AGENT, q)),), (g,), time=0.1)
    w = TrajectoryWriter(buf)
    w(0, state, 0.25, 1.0, 0.5)
    rows = list(csv.reader(io.StringIO(buf.getvalue())))
    assert rows[0] == TrajectoryWriter.header
    assert rows[1][2:4] == ["agent", "0"] and rows[2][2:4] == ["object", "0"]
    assert float(rows[1][5]) == 1 / 3 and rows[1][5] == format(1 / 3, ".17g")
