import itertools
import time

import pytest
from hypothesis import given, strategies as st

from ltl_transport.abstraction import (FREE, InfeasibleScenarioError, LabelingMap, PlanInconsistencyError,
                                       SystemState, TransitionSystem, derive_assignment, enumerate_states,
                                       label, state_counts, successors)

LABELS = LabelingMap(agents=({1: {"red"}, 2: {"blue"}}, {1: {"green"}, 2: {"yellow"}}),
                     objects=({1: {"Goal1"}, 2: {"Goal2"}},))


def S(a1, a2, o, g1, g2):
    """Two-region state; grasp flag 1 means 'holds object 1'."""
    return SystemState((a1, a2), (o,), (0 if g1 else FREE, 0 if g2 else FREE))


STATES8 = {1: S(1, 2, 1, 0, 0), 2: S(1, 2, 1, 1, 0), 3: S(1, 2, 2, 0, 1), 4: S(1, 2, 2, 0, 0),
           5: S(2, 1, 1, 0, 0), 6: S(2, 1, 1, 0, 1), 7: S(2, 1, 2, 1, 0), 8: S(2, 1, 2, 0, 0)}
EDGES8 = {(1, 2), (1, 5), (2, 7), (3, 4), (3, 6), (4, 8), (5, 6), (7, 8)}


def brute_valid(a, o, w):
    if len(set(a)) < len(a) or len(set(o)) < len(o):
        return False
    held = [x for x in w if x != FREE]
    if len(held) != len(set(held)):
        return False
    return all(x == FREE or a[i] == o[x] for i, x in enumerate(w))


def test_state_counts_of_the_two_region_example():
    t = time.perf_counter()
    c = state_counts(2, 2, 1)
    states = enumerate_states(2, 2, 1)
    assert time.perf_counter() - t < 1.0
    assert (c.raw_bound, c.distinct, c.valid) == (32, 16, 8)
    assert len(states) == 8
    assert set(states) == set(STATES8.values())


def test_trivial_and_infeasible_sizes():
    assert enumerate_states(1, 1, 0) == [SystemState((1,), (), (FREE,))]
    with pytest.raises(InfeasibleScenarioError):
        enumerate_states(2, 3, 0)
    with pytest.raises(InfeasibleScenarioError):
        enumerate_states(1, 1, 2)


@pytest.mark.parametrize("K,N,M", [(K, N, M) for K in range(1, 5) for N in range(1, 4) for M in range(0, 3)
                                   if K >= N and K >= M])
def test_state_space_bound_against_brute_force(K, N, M):
    ks = range(1, K + 1)
    brute = {SystemState(a, o, w)
             for a in itertools.product(ks, repeat=N)
             for o in itertools.product(ks, repeat=M)
             for w in itertools.product([FREE, *range(M)], repeat=N)
             if brute_valid(a, o, w)}
    states = enumerate_states(K, N, M)
    assert set(states) == brute and len(states) == len(brute)
    assert len(states) <= K ** (N + M) * (M + 1) ** N
    assert state_counts(K, N, M).valid == len(brute)


def test_transition_system_edges_of_the_two_region_example():
    ts = TransitionSystem([1, 2], 2, 1, STATES8[1], LABELS)
    index = {s: k for k, s in STATES8.items()}
    edges = {(index[s], index[t]) for s in ts.states for t in ts.post(s) if s != t}
    assert edges == EDGES8 | {(b, a) for a, b in EDGES8}
    assert all(s in ts.post(s) for s in ts.states)


def test_swap_needs_a_simultaneous_move():
    nxt = dict(successors(STATES8[2], [1, 2]))
    assert STATES8[7] in nxt
    a = nxt[STATES8[7]]
    assert a.transport == ((0, 0, 2),) and a.transit == ((1, 1),)
    single = [t for t, _ in successors(STATES8[2], [1, 2], max_concurrent=1)]
    assert STATES8[7] not in single


def test_labels():
    assert label(STATES8[1], LABELS) == {"red", "yellow", "Goal1"}
    assert label(STATES8[4], LABELS) == {"red", "yellow", "Goal2"}
    assert label(STATES8[1], LabelingMap()) == frozenset()
    with pytest.raises(ValueError):
        LabelingMap(agents=({1: {"p"}}, {2: {"p"}}))


def test_derive_assignment_cases():
    assert derive_assignment(STATES8[3], STATES8[3]).is_empty
    a = derive_assignment(STATES8[8], STATES8[4])
    assert a.transit == ((0, 1), (1, 2)) and not a.transport
    r = derive_assignment(STATES8[3], STATES8[4])
    assert r.release == ((1, 0),) and r.idle == (0,)
    g = derive_assignment(STATES8[1], STATES8[2])
    assert g.grasp == ((0, 0),) and g.idle == (1,)
    with pytest.raises(PlanInconsistencyError):
        derive_assignment(STATES8[1], STATES8[7])  # the object cannot move on its own
    with pytest.raises(PlanInconsistencyError):
        derive_assignment(STATES8[2], STATES8[6])  # hand-over between agents in different regions


states_st = st.sampled_from(enumerate_states(3, 2, 2))


@given(states_st)
def test_successors_are_closed_and_consistent(s):
    for t, a in successors(s, 3):
        assert t.is_valid()
        assert len(a.transport) + len(a.grasp) + len(a.release) <= len(s.objects)
        assert derive_assignment(s, t) == a
        if not a.grasp and not a.release:
            back = [u for u, _ in successors(t, 3)]
            assert s in back


def test_to_text_lists_every_edge():
    ts = TransitionSystem([1, 2], 2, 1, STATES8[1], LABELS)
    lines = ts.to_text().strip().splitlines()
    assert len(lines) == sum(len(ts.edges[s]) for s in ts.states)
    assert "(a=[1, 2], o=[1], g=[1,0]) -> (a=[2, 1], o=[2], g=[1,0]) | transit=[(1, 1)] transport=[(0, 0, 2)]" in lines
    with pytest.raises(InfeasibleScenarioError):
        TransitionSystem([1, 2], 2, 1, S(1, 1, 1, 0, 0), LABELS)
