import random
import time

import pytest

from ltl_transport.abstraction import LabelingMap, TransitionSystem
from ltl_transport.ltl import (TRUE, Always, And, Atom, Eventually, Implies, LTLSyntaxError, Next, Not, Or,
                               Plan, Until, accepts_lasso, conjunction, depth, eval_on_lasso,
                               find_accepting_lasso, nnf, parse, product, project_plan, synthesize, to_buchi)
from ltl_transport.abstraction import successors
import oracles as orc
from test_abstraction import STATES8, LABELS

a, b, c = Atom("a"), Atom("b"), Atom("c")
PHI_1 = "[]<>(red && <>blue)"
PHI_2 = "[]<>(green && <>yellow)"
PHI_O = '[]<>("Goal1" && <>"Goal2")'
CORPUS = [PHI_1, PHI_2, PHI_O, "<>a", "[]a", "a U b", "X a", "<>[]a", "[]<>a", "[](a -> X b) && <>a",
          "!(a U b) || X X !a", "<>[]a && []<>b", "(a U b) U a", "true", "false"]


# -- parsing ------------------------------------------------------------------

@pytest.mark.parametrize("text, expected", [
    (PHI_1, Always(Eventually(And(Atom("red"), Eventually(Atom("blue")))))),
    ("true", TRUE),
    ("a U b U c", Until(a, Until(b, c))),
    ("!a && b", And(Not(a), b)),
    ("a && b || c", Or(And(a, b), c)),
    ("a || b && c", Or(a, And(b, c))),
    ("a -> b -> c", Implies(a, Implies(b, c))),
    ("a || b -> c", Implies(Or(a, b), c)),
    ("X a U b", Until(Next(a), b)),
    ("a U b && c", And(Until(a, b), c)),
    ("[]<>a", Always(Eventually(a))),
    ("□◇(a ∧ ¬b) → ○c", Implies(Always(Eventually(And(a, Not(b)))), Next(c))),
    ('"Goal1" U Goal2', Until(Atom("Goal1"), Atom("Goal2"))),
    ("((a))", a),
])
def test_parse(text, expected):
    assert parse(text) == expected


@pytest.mark.parametrize("text, pos", [("a &&", 4), ("(a", 2), ("a b", 2), ("", 0), ("a $ b", 2), ("U a", 0)])
def test_syntax_errors_carry_position(text, pos):
    with pytest.raises(LTLSyntaxError) as err:
        parse(text)
    assert err.value.pos == pos


def test_printing_round_trips():
    rng = random.Random(3)
    for _ in range(200):
        f = orc.random_formula(rng, ["a", "b", "c"], 4)
        g = parse(str(f))
        if "Release(" in repr(f):
            # release prints through its until dual
            for pre, cyc in _random_lassos(rng, ["a", "b", "c"], 20):
                assert eval_on_lasso(f, pre, cyc) == eval_on_lasso(g, pre, cyc)
        else:
            assert g == f


def test_formula_helpers():
    f = parse("!(a U b) && <>c")
    assert depth(f) == 3
    assert conjunction([]) == TRUE
    g = nnf(f)
    for w in ([], [{"a"}], [{"b"}, {"c"}]):
        for cyc in ([{"a"}], [set(), {"c"}]):
            assert eval_on_lasso(f, w, cyc) == eval_on_lasso(g, w, cyc)


# -- semantics and automata ---------------------------------------------------------

def test_direct_semantics_examples():
    assert eval_on_lasso(parse("[]a"), [], [{"a"}])
    assert not eval_on_lasso(parse("<>b"), [{"a"}], [{"a"}, set()])
    assert eval_on_lasso(parse("X a"), [set(), {"a"}], [set()])
    with pytest.raises(ValueError):
        eval_on_lasso(a, [{"a"}], [])


def _random_lassos(rng, atoms, count):
    letters = orc.all_letters(atoms)
    for _ in range(count):
        yield ([rng.choice(letters) for _ in range(rng.randint(0, 4))],
               [rng.choice(letters) for _ in range(rng.randint(1, 4))])


def test_semantics_agree_with_unrolled_oracle():
    rng = random.Random(11)
    for _ in range(300):
        f = orc.random_formula(rng, ["a", "b"], 3)
        for pre, cyc in _random_lassos(rng, ["a", "b"], 10):
            assert eval_on_lasso(f, pre, cyc) == orc.ltl_holds(f, pre, cyc)


def test_true_automaton_is_one_accepting_self_loop():
    ba = to_buchi(TRUE)
    assert len(ba.states) == 1 and ba.initial == ba.states
    q = ba.states[0]
    assert q in ba.accepting and ba.successors[q] == [q]
    assert ba.enabled(q, frozenset()) and ba.enabled(q, frozenset({"x"}))


@pytest.mark.parametrize("text", CORPUS)
def test_automaton_matches_semantics_on_random_lassos(text):
    f = parse(text)
    ba = to_buchi(f)
    atoms = sorted(ba.atoms) or ["a"]
    rng = random.Random(text)
    bad = sum(accepts_lasso(ba, p, c) != eval_on_lasso(f, p, c) for p, c in _random_lassos(rng, atoms, 200))
    assert bad == 0


def test_random_formulas_automaton_equivalence():
    rng = random.Random(5)
    for _ in range(60):
        f = orc.random_formula(rng, ["a", "b"], 3)
        ba = to_buchi(f)
        for p, c in _random_lassos(rng, ["a", "b"], 30):
            assert accepts_lasso(ba, p, c) == orc.ltl_holds(f, p, c), str(f)


def test_automaton_text_dump():
    text = to_buchi(parse("<>a")).to_text()
    assert text.startswith("initial ") and "accepting" in text


# -- product and planning ---------------------------------------------------------------

class OneState:
    initial = 0
    states = [0]

    def __init__(self, lab):
        self.lab = frozenset(lab)

    def post(self, s):
        return [0]

    def label(self, s):
        return self.lab


def test_single_state_products():
    ts = OneState({"a"})
    assert find_accepting_lasso(product(ts, to_buchi(parse("[]a")))) == Plan((), (0,))
    assert find_accepting_lasso(product(ts, to_buchi(parse("[]!a")))) is None


def test_contradictory_spec_has_no_plan():
    ts = TransitionSystem([1, 2], 2, 1, STATES8[1], LABELS)
    assert synthesize(ts, parse("[]red && []blue")) is None
    assert synthesize(ts, parse("false")) is None


def test_scenario_plan_satisfies_every_formula():
    t = time.perf_counter()
    ts = TransitionSystem([1, 2], 2, 1, STATES8[1], LABELS)
    f1, f2, fo = parse(PHI_1), parse(PHI_2), parse(PHI_O)
    plan = synthesize(ts, conjunction([f1, f2, fo]))
    assert time.perf_counter() - t < 5.0
    assert plan is not None and plan.is_run_of(ts)
    assert eval_on_lasso(conjunction([f1, f2, fo]), *plan.word(ts))
    proj = project_plan(plan)
    assert eval_on_lasso(f1, *proj.agent_word(0, LABELS))
    assert eval_on_lasso(f2, *proj.agent_word(1, LABELS))
    assert eval_on_lasso(fo, *proj.object_word(0, LABELS))
    assert synthesize(ts, conjunction([f1, f2, fo])) == plan  # deterministic


def test_longer_known_lasso_is_a_witness():
    ts = TransitionSystem([1, 2], 2, 1, STATES8[1], LABELS)
    plan = Plan((STATES8[1], STATES8[2]), tuple(STATES8[k] for k in (7, 8, 4, 3, 6, 5, 1, 2)))
    assert plan.is_run_of(ts)
    f = conjunction([parse(PHI_1), parse(PHI_2), parse(PHI_O)])
    assert eval_on_lasso(f, *plan.word(ts))
    assert accepts_lasso(to_buchi(f), *plan.word(ts))
    tags = project_plan(plan).agents
    assert tags[0].actions[0][0] == ("grasp", 0) and tags[1].actions[0][0] == ("idle",)
    assert tags[0].actions[0][1] == ("transport", 0, 1, 2) and tags[1].actions[0][1] == ("transit", 2, 1)


def test_projection_replays_through_successors():
    ts = TransitionSystem([1, 2], 2, 1, STATES8[1], LABELS)
    plan = synthesize(ts, conjunction([parse(PHI_1), parse(PHI_2), parse(PHI_O)]))
    proj = project_plan(plan)
    seq = list(plan.prefix) + list(plan.cycle) + [plan.cycle[0]]
    p = len(plan.prefix)
    for k, (src, dst) in enumerate(zip(seq, seq[1:])):
        part = 0 if k < p else 1
        idx = k if k < p else k - p
        acts = [agent.actions[part][idx] for agent in proj.agents]
        matches = [t for t, asg in successors(src, ts.regions)
                   if [asg.tag(i) for i in range(2)] == [x[0] for x in acts]
                   and all(x[0] != "transit" or t.agents[i] == x[2] for i, x in enumerate(acts))
                   and all(x[0] != "transport" or t.agents[i] == x[3] for i, x in enumerate(acts))]
        assert matches == [dst]


def test_all_idle_cycle_projects_to_idle():
    plan = Plan((), (STATES8[1],))
    for agent in project_plan(plan).agents:
        assert agent.actions[1] == (("idle",),)


def _emptiness_case(rng):
    ts = orc.RandomTS(rng, ["a", "b"], rng.randint(1, 8))
    f = orc.random_formula(rng, ["a", "b"], 3)
    plan = find_accepting_lasso(product(ts, to_buchi(f)))
    bound = 10 if plan is None else max(10, len(plan.prefix) + len(plan.cycle))
    brute = orc.brute_force_nonempty(ts.states, ts.post, ts.label, ts.initial, f, bound)
    return ts, f, plan, brute


def test_emptiness_verdict_matches_lasso_enumeration():
    rng = random.Random(2024)
    for _ in range(50):
        ts, f, plan, brute = _emptiness_case(rng)
        assert (plan is not None) == brute, str(f)
        if plan is not None:
            assert eval_on_lasso(f, *plan.word(ts))
