"""Linear temporal logic: parsing, semantics, Büchi automata and plan synthesis."""

from .buchi import BuchiAutomaton, Guard, accepts_lasso, to_buchi
from .formula import (FALSE, TRUE, Always, And, Atom, Eventually, FalseF, Formula, Implies, Next, Not, Or,
                      Release, TrueF, Until, atoms, conjunction, depth, nnf, subformulas)
from .parser import LTLSyntaxError, parse
from .planning import (AgentProjection, Plan, PlanProjection, ProductGraph, describe_action,
                       find_accepting_lasso, nested_dfs, product, project_plan, synthesize)
from .semantics import eval_on_lasso, evaluate_positions

__all__ = [
    "AgentProjection", "Always", "And", "Atom", "BuchiAutomaton", "Eventually", "FALSE", "FalseF", "Formula",
    "Guard", "Implies", "LTLSyntaxError", "Next", "Not", "Or", "Plan", "PlanProjection", "ProductGraph",
    "Release", "TRUE", "TrueF", "Until", "accepts_lasso", "atoms", "conjunction", "depth", "describe_action",
    "eval_on_lasso", "evaluate_positions", "find_accepting_lasso", "nested_dfs", "nnf", "parse", "product",
    "project_plan", "subformulas", "synthesize", "to_buchi",
]
