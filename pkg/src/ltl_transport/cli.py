"""Command line: ``ltl-transport validate|plan|simulate|render``.

Exit codes: 0 success, 2 unsatisfiable specification, 3 invalid input
(scenario, plan or missing file), 4 a round failed during simulation.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .abstraction import FREE, PlanInconsistencyError, SystemState
from .dynamics import NumericalBlowupError
from .executor import BehaviorLog, RoundFailure, TrajectoryWriter, execute, plan_sequence
from .ltl import Plan, describe_action, eval_on_lasso, project_plan, synthesize
from .scenario import Scenario, ScenarioError, load_scenario, validate_scenario

EXIT_OK, EXIT_UNSAT, EXIT_INVALID, EXIT_ROUND = 0, 2, 3, 4


class InputError(Exception):
    """Bad or missing input file; maps to the invalid-input exit code."""


# -- plan files ---------------------------------------------------------------

def _state_dict(s: SystemState) -> dict:
    return {"agents": list(s.agents), "objects": list(s.objects),
            "grasp": [None if w == FREE else w for w in s.grasp]}


def _state_from(d) -> SystemState:
    try:
        return SystemState(tuple(d["agents"]), tuple(d["objects"]),
                           tuple(FREE if w is None else int(w) for w in d["grasp"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed plan state {d!r}") from exc


def plan_to_dict(plan: Plan, scenario: Scenario | None = None) -> dict:
    proj = project_plan(plan)
    out = {
        "prefix": [_state_dict(s) for s in plan.prefix],
        "cycle": [_state_dict(s) for s in plan.cycle],
        "agents": [
            {"regions": {"prefix": list(a.regions[0]), "cycle": list(a.regions[1])},
             "actions": {"prefix": [describe_action(t) for t in a.actions[0]],
                         "cycle": [describe_action(t) for t in a.actions[1]]}}
            for a in proj.agents
        ],
        "objects": [{"regions": {"prefix": list(p), "cycle": list(c)}} for p, c in proj.objects],
    }
    if scenario is not None:
        out = {"scenario": scenario.name, "formula": str(scenario.formula), **out}
    return out


def plan_from_dict(data) -> Plan:
    if not isinstance(data, dict) or "cycle" not in data:
        raise InputError("plan file needs a 'cycle' list")
    try:
        return Plan(tuple(_state_from(s) for s in data.get("prefix", [])),
                    tuple(_state_from(s) for s in data["cycle"]))
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def write_plan(plan: Plan, path, scenario: Scenario | None = None):
    Path(path).write_text(json.dumps(plan_to_dict(plan, scenario), indent=2) + "\n")


def read_plan(path) -> Plan:
    p = Path(path)
    if not p.exists():
        raise InputError(f"plan file not found: {path}")
    try:
        return plan_from_dict(json.loads(p.read_text()))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: not valid JSON: {exc}") from exc


def check_plan(plan: Plan, scenario: Scenario):
    """Raise :class:`InputError` unless ``plan`` is a run of the scenario's system satisfying its formula."""
    ts = scenario.transition_system()
    if plan.initial != ts.initial:
        raise InputError(f"plan starts in {plan.initial}, scenario starts in {ts.initial}")
    if not plan.is_run_of(ts):
        raise InputError("plan contains a step the transition system does not allow")
    prefix, cycle = plan.word(ts)
    if not eval_on_lasso(scenario.formula, prefix, cycle):
        raise InputError("plan does not satisfy the scenario formula")


def logged_lasso(log: BehaviorLog, scenario: Scenario, plan: Plan, rounds: int):
    """Label word observed at round boundaries, folded back into prefix and cycle."""
    words = log.words(scenario.labeling)
    p = len(plan.prefix)
    if rounds <= 0:
        return words[:p] or words[:1], words[p:p + 1] or words[-1:]
    return words[:p], words[p:p + len(plan.cycle)]


# -- rendering ------------------------------------------------------------------

def read_trajectory(path) -> dict:
    """``{(entity, id): array of (t, c0, c1)}`` from a trajectory CSV."""
    p = Path(path)
    if not p.exists():
        raise InputError(f"trajectory file not found: {path}")
    tracks: dict = {}
    with p.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"t", "entity", "id", "c0", "c1"} - set(reader.fieldnames or [])
        if missing:
            raise InputError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            key = (row["entity"], int(row["id"]))
            tracks.setdefault(key, []).append((float(row["t"]), float(row["c0"]), float(row["c1"])))
    return {k: np.array(v) for k, v in sorted(tracks.items())}


_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"]


def render_svg(scenario: Scenario, tracks: dict, size: int = 600) -> str:
    ws = scenario.workspace
    r0 = ws.radius
    scale = (size / 2 - 10) / r0

    def xy(x, y):
        return (size / 2 + (x - ws.center[0]) * scale, size / 2 - (y - ws.center[1]) * scale)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">',
           f'<circle class="workspace" cx="{size / 2:.2f}" cy="{size / 2:.2f}" r="{r0 * scale:.2f}" '
           f'fill="none" stroke="black" stroke-width="1.5"/>']
    for reg in ws.regions:
        cx, cy = xy(*reg.center[:2])
        out.append(f'<circle class="region" cx="{cx:.2f}" cy="{cy:.2f}" r="{reg.radius * scale:.2f}" '
                   f'fill="#eeeeee" stroke="gray"/>')
        out.append(f'<text x="{cx:.2f}" y="{cy:.2f}" font-size="12" text-anchor="middle">&#960;{reg.id}</text>')
    for n, ((kind, idx), arr) in enumerate(tracks.items()):
        color = _COLORS[n % len(_COLORS)]
        pts = " ".join("{:.2f},{:.2f}".format(*xy(x, y)) for _, x, y in arr)
        dash = ' stroke-dasharray="4 3"' if kind == "object" else ""
        out.append(f'<polyline class="trajectory {kind}" data-id="{idx}" points="{pts}" fill="none" '
                   f'stroke="{color}" stroke-width="1.5"{dash}/>')
        (sx, sy), (ex, ey) = xy(*arr[0, 1:]), xy(*arr[-1, 1:])
        out.append(f'<circle class="start" cx="{sx:.2f}" cy="{sy:.2f}" r="4" fill="none" stroke="{color}"/>')
        out.append(f'<rect class="end" x="{ex - 4:.2f}" y="{ey - 4:.2f}" width="8" height="8" fill="{color}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# -- commands -------------------------------------------------------------------

def _load(args) -> Scenario:
    if not args.scenario:
        raise InputError("--scenario is required")
    try:
        sc = load_scenario(args.scenario)
    except FileNotFoundError as exc:
        raise InputError(str(exc)) from exc
    if getattr(args, "dt", None) is not None:
        if not args.dt > 0:
            raise InputError("--dt must be positive")
        sc.settings = replace(sc.settings, dt=args.dt)
    return sc


def _validated(args) -> Scenario:
    sc = _load(args)
    rep = validate_scenario(sc)
    for w in rep.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if not rep.ok:
        raise ScenarioError(rep.errors)
    return sc


def cmd_validate(args) -> int:
    sc = _load(args)
    rep = validate_scenario(sc)
    print(f"scenario {sc.name}: {len(sc.world.agents)} agents, {len(sc.world.objects)} objects, "
          f"{len(sc.workspace.regions)} regions")
    print(rep)
    return EXIT_OK if rep.ok else EXIT_INVALID


def cmd_plan(args) -> int:
    sc = _validated(args)
    t0 = time.perf_counter()
    plan = synthesize(sc.transition_system(), sc.formula)
    if plan is None:
        print(f"unsatisfiable: no run of the transition system satisfies {sc.formula}", file=sys.stderr)
        return EXIT_UNSAT
    text = json.dumps(plan_to_dict(plan, sc), indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"plan with {len(plan.prefix)} prefix and {len(plan.cycle)} cycle states written to {args.out} "
              f"({time.perf_counter() - t0:.2f}s)")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_simulate(args) -> int:
    sc = _validated(args)
    if args.plan:
        plan = read_plan(args.plan)
        check_plan(plan, sc)
    else:
        plan = synthesize(sc.transition_system(), sc.formula)
        if plan is None:
            print(f"unsatisfiable: {sc.formula}", file=sys.stderr)
            return EXIT_UNSAT
    rounds = args.rounds
    out = Path(args.out or "trajectory.csv")
    report_path = out.with_suffix(".report.txt")
    lines = [f"scenario: {sc.name}", f"formula: {sc.formula}", f"seed: {args.seed}",
             f"dt: {sc.settings.dt:g} s", f"cycle repetitions: {rounds}",
             "plan: " + " ".join(str(s) for s in plan_sequence(plan, rounds))]
    status = EXIT_OK
    t0 = time.perf_counter()
    with out.open("w", newline="") as fh:
        writer = TrajectoryWriter(fh)
        try:
            log = execute(plan, sc.world, sc.workspace, sc.initial, sc.labeling, sc.nav, sc.settings,
                          rounds=rounds, recorder=writer, progress=lambda r: print(r.summary(), flush=True))
        except RoundFailure as exc:
            log = exc.log
            status = EXIT_ROUND
            lines.append(f"FAILED: {exc}")
        except (PlanInconsistencyError, NumericalBlowupError) as exc:
            log = None
            status = EXIT_ROUND
            lines.append(f"FAILED: {exc}")
    if log is not None:
        lines += [r.summary() for r in log.rounds]
        lines.append("boundary states: " + " ".join(str(s) for s in log.boundaries))
        for i in range(len(sc.world.agents)):
            lines.append(f"agent {i} services: " + " ".join(
                "{" + ",".join(sorted(sig)) + "}" for _, _, sig in log.agents.get(i, [])))
        for j in range(len(sc.world.objects)):
            lines.append(f"object {j} services: " + " ".join(
                "{" + ",".join(sorted(sig)) + "}" for _, _, sig in log.objects.get(j, [])))
        if status == EXIT_OK:
            pre, cyc = logged_lasso(log, sc, plan, rounds)
            ok = eval_on_lasso(sc.formula, pre, cyc)
            lines.append(f"logged word satisfies formula: {ok}")
    lines.append(f"result: {'success' if status == EXIT_OK else 'failure'} "
                 f"(wall {time.perf_counter() - t0:.1f}s)")
    report_path.write_text("\n".join(lines) + "\n")
    print(f"trajectory: {out}\nreport: {report_path}")
    print(lines[-1])
    return status


def cmd_render(args) -> int:
    sc = _load(args)
    if not args.trajectory:
        raise InputError("render needs a trajectory CSV")
    svg = render_svg(sc, read_trajectory(args.trajectory))
    out = Path(args.out or Path(args.trajectory).with_suffix(".svg"))
    out.write_text(svg)
    print(f"figure: {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ltl-transport",
                                     description="LTL-driven multi-agent object transportation.")
    parser.add_argument("command", choices=["validate", "plan", "simulate", "render"])
    parser.add_argument("trajectory", nargs="?", help="trajectory CSV (render only)")
    parser.add_argument("--scenario", help="scenario YAML file or bundled name (scenario1, scenario2)")
    parser.add_argument("--plan", help="plan JSON written by 'plan'")
    parser.add_argument("--rounds", type=int, default=1, help="cycle repetitions to simulate (default 1)")
    parser.add_argument("--dt", type=float, help="integration step in s (overrides the scenario)")
    parser.add_argument("--seed", type=int, default=0,
                        help="recorded in the report; the pipeline itself draws no random numbers")
    parser.add_argument("--out", help="output file (plan JSON, trajectory CSV or SVG)")
    return parser


COMMANDS = {"validate": cmd_validate, "plan": cmd_plan, "simulate": cmd_simulate, "render": cmd_render}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ScenarioError as exc:
        for p in exc.problems:
            print(f"error: {p}", file=sys.stderr)
        return EXIT_INVALID
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
