"""Orchestrator, build-fixer and test-fixer loops.

Every loop alternates one reasoning step with one tool call until the
goal is green, the reasoner emits ``Finish``, or the step budget runs out.
The orchestrator owns its own budget for workspace probes; each fixer
invocation gets a fresh budget of ``step_limit`` tool calls.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field

from isamig.agent.tools import (
    AgentContext,
    AppliedEdit,
    MALFORMED,
    MalformedCall,
    Step,
    Tool,
    ToolCall,
    Workspace,
    finish,
    output_passed,
    status_lines,
)
from isamig.fleet.model import Fleet

DEFAULT_STEP_LIMIT = 16
DEFAULT_MAX_ROUNDS = 4


class Outcome(str, enum.Enum):
    Fixed = "Fixed"
    GaveUp = "GaveUp"
    StepLimit = "StepLimit"


ORCH, BUILD_FIXER, TEST_FIXER = "orchestrator", "build_fixer", "test_fixer"


@dataclass(frozen=True)
class TraceEvent:
    loop: str
    invocation: int  # 0 for the orchestrator, 1.. per fixer invocation
    note: str
    tool: str
    args: dict
    output: tuple[str, ...]
    origin: str

    @property
    def is_tool_call(self) -> bool:
        return self.tool != Tool.Finish.value

    def to_dict(self) -> dict:
        return {"loop": self.loop, "invocation": self.invocation, "note": self.note, "tool": self.tool,
                "args": self.args, "output": list(self.output), "origin": self.origin}


@dataclass
class FixerRun:
    loop: str
    invocation: int
    goal: str
    outcome: Outcome
    context: AgentContext


@dataclass
class AgentTrace:
    goals: list[str]
    step_limit: int
    events: list[TraceEvent] = field(default_factory=list)
    fixers: list[FixerRun] = field(default_factory=list)
    edits: list[AppliedEdit] = field(default_factory=list)
    outcome: Outcome = Outcome.GaveUp

    @property
    def tool_calls(self) -> int:
        return sum(1 for e in self.events if e.is_tool_call)

    def to_dict(self) -> dict:
        return {"goals": self.goals, "step_limit": self.step_limit, "outcome": self.outcome.value,
                "events": [e.to_dict() for e in self.events]}


def _record(trace: AgentTrace | None, loop: str, inv: int, step: Step) -> None:
    if trace is not None:
        tool, args = (step.call.tool.value, dict(step.call.args)) if step.call else (MALFORMED, {})
        trace.events.append(TraceEvent(loop, inv, step.note, tool, args, step.output, step.origin))


def _goal_green(ws: Workspace, goal: str, mode: str, sanitizers: bool) -> bool:
    res = ws.build(goal) if mode == "build" else ws.test(goal, sanitizers)
    return res.passed


def _fix_loop(ws: Workspace, goal: str, mode: str, reasoner, step_limit: int, sanitizers: bool,
              trace: AgentTrace | None, invocation: int) -> tuple[Outcome, AgentContext]:
    loop = BUILD_FIXER if mode == "build" else TEST_FIXER
    ctx = AgentContext(goal, mode, step_limit, sanitizers)
    probe_tool = Tool.Build if mode == "build" else Tool.RunTest

    def is_goal_probe(call: ToolCall) -> bool:
        return call.tool is probe_tool and call.args.get("target") == goal

    while True:
        if ctx.steps_used >= step_limit:
            return Outcome.StepLimit, ctx
        if ctx.steps_used == 0:
            note, call, origin = f"{loop}: probe goal", ToolCall(probe_tool, {"target": goal}), "framework"
        else:
            try:
                note, call = reasoner.next_action(ctx.prefix(ctx.steps_used))
                origin = "reasoner"
            except MalformedCall as exc:
                step = Step(f"malformed tool call: {exc}", None, (f"error: malformed tool call: {exc}",), "reasoner")
                ctx.transcript.append(step)
                _record(trace, loop, invocation, step)
                continue
        if call.tool is Tool.Finish:
            claimed = call.args["status"] == "Success"
            verified = claimed and _goal_green(ws, goal, mode, sanitizers)
            _record(trace, loop, invocation, Step(note, call, ("verified",) if verified else (), origin))
            return (Outcome.Fixed if verified else Outcome.GaveUp), ctx
        output = ws.execute(call)
        step = Step(note, call, output, origin)
        ctx.transcript.append(step)
        _record(trace, loop, invocation, step)
        if is_goal_probe(call) and output_passed(output):
            _record(trace, loop, invocation, Step("goal is green", finish("Success"), ("verified",), "framework"))
            return Outcome.Fixed, ctx


def fix_build(fleet: Fleet, target: str, reasoner, step_limit: int = DEFAULT_STEP_LIMIT,
              trace: AgentTrace | None = None, invocation: int = 1, sanitizers: bool = True):
    """Build-fixer loop on one target.  Returns (fleet', outcome)."""
    ws = Workspace(fleet, sanitizers)
    outcome, _ = _fix_loop(ws, target, "build", reasoner, step_limit, sanitizers, trace, invocation)
    if trace is not None:
        trace.edits.extend(ws.edits)
    return ws.fleet, outcome


def fix_test(fleet: Fleet, test_target: str, reasoner, step_limit: int = DEFAULT_STEP_LIMIT,
             trace: AgentTrace | None = None, invocation: int = 1, sanitizers: bool = True):
    """Test-fixer loop on one test target.  Returns (fleet', outcome)."""
    ws = Workspace(fleet, sanitizers)
    outcome, _ = _fix_loop(ws, test_target, "test", reasoner, step_limit, sanitizers, trace, invocation)
    if trace is not None:
        trace.edits.extend(ws.edits)
    return ws.fleet, outcome


def verify_goals(fleet: Fleet, goals, sanitizers: bool = True) -> bool:
    """Fresh oracle calls: every goal builds on Arm and every test goal passes."""
    ws = Workspace(fleet, sanitizers)
    for g in sorted(goals):
        if not ws.build(g).passed:
            return False
    for g in sorted(goals):
        if _is_test(fleet, g) and not ws.test(g).passed:
            return False
    return True


def _is_test(fleet: Fleet, target: str) -> bool:
    return fleet.target(target)[2] == "test"


def orchestrate(fleet: Fleet, goals, reasoner, step_limit: int = DEFAULT_STEP_LIMIT,
                max_rounds: int = DEFAULT_MAX_ROUNDS, sanitizers: bool = True) -> tuple[Fleet, AgentTrace]:
    """Outer loop: fix builds before tests, failing goals in lexicographic order."""
    goals = sorted(set(goals))
    if not goals:
        raise ValueError("orchestrate needs at least one goal")
    trace = AgentTrace(goals, step_limit)
    ws = Workspace(fleet, sanitizers)
    probes = 0
    invocation = 0
    tests = [g for g in goals if _is_test(fleet, g)]

    def probe(tool: Tool, goal: str) -> bool | None:
        nonlocal probes
        if probes >= step_limit:
            return None
        call = ToolCall(tool, {"target": goal} if tool is Tool.Build else {"target": goal, "sanitizers": sanitizers})
        res = ws.build(goal) if tool is Tool.Build else ws.test(goal)
        probes += 1
        _record(trace, ORCH, 0, Step("orchestrator: check workspace", call, status_lines(res), "framework"))
        return res.passed

    for _ in range(max_rounds):
        failing = None
        for kind, tool, pool in (("build", Tool.Build, goals), ("test", Tool.RunTest, tests)):
            for g in pool:
                ok = probe(tool, g)
                if ok is None:
                    trace.outcome = Outcome.StepLimit
                    return ws.fleet, _close(trace, ws)
                if not ok:
                    failing = (kind, g)
                    break
            if failing:
                break
        if failing is None:
            if verify_goals(ws.fleet, goals, sanitizers):
                trace.outcome = Outcome.Fixed
                _record(trace, ORCH, 0, Step("all goals green", finish("Success"), ("verified",), "framework"))
            else:  # probes and fresh verification disagree; never report success
                trace.outcome = Outcome.GaveUp
                _record(trace, ORCH, 0, Step("verification failed", finish("GiveUp"), (), "framework"))
            return ws.fleet, _close(trace, ws)
        kind, g = failing
        invocation += 1
        loop = BUILD_FIXER if kind == "build" else TEST_FIXER
        inner = Workspace(ws.fleet, sanitizers)
        outcome, ctx = _fix_loop(inner, g, kind, reasoner, step_limit, sanitizers, trace, invocation)
        ws.fleet = inner.fleet
        ws.edits.extend(inner.edits)
        trace.fixers.append(FixerRun(loop, invocation, g, outcome, ctx))
        if outcome is Outcome.GaveUp:
            trace.outcome = Outcome.GaveUp
            _record(trace, ORCH, 0, Step(f"{loop} gave up on {g}", finish("GiveUp"), (), "framework"))
            return ws.fleet, _close(trace, ws)
    trace.outcome = Outcome.StepLimit
    return ws.fleet, _close(trace, ws)


def _close(trace: AgentTrace, ws: Workspace) -> AgentTrace:
    trace.edits = list(ws.edits)
    return trace


_GRAMMAR = re.compile(r"O+(?:(?:B|T)+O*)*")


def check_trace_grammar(trace: AgentTrace) -> list[str]:
    """Check ``Orchestrator(BuildFixer* | TestFixer*)*``.

    Returns a list of violations (empty when the trace is well formed):
    the trace opens with the orchestrator, each fixer invocation is one
    contiguous homogeneous block entered from the orchestrator, invocation
    numbers increase, and each block respects the step budget.
    """
    problems = []
    ev = trace.events
    if not ev or ev[0].loop != ORCH:
        problems.append("trace does not start in the orchestrator")
    tokens = "".join("O" if e.loop == ORCH else ("B" if e.loop == BUILD_FIXER else "T") for e in ev)
    if ev and not _GRAMMAR.fullmatch(tokens):
        problems.append(f"token sequence {tokens!r} violates the grammar")
    seen: set[int] = set()
    last_inv = 0
    prev = None
    for i, e in enumerate(ev):
        if e.loop == ORCH:
            if e.invocation != 0:
                problems.append(f"event {i}: orchestrator event with invocation {e.invocation}")
            prev = e
            continue
        if prev is None or (prev.loop, prev.invocation) != (e.loop, e.invocation):
            # a new block must be entered from the orchestrator
            if prev is None or prev.loop != ORCH:
                problems.append(f"event {i}: {e.loop}#{e.invocation} not entered from the orchestrator")
            if e.invocation in seen:
                problems.append(f"event {i}: invocation {e.invocation} resumed after interleaving")
            if e.invocation <= last_inv:
                problems.append(f"event {i}: invocation numbers not increasing")
            seen.add(e.invocation)
            last_inv = e.invocation
        prev = e
    blocks: dict[int, int] = {}
    for e in ev:
        if e.loop != ORCH and e.is_tool_call:
            blocks[e.invocation] = blocks.get(e.invocation, 0) + 1
    for inv, n in blocks.items():
        if n > trace.step_limit:
            problems.append(f"fixer #{inv} used {n} > {trace.step_limit} steps")
    orch_calls = sum(1 for e in ev if e.loop == ORCH and e.is_tool_call)
    if orch_calls > trace.step_limit:
        problems.append(f"orchestrator used {orch_calls} > {trace.step_limit} probes")
    if trace.tool_calls > trace.step_limit * (1 + len(blocks)):
        problems.append("total tool calls exceed step_limit * (1 + fixer invocations)")
    return problems
