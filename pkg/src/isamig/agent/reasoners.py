"""Reasoners: pluggable policies mapping an agent context to the next tool call.

A reasoner must be a pure function of the context it is given.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Iterable, Protocol

from isamig import oracle
from isamig.agent.tools import AgentContext, MalformedCall, Tool, ToolCall, finish, output_passed
from isamig.oracle import DefectClass


class Reasoner(Protocol):
    def next_action(self, context: AgentContext) -> tuple[str, ToolCall]: ...


@dataclass(frozen=True)
class Rule:
    match_text: str
    replacement: str
    search_first: bool = False


def default_rules(classes: Iterable[DefectClass] | None = None) -> dict[DefectClass, Rule]:
    """Canonical fix per repairable class.  Shared dependencies are located
    with SearchCode before editing, since the broken file lives in another
    package."""
    wanted = oracle.REPAIRABLE_CLASSES if classes is None else set(classes)
    rules = {}
    for cls in sorted(wanted, key=lambda c: list(DefectClass).index(c)):
        spec = oracle.DEFECTS[cls]
        rules[cls] = Rule(spec.pattern, spec.fix, search_first=cls is DefectClass.UnsupportedDependency)
    return rules


def _probe(ctx: AgentContext) -> ToolCall:
    tool = Tool.Build if ctx.mode == "build" else Tool.RunTest
    return ToolCall(tool, {"target": ctx.goal})


def _last_failure(ctx: AgentContext):
    for step in reversed(ctx.transcript):
        if step.call is not None and step.call.tool in (Tool.Build, Tool.RunTest):
            return step
    return None


class RuleReasoner:
    """Deterministic rule-table reasoner keyed on diagnostic classes."""

    def __init__(self, rules: dict[DefectClass, Rule] | None = None):
        self.rules = default_rules() if rules is None else dict(rules)

    @classmethod
    def for_classes(cls, classes: Iterable[DefectClass]) -> "RuleReasoner":
        return cls(default_rules(classes))

    def _pick(self, output: Iterable[str]):
        for line in output:
            diag = oracle.parse_diagnostic(line)
            if diag is not None and diag[0] in self.rules:
                return diag
        return None

    def next_action(self, ctx: AgentContext) -> tuple[str, ToolCall]:
        if not ctx.transcript:
            return "start by reproducing the failure", _probe(ctx)
        last = ctx.transcript[-1]
        if last.call is None:
            return "previous reply was rejected", _probe(ctx)
        tool = last.call.tool
        if tool in (Tool.EditCode, Tool.FixBuildFile):
            if last.output and last.output[0].startswith("error:"):
                return "edit did not apply; no alternative rule", finish("GiveUp")
            return "re-check the goal after the edit", _probe(ctx)
        if tool in (Tool.Build, Tool.RunTest):
            if output_passed(last.output):
                return "goal is green", finish("Success")
            diag = self._pick(last.output)
            if diag is None:
                return "no diagnostic matches a registered rule", finish("GiveUp")
            cls, path, line = diag
            rule = self.rules[cls]
            if rule.search_first:
                return f"{cls.value}: locate {rule.match_text!r} across packages", ToolCall(
                    Tool.SearchCode, {"query": rule.match_text})
            return f"{cls.value} at {path}:{line}: apply canonical fix", ToolCall(
                Tool.EditCode, {"file": path, "match_text": rule.match_text, "replacement": rule.replacement})
        if tool is Tool.SearchCode:
            failure = _last_failure(ctx)
            diag = self._pick(failure.output) if failure else None
            if diag is None:
                return "lost track of the failing diagnostic", finish("GiveUp")
            cls, path, _ = diag
            rule = self.rules[cls]
            for hit in last.output:
                if hit.startswith(path + ":"):
                    return f"{cls.value}: fix the hit in {path}", ToolCall(
                        Tool.EditCode, {"file": path, "match_text": rule.match_text, "replacement": rule.replacement})
            return "search found nothing in the failing file", finish("GiveUp")
        return "unexpected transcript state", finish("GiveUp")


class NullReasoner:
    def next_action(self, ctx: AgentContext) -> tuple[str, ToolCall]:
        return "giving up immediately", finish("GiveUp")


class SubprocessReasoner:
    """Reasoner backed by an external executable speaking NDJSON on stdio.

    Request: ``{"kind": "context", "context": {...}}``.
    Reply:   ``{"note": "...", "tool": "...", "args": {...}}``.
    """

    def __init__(self, argv, timeout: float = 30.0):
        from isamig.protocol import StdioPeer

        self.peer = StdioPeer(argv, timeout=timeout)
        self._lock = threading.Lock()

    def next_action(self, ctx: AgentContext) -> tuple[str, ToolCall]:
        from isamig.protocol import ProtocolError

        with self._lock:
            try:
                reply = self.peer.request({"kind": "context", "context": ctx.to_wire()})
            except ProtocolError as exc:
                raise MalformedCall(str(exc)) from None
        if not isinstance(reply, dict):
            raise MalformedCall("reply is not an object")
        return str(reply.get("note", "")), ToolCall.parse(reply.get("tool"), reply.get("args", {}))

    def close(self) -> None:
        self.peer.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def make_reasoner(spec: str, classes: Iterable[DefectClass] | None = None):
    """``rules`` | ``null`` | ``cmd:<command line>``."""
    import shlex

    if spec == "rules":
        return RuleReasoner(default_rules(classes))
    if spec == "null":
        return NullReasoner()
    if spec.startswith("cmd:"):
        return SubprocessReasoner(shlex.split(spec[4:]))
    raise ValueError(f"unknown reasoner {spec!r}")
