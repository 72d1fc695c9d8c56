"""Tool calls, agent context, and the workspace that executes tools."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from typing import Any

from isamig import oracle
from isamig.errors import EditError, NotFound
from isamig.fleet.model import Fleet, Isa, SourceFile


class Tool(str, enum.Enum):
    Build = "Build"
    RunTest = "RunTest"
    FixBuildFile = "FixBuildFile"
    SearchCode = "SearchCode"
    EditCode = "EditCode"
    Finish = "Finish"


class MalformedCall(ValueError):
    pass


MALFORMED = "Malformed"  # transcript marker for a rejected reasoner reply


_REQUIRED = {
    Tool.Build: ("target",),
    Tool.RunTest: ("target",),
    Tool.FixBuildFile: ("package",),
    Tool.SearchCode: ("query",),
    Tool.EditCode: ("file", "match_text", "replacement"),
    Tool.Finish: ("status",),
}


@dataclass(frozen=True)
class ToolCall:
    tool: Tool
    args: dict

    def to_wire(self) -> dict:
        return {"tool": self.tool.value, "args": dict(self.args)}

    @classmethod
    def parse(cls, tool: Any, args: Any) -> "ToolCall":
        try:
            t = Tool(tool)
        except ValueError:
            raise MalformedCall(f"unknown tool {tool!r}") from None
        if not isinstance(args, dict):
            raise MalformedCall(f"{t.value}: args must be an object")
        for key in _REQUIRED[t]:
            if key not in args:
                raise MalformedCall(f"{t.value}: missing arg {key!r}")
            if not isinstance(args[key], str):
                raise MalformedCall(f"{t.value}: arg {key!r} must be a string")
        if t is Tool.Finish and args["status"] not in ("Success", "GiveUp"):
            raise MalformedCall(f"Finish status {args['status']!r}")
        return cls(t, dict(args))


def finish(status: str) -> ToolCall:
    return ToolCall(Tool.Finish, {"status": status})


@dataclass(frozen=True)
class Step:
    note: str
    call: ToolCall | None  # None when the reasoner's reply was malformed
    output: tuple[str, ...]
    origin: str = "reasoner"  # "reasoner" | "framework"

    def to_wire(self) -> dict:
        call = self.call.to_wire() if self.call else {"tool": MALFORMED, "args": {}}
        return {"note": self.note, **call, "output": list(self.output), "origin": self.origin}


@dataclass
class AgentContext:
    goal: str
    mode: str  # "build" | "test"
    step_limit: int
    sanitizers: bool = True
    transcript: list[Step] = field(default_factory=list)

    @property
    def steps_used(self) -> int:
        return len(self.transcript)

    def to_wire(self) -> dict:
        return {
            "goal": self.goal,
            "mode": self.mode,
            "sanitizers": self.sanitizers,
            "step_limit": self.step_limit,
            "steps_used": self.steps_used,
            "transcript": [s.to_wire() for s in self.transcript],
        }

    def serialize(self) -> str:
        return json.dumps(self.to_wire(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_wire(cls, doc: dict) -> "AgentContext":
        ctx = cls(doc["goal"], doc["mode"], int(doc["step_limit"]), bool(doc.get("sanitizers", True)))
        for s in doc.get("transcript", []):
            call = None if s["tool"] == MALFORMED else ToolCall.parse(s["tool"], s.get("args", {}))
            ctx.transcript.append(Step(s.get("note", ""), call, tuple(s.get("output", [])), s.get("origin", "reasoner")))
        return ctx

    def prefix(self, n: int) -> "AgentContext":
        return replace(self, transcript=list(self.transcript[:n]))


@dataclass(frozen=True)
class AppliedEdit:
    """A fleet mutation performed by the agent (one future commit)."""

    file: str
    old: SourceFile | None
    new: SourceFile | None
    tool: Tool
    defect_class: oracle.DefectClass | None
    detail: str = ""


def status_lines(result: oracle.Result) -> tuple[str, ...]:
    return (f"status: {result.status}",) + tuple(result.log)


def output_passed(output: tuple[str, ...]) -> bool:
    return bool(output) and output[0] == "status: Pass"


class Workspace:
    """Mutable holder of the current fleet snapshot for one agent run."""

    SEARCH_LIMIT = 50

    def __init__(self, fleet: Fleet, sanitizers: bool = True):
        self.fleet = fleet
        self.sanitizers = sanitizers
        self.edits: list[AppliedEdit] = []

    def build(self, target: str) -> oracle.Result:
        return oracle.build(self.fleet, target, Isa.Arm)

    def test(self, target: str, sanitizers: bool | None = None) -> oracle.Result:
        return oracle.run_test(self.fleet, target, Isa.Arm, self.sanitizers if sanitizers is None else sanitizers)

    def execute(self, call: ToolCall) -> tuple[str, ...]:
        """Run a tool.  Errors come back as ``error: ...`` output lines."""
        try:
            return self._execute(call)
        except (NotFound, EditError) as exc:
            return (f"error: {exc}",)

    def _execute(self, call: ToolCall) -> tuple[str, ...]:
        a = call.args
        if call.tool is Tool.Build:
            return status_lines(self.build(a["target"]))
        if call.tool is Tool.RunTest:
            san = a.get("sanitizers")
            return status_lines(self.test(a["target"], None if san is None else bool(san)))
        if call.tool is Tool.SearchCode:
            return self.search(a["query"])
        if call.tool is Tool.EditCode:
            edit = oracle.Edit(a["file"], a["match_text"], a["replacement"])
            fleet, old, new = oracle.apply_edit(self.fleet, edit)
            self.fleet = fleet
            cls = next((c for c, s in oracle.DEFECTS.items() if s.pattern in edit.match_text), None)
            self.edits.append(AppliedEdit(edit.file, old, new, Tool.EditCode, cls,
                                          f"{edit.match_text} -> {edit.replacement}"))
            return (f"edited {edit.file}",)
        if call.tool is Tool.FixBuildFile:
            return self.fix_build_file(a["package"])
        raise EditError(f"tool {call.tool.value} is not executable")

    def search(self, query: str) -> tuple[str, ...]:
        if not query:
            return ("error: empty query",)
        hits = []
        for pkg in self.fleet.packages:
            for f in pkg.files:
                for i, line in enumerate(f.lines, start=1):
                    if query in line:
                        hits.append(f"{f.path}:{i}: {line.strip()}")
        if not hits:
            return ("no matches",)
        hits.sort()
        out = tuple(hits[: self.SEARCH_LIMIT])
        if len(hits) > self.SEARCH_LIMIT:
            out += (f"... {len(hits) - self.SEARCH_LIMIT} more",)
        return out

    def fix_build_file(self, package_id: str) -> tuple[str, ...]:
        """Deterministic normalizer.

        * an Arm release variant implies Arm CI;
        * adjacent duplicate lines in BUILD are collapsed.
        """
        pkg = self.fleet.package(package_id)
        changes = []
        bp = pkg.blueprint
        if bp.arm_enabled and not bp.ci_enabled.get(Isa.Arm, False):
            ci = dict(bp.ci_enabled)
            ci[Isa.Arm] = True
            self.fleet = self.fleet.with_blueprint(replace(bp, ci_enabled=ci))
            self.edits.append(AppliedEdit(bp.path, None, None, Tool.FixBuildFile, None, "enable Arm CI"))
            changes.append(f"{bp.path}: enabled Arm CI for Arm release variant")
        try:
            build = self.fleet.file(pkg.build_file)
        except NotFound:
            build = None
        if build is not None:
            lines = [ln for i, ln in enumerate(build.lines) if i == 0 or ln != build.lines[i - 1] or not ln.strip()]
            if len(lines) != len(build.lines):
                new = SourceFile(build.path, tuple(lines))
                self.fleet = self.fleet.with_file(new)
                self.edits.append(AppliedEdit(build.path, build, new, Tool.FixBuildFile, None, "dedupe lines"))
                changes.append(f"{build.path}: removed {len(build.lines) - len(lines)} duplicate line(s)")
        return tuple(changes) or ("no changes",)
