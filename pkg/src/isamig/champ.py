"""Arm auto-qualification state machine.

Each job walks NotStarted -> CanaryTask -> CanaryJob -> CanaryCell ->
Qualified, advancing one stage after ``dwell_days`` consecutive healthy
evaluations.  NotStarted is a shadow soak: an Arm task is evaluated but
serves no traffic, so ``arm_fraction`` stays 0.  A regression in any
non-qualified stage makes the job Ineligible, files (or reuses) a bug and
schedules a retry.

This module only sees :class:`HealthSample` values; it never inspects
defects or source files.
"""

from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import dataclass, field, replace

from isamig.errors import IntegrityError, StateError
from isamig.fleet.model import Fleet, Isa


class Stage(str, enum.Enum):
    NotStarted = "NotStarted"
    CanaryTask = "CanaryTask"
    CanaryJob = "CanaryJob"
    CanaryCell = "CanaryCell"
    Qualified = "Qualified"
    Ineligible = "Ineligible"


WALK = (Stage.NotStarted, Stage.CanaryTask, Stage.CanaryJob, Stage.CanaryCell, Stage.Qualified)
STAGES_TO_QUALIFY = len(WALK) - 1

_ALLOWED = {
    Stage.NotStarted: {Stage.CanaryTask, Stage.Ineligible},
    Stage.CanaryTask: {Stage.CanaryJob, Stage.Ineligible},
    Stage.CanaryJob: {Stage.CanaryCell, Stage.Ineligible},
    Stage.CanaryCell: {Stage.Qualified, Stage.Ineligible},
    Stage.Ineligible: {Stage.CanaryTask},
    Stage.Qualified: set(),
}


@dataclass(frozen=True)
class HealthSample:
    job_id: str
    isa: Isa
    day: int
    crash_rate: float
    rpc_error_rate: float
    latency_ratio: float

    def __post_init__(self):
        if not (0.0 <= self.crash_rate <= 1.0 and 0.0 <= self.rpc_error_rate <= 1.0):
            raise IntegrityError(f"{self.job_id} day {self.day}: rate outside [0, 1]")
        if self.latency_ratio <= 0:
            raise IntegrityError(f"{self.job_id} day {self.day}: latency_ratio <= 0")


@dataclass(frozen=True)
class ChampConfig:
    dwell_days: int = 3
    retry_days: int = 30
    crash_margin: float = 0.02
    rpc_factor: float = 1.5
    latency_limit: float = 1.3
    canary_job_fraction: float = 0.25

    def __post_init__(self):
        if self.dwell_days < 1 or self.retry_days < 1:
            raise ValueError("dwell_days and retry_days must be >= 1")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class Verdict:
    healthy: bool
    metrics: tuple[str, ...] = ()

    @property
    def label(self) -> str:
        return "Healthy" if self.healthy else f"Regressed({','.join(self.metrics)})"


HEALTHY = Verdict(True)


def evaluate(arm: HealthSample, x86: HealthSample, config: ChampConfig = ChampConfig()) -> Verdict:
    """Compare an Arm sample with the x86 sample of the same job and day."""
    if arm.job_id != x86.job_id or arm.day != x86.day:
        raise IntegrityError(f"sample mismatch: {arm.job_id}@{arm.day} vs {x86.job_id}@{x86.day}")
    if arm.isa is not Isa.Arm or x86.isa is not Isa.X86:
        raise IntegrityError("evaluate expects (Arm, X86) samples")
    bad = []
    if arm.crash_rate > x86.crash_rate + config.crash_margin:
        bad.append("crash_rate")
    if arm.rpc_error_rate > config.rpc_factor * x86.rpc_error_rate:
        bad.append("rpc_error_rate")
    if arm.latency_ratio > config.latency_limit:
        bad.append("latency_ratio")
    return Verdict(not bad, tuple(bad))


def stage_fractions(tasks_per_cell: int, n_cells: int, config: ChampConfig = ChampConfig()) -> dict[Stage, float]:
    """Arm share of the job's tasks at each stage; nondecreasing along the walk."""
    total = tasks_per_cell * n_cells
    raw = [1.0 / total, config.canary_job_fraction, max(config.canary_job_fraction, 1.0 / n_cells), 1.0]
    out = {Stage.NotStarted: 0.0, Stage.Ineligible: 0.0}
    level = 0.0
    for stage, f in zip(WALK[1:], raw):
        level = max(level, min(f, 1.0))
        out[stage] = level
    return out


@dataclass(frozen=True)
class QualificationState:
    job_id: str
    stage: Stage = Stage.NotStarted
    arm_fraction: float = 0.0
    healthy_days: int = 0
    episode: int = 0
    retry_day: int | None = None
    bug_id: str | None = None

    def to_dict(self) -> dict:
        return {"job_id": self.job_id, "stage": self.stage.value, "arm_fraction": self.arm_fraction,
                "healthy_days": self.healthy_days, "episode": self.episode, "retry_day": self.retry_day,
                "bug_id": self.bug_id}


@dataclass
class BugRecord:
    bug_id: str
    job_id: str
    day_filed: int
    metrics: tuple[str, ...]
    resolved: bool = False
    day_resolved: int | None = None

    def to_dict(self) -> dict:
        return {"bug_id": self.bug_id, "job_id": self.job_id, "day_filed": self.day_filed,
                "metrics": list(self.metrics), "resolved": self.resolved, "day_resolved": self.day_resolved}


class BugTracker:
    """At most one open bug per job; a repeat regression reuses it."""

    def __init__(self):
        self.bugs: list[BugRecord] = []
        self._open: dict[str, BugRecord] = {}

    def file(self, job_id: str, day: int, metrics: tuple[str, ...]) -> str:
        bug = self._open.get(job_id)
        if bug is None:
            bug = BugRecord(f"bug{len(self.bugs):05d}", job_id, day, metrics)
            self.bugs.append(bug)
            self._open[job_id] = bug
        return bug.bug_id

    def resolve(self, job_id: str, day: int) -> str | None:
        bug = self._open.pop(job_id, None)
        if bug is None:
            return None
        bug.resolved = True
        bug.day_resolved = day
        return bug.bug_id

    def open_for(self, job_id: str) -> BugRecord | None:
        return self._open.get(job_id)

    def open_bugs(self) -> list[BugRecord]:
        return sorted(self._open.values(), key=lambda b: b.bug_id)

    def to_json(self) -> str:
        return json.dumps([b.to_dict() for b in self.bugs], sort_keys=True, indent=1) + "\n"


def transition(state: QualificationState, to: Stage, fraction: float, **changes) -> QualificationState:
    if to not in _ALLOWED[state.stage]:
        raise StateError(f"{state.job_id}: {state.stage.value} -> {to.value} not allowed")
    return replace(state, stage=to, arm_fraction=fraction, **changes)


def step_qualification(fleet: Fleet, state: QualificationState, verdict: Verdict | None, day: int,
                       config: ChampConfig = ChampConfig(), bugs: BugTracker | None = None) -> QualificationState:
    """Advance one job by one day.

    ``verdict`` None means the job could not be placed on Arm that day:
    the dwell counter pauses rather than resetting.
    """
    job = fleet.job(state.job_id)
    fractions = stage_fractions(job.tasks_per_cell, len(job.cells), config)
    stage = state.stage
    if stage is Stage.Qualified:
        return state
    if stage is Stage.Ineligible:
        if state.retry_day is not None and day >= state.retry_day:
            return transition(state, Stage.CanaryTask, fractions[Stage.CanaryTask], healthy_days=0,
                              episode=state.episode + 1, retry_day=None)
        return state
    if verdict is None:
        return state
    if not verdict.healthy:
        bug_id = (bugs or BugTracker()).file(state.job_id, day, verdict.metrics)
        return transition(state, Stage.Ineligible, 0.0, healthy_days=0,
                          retry_day=day + config.retry_days, bug_id=bug_id)
    healthy = state.healthy_days + 1
    if healthy < config.dwell_days:
        return replace(state, healthy_days=healthy)
    nxt = WALK[WALK.index(stage) + 1]
    new = transition(state, nxt, fractions[nxt], healthy_days=0)
    if nxt is Stage.Qualified and bugs is not None and bugs.resolve(state.job_id, day):
        new = replace(new, bug_id=None)
    return new


CHAMP_CSV_HEADER = ("day", "job_id", "stage_before", "verdict", "stage_after", "arm_fraction", "bug_id")


@dataclass(frozen=True)
class ChampEvent:
    day: int
    job_id: str
    stage_before: Stage
    verdict: str  # Healthy | Regressed(...) | DeployBlocked | Waiting
    stage_after: Stage
    arm_fraction: float
    bug_id: str | None
    episode: int

    def row(self) -> tuple:
        return (self.day, self.job_id, self.stage_before.value, self.verdict, self.stage_after.value,
                f"{self.arm_fraction:.6f}", self.bug_id or "")


@dataclass
class Qualifier:
    """Per-job states, the bug tracker and the append-only event log."""

    config: ChampConfig = field(default_factory=ChampConfig)
    states: dict[str, QualificationState] = field(default_factory=dict)
    bugs: BugTracker = field(default_factory=BugTracker)
    events: list[ChampEvent] = field(default_factory=list)

    def state(self, job_id: str) -> QualificationState:
        if job_id not in self.states:
            self.states[job_id] = QualificationState(job_id)
        return self.states[job_id]

    def step(self, fleet: Fleet, job_id: str, verdict: Verdict | None, day: int) -> QualificationState:
        before = self.state(job_id)
        after = step_qualification(fleet, before, verdict, day, self.config, self.bugs)
        if before.stage is Stage.Ineligible:
            label = "Waiting"
        else:
            label = "DeployBlocked" if verdict is None else verdict.label
        self.states[job_id] = after
        self.events.append(ChampEvent(day, job_id, before.stage, label, after.stage, after.arm_fraction,
                                      after.bug_id or before.bug_id, after.episode))
        return after

    def needs_sample(self, job_id: str, day: int) -> bool:
        """Whether today's step will consume a health verdict."""
        return self.state(job_id).stage not in (Stage.Qualified, Stage.Ineligible)

    def qualified(self) -> list[str]:
        return sorted(j for j, s in self.states.items() if s.stage is Stage.Qualified)

    def events_csv(self) -> str:
        return champ_events_csv(self.events)


def champ_events_csv(events) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CHAMP_CSV_HEADER)
    for e in events:
        w.writerow(e.row())
    return buf.getvalue()


def replay_violations(events, config: ChampConfig = ChampConfig()) -> list[str]:
    """Re-check an event log for safety, monotone escalation and walk order.

    An episode starts at a job's first event and again on each retry.
    """
    problems = []
    by_job: dict[str, list[ChampEvent]] = {}
    for e in events:
        by_job.setdefault(e.job_id, []).append(e)
    for job, evs in sorted(by_job.items()):
        regressed = False
        level = 0.0
        streak = 0
        prev_day = None
        for e in evs:
            if prev_day is not None and e.day < prev_day:
                problems.append(f"{job} day {e.day}: events out of order")
            prev_day = e.day
            if e.stage_before is Stage.Ineligible and e.stage_after is Stage.CanaryTask:
                regressed, level, streak = False, 0.0, 0
            if e.verdict.startswith("Regressed"):
                regressed = True
                if e.stage_after is not Stage.Ineligible and e.stage_before is not Stage.Qualified:
                    problems.append(f"{job} day {e.day}: regression did not make the job ineligible")
            elif e.verdict == "Healthy":
                streak += 1
            if e.stage_before != e.stage_after and e.stage_after not in _ALLOWED[e.stage_before]:
                problems.append(f"{job} day {e.day}: illegal {e.stage_before.value} -> {e.stage_after.value}")
            if e.stage_after in WALK[1:] and e.stage_after != e.stage_before and e.stage_before in WALK:
                if streak < config.dwell_days:
                    problems.append(f"{job} day {e.day}: advanced after {streak} healthy days")
                streak = 0
            if e.stage_after is Stage.Qualified and e.stage_before is not Stage.Qualified and regressed:
                problems.append(f"{job} day {e.day}: qualified despite a regression in the episode")
            if e.stage_after is not Stage.Ineligible:
                if e.arm_fraction < level:
                    problems.append(f"{job} day {e.day}: arm_fraction decreased")
                level = e.arm_fraction
    return problems


def open_bug_violations(bugs: BugTracker) -> list[str]:
    seen: dict[str, int] = {}
    for b in bugs.bugs:
        if not b.resolved:
            seen[b.job_id] = seen.get(b.job_id, 0) + 1
    return [f"{j}: {n} open bugs" for j, n in sorted(seen.items()) if n > 1]
