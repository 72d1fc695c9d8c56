"""Day-by-day migration driver.

Each admitted package walks TestFix -> MultiarchCi -> ReleaseConfig ->
Rollout -> FullProduction.  The driver owns the only mutable reference
to the fleet; every mutation goes through :meth:`Simulation._commit`,
which appends exactly one commit record.
"""

from __future__ import annotations

import difflib
import enum
from dataclasses import dataclass

from isamig import oracle, rng
from isamig.agent.loops import Outcome, orchestrate
from isamig.agent.reasoners import make_reasoner
from isamig.champ import Qualifier, Stage
from isamig.errors import BuildFailed
from isamig.fleet.generate import generate_fleet
from isamig.fleet.model import Fleet, Isa, SourceFile
from isamig.health import X86_ONLY_TAG, champ_day
from isamig.lsc import ChangeSpec, ShardPolicy, ShardState, failing_ci_targets, generate_change, rollback_package
from isamig.lsc import run_shard_pipeline, shard_by_owner
from isamig.oracle import DefectClass
from isamig.sim.config import ScenarioConfig
from isamig.taxonomy.categories import CATEGORY_OF_DEFECT, Category
from isamig.taxonomy.classify import classify_heuristic
from isamig.taxonomy.model import CommitRecord, FileDiff


class LifecycleStage(str, enum.Enum):
    TestFix = "TestFix"
    MultiarchCi = "MultiarchCi"
    ReleaseConfig = "ReleaseConfig"
    Rollout = "Rollout"
    FullProduction = "FullProduction"


LIFECYCLE = tuple(LifecycleStage)
EVENT_CSV_HEADER = ("seq", "day", "kind", "entity", "detail")


@dataclass(frozen=True)
class SimEvent:
    seq: int
    day: int
    kind: str
    entity: str
    detail: str = ""

    def row(self) -> tuple:
        return (self.seq, self.day, self.kind, self.entity, self.detail)


@dataclass(frozen=True)
class DayMetrics:
    day: int
    phase: str
    admitted: int
    stage_counts: tuple[int, ...]  # in LIFECYCLE order
    qualified_jobs: int
    total_jobs: int
    commits: int

    @property
    def qualified_fraction(self) -> float:
        return self.qualified_jobs / self.total_jobs if self.total_jobs else 0.0


def file_diff(old: SourceFile | None, new: SourceFile | None, path: str) -> FileDiff:
    a = list(old.lines) if old else []
    b = list(new.lines) if new else []
    body = [ln for ln in difflib.unified_diff(a, b, lineterm="", n=0)
            if ln[:1] in "+-" and not ln.startswith(("+++", "---"))]
    added = sum(ln.startswith("+") for ln in body)
    return FileDiff(path, added, len(body) - added, "\n".join(body))


@dataclass
class _Ticket:
    due: int
    package_id: str
    kind: str  # release | runtime | schedule
    opened: int


class Simulation:
    def __init__(self, config: ScenarioConfig, fleet: Fleet | None = None):
        config.validate()
        self.cfg = config
        self.fleet = fleet if fleet is not None else generate_fleet(config.fleet)
        self.initial_fleet = self.fleet
        self.reasoner = make_reasoner(config.reasoner) if config.agent else None
        self.commits: list[CommitRecord] = []
        self.mutations: list[tuple[str, Fleet, Fleet]] = []
        self.events: list[SimEvent] = []
        self.metrics: list[DayMetrics] = []
        self.shards = []
        self.agent_runs: list[dict] = []
        self.qualifier = Qualifier(config.champ)
        self.stage: dict[str, LifecycleStage] = {}
        self.tickets: list[_Ticket] = []
        self._open_tickets: set[tuple[str, str]] = set()
        self._jobs_of: dict[str, list[str]] = {}
        for j in self.fleet.jobs:
            self._jobs_of.setdefault(j.package_id, []).append(j.id)
        self._excluded = {j.id for j in self.fleet.jobs if self._permanently_blocked(j)}
        self._queue = self._admission_order()
        self._admit_credit = 0.0
        # change tracking for cached Arm checks
        self._version = 0
        self._touched: dict[str, int] = {}
        self._checked: dict[str, tuple[int, tuple[str, ...], bool]] = {}

    # -- bookkeeping --------------------------------------------------------

    def _event(self, day: int, kind: str, entity: str, detail: str = "") -> None:
        self.events.append(SimEvent(len(self.events), day, kind, entity, detail))

    def _commit(self, new: Fleet, day: int, message: str, diffs, automated: bool, category: Category | None,
                origin: str) -> CommitRecord:
        if new is self.fleet:
            raise ValueError("commit without a fleet mutation")
        rec = CommitRecord(f"c{len(self.commits):06d}", day, message, tuple(diffs), automated, None, origin)
        rec = rec.with_category(category if category is not None else classify_heuristic(rec))
        self.mutations.append((rec.id, self.fleet, new))
        self._version += 1
        for d in rec.file_diffs:
            self._touched[d.path.split("/", 1)[0]] = self._version
        self.fleet = new
        self.commits.append(rec)
        self._event(day, "commit", rec.id, f"{origin}:{int(rec.category)}")
        return rec

    def _scripted_commit(self, day: int, stream, k: int, r) -> None:
        loc = max(1, int(round(r.lognormvariate(0, 1.0) * stream.loc_median)))
        added = max(1, (loc * 3) // 4)
        path, hunk = _SCRIPTED_TEMPLATES[stream.category]
        diff = FileDiff(path.format(day=day, k=k), added, loc - added, hunk)
        rec = CommitRecord(f"c{len(self.commits):06d}", day, f"{stream.category.label} work item", (diff,),
                           False, stream.category, "scripted")
        self.commits.append(rec)
        self._event(day, "commit", rec.id, f"scripted:{int(stream.category)}")

    def _set_stage(self, day: int, pid: str, stage: LifecycleStage) -> None:
        before = self.stage.get(pid)
        if before is not None and LIFECYCLE.index(stage) <= LIFECYCLE.index(before):
            raise ValueError(f"{pid}: lifecycle regression {before} -> {stage}")
        self.stage[pid] = stage
        self._event(day, "stage", pid, f"{before.value if before else 'NotAdmitted'}->{stage.value}")

    def _admission_order(self) -> list[str]:
        load = {p.id: 0 for p in self.fleet.packages}
        for j in self.fleet.jobs:
            load[j.package_id] += j.tasks_per_cell * len(j.cells)
        return sorted(load, key=lambda pid: (-load[pid], pid))

    def _permanently_blocked(self, job) -> bool:
        if X86_ONLY_TAG in job.borg_constraints:
            return True
        return not any(self.fleet.cell(c).capacity.get(Isa.Arm, 0) > 0 for c in job.cells)

    # -- Arm build/test checks with change tracking --------------------------

    def _closure_version(self, pid: str) -> int:
        v = self._touched.get(pid, 0)
        for d in self.fleet.transitive_deps(pid):
            v = max(v, self._touched.get(d, 0))
        return v

    def _arm_failures(self, pid: str) -> tuple[str, ...]:
        cached = self._checked.get(pid)
        if cached is not None and cached[0] >= self._closure_version(pid):
            return cached[1]
        pkg = self.fleet.package(pid)
        failing = [t.id for t in pkg.build_targets if not oracle.build(self.fleet, t.id, Isa.Arm).passed]
        failing += [t.id for t in pkg.test_targets
                    if not oracle.run_test(self.fleet, t.id, Isa.Arm, self.cfg.sanitizers).passed]
        result = tuple(sorted(failing))
        self._checked[pid] = (self._version, result, False)
        return result

    def _agent_already_failed(self, pid: str) -> bool:
        cached = self._checked.get(pid)
        return cached is not None and cached[2] and cached[0] >= self._closure_version(pid)

    # -- actors -------------------------------------------------------------

    def _run_agent(self, day: int, goals, why: str) -> bool:
        fleet, trace = orchestrate(self.fleet, goals, self.reasoner, self.cfg.step_limit,
                                   sanitizers=self.cfg.sanitizers)
        fixed = trace.outcome is Outcome.Fixed
        self.agent_runs.append({"day": day, "why": why, "goals": list(trace.goals), "outcome": trace.outcome.value,
                                "tool_calls": trace.tool_calls, "edits": len(trace.edits)})
        self._event(day, "agent", why, f"{trace.outcome.value}:{trace.tool_calls}")
        if fleet is not self.fleet and trace.edits:
            first: dict[str, SourceFile | None] = {}
            last: dict[str, SourceFile | None] = {}
            for e in trace.edits:
                first.setdefault(e.file, e.old)
                last[e.file] = e.new
            diffs = [file_diff(first[p], last[p], p) for p in sorted(first)]
            classes = [e.defect_class for e in trace.edits if e.defect_class is not None]
            cat = CATEGORY_OF_DEFECT[classes[0]] if classes else None
            self._commit(fleet, day, f"Fix Arm failures in {', '.join(trace.goals)}", diffs, True, cat, "agent")
        return fixed

    def _manual_fix(self, day: int, ticket: _Ticket) -> None:
        pid = ticket.package_id
        if ticket.kind == "release":
            found = [d for d in oracle.scan_package(self.fleet.package(pid))
                     if d.cls is DefectClass.ReleaseSizeOverflow]
        elif ticket.kind == "runtime":
            found = oracle.runtime_defects(self.fleet, pid)
        else:
            found = oracle.scheduling_blockers(self.fleet, pid)
        self._open_tickets.discard((pid, ticket.kind))
        self._event(day, "ticket_closed", pid, f"{ticket.kind}:{len(found)}")
        if not found:
            return
        fleet = self.fleet
        olds: dict[str, SourceFile] = {}
        for d in sorted(found, key=lambda d: (d.file_path, d.line_no), reverse=True):
            olds.setdefault(d.file_path, fleet.file(d.file_path))
            fleet = oracle.apply_fix(fleet, oracle.canonical_edit(d))
        diffs = [file_diff(olds[p], fleet.file(p), p) for p in sorted(olds)]
        cat = CATEGORY_OF_DEFECT[found[0].cls]
        self._commit(fleet, day, f"{pid}: fix {found[0].cls.value} reported by {ticket.kind} follow-up", diffs,
                     False, cat, "manual")

    def _open_ticket(self, day: int, pid: str, kind: str) -> None:
        if (pid, kind) in self._open_tickets:
            return
        self._open_tickets.add((pid, kind))
        self.tickets.append(_Ticket(day + self.cfg.manual_fix_days, pid, kind, day))
        self._event(day, "ticket_opened", pid, kind)

    def _lsc_round(self, day: int, phase: str, stage: LifecycleStage, template: str) -> None:
        pids = sorted(p for p, s in self.stage.items()
                      if s is stage and (p, "release") not in self._open_tickets)
        if not pids:
            return
        spec = ChangeSpec(f"{template}-d{day:03d}", "blueprint:" + ",".join(pids), template, phase,
                          global_approval=phase in self.cfg.global_approval_phases)
        mega = generate_change(self.fleet, spec)
        edited = {e.package_id for e in mega.edits}
        for pid in pids:
            if pid not in edited:  # nothing left to change
                self._on_submitted(day, pid, template, None)
        policy = ShardPolicy(phase=phase, refusal=self.cfg.refusal, sanitizers=self.cfg.sanitizers, day=day,
                             seed=self.cfg.seed)
        for shard in shard_by_owner(self.fleet, mega).shards:
            self.shards.append(shard)
            fleet, out = run_shard_pipeline(self.fleet, shard, policy)
            if out.state is ShardState.Submitted:
                diffs = [FileDiff(e.file, e.lines_added, e.lines_removed, e.diff) for e in shard.edits]
                self._commit(fleet, day, f"[LSC {spec.id}] {template} for {shard.owner_id}", diffs, True,
                             Category.ReleaseAndRolloutConfig, "lsc")
                for pid in shard.package_ids:
                    self._on_submitted(day, pid, template, shard)
            elif out.ci_result == "fail" and self.reasoner is not None:
                goals = failing_ci_targets(out.ci_log)
                if goals:
                    self._run_agent(day, goals, f"ci:{spec.id}/{shard.owner_id}")

    def _on_submitted(self, day: int, pid: str, template: str, shard) -> None:
        if template == "enable_arm_ci":
            self._set_stage(day, pid, LifecycleStage.ReleaseConfig)
            return
        try:
            ok = oracle.build_release(self.fleet, pid, (Isa.X86, Isa.Arm)).passed
            why = "release size over capacity"
        except BuildFailed as exc:
            ok, why = False, f"build failed: {exc}"
        if ok:
            self._event(day, "release", pid, "multiarch")
            self._set_stage(day, pid, LifecycleStage.Rollout)
            if oracle.scheduling_blockers(self.fleet, pid):
                self._open_ticket(day, pid, "schedule")
            return
        self._event(day, "release_failed", pid, why)
        if shard is not None:
            fleet, part = rollback_package(self.fleet, shard, pid, day, why)
            if part is not shard:
                self.shards.append(part)
            bp = self.fleet.package(pid).blueprint.path
            self._commit(fleet, day, f"Roll back Arm release for {pid}: {why}",
                         [FileDiff(bp, 0, 1, "-arm_variant_mode")], True, Category.ReleaseAndRolloutConfig,
                         "rollback")
        if why.startswith("release size"):
            self._open_ticket(day, pid, "release")

    # -- the day loop ---------------------------------------------------------

    def step(self, day: int) -> None:
        cfg = self.cfg
        phase = cfg.phase_of(day)
        n_commits = len(self.commits)

        self._admit_credit += cfg.admission.get(phase, 0.0)
        admitted = 0
        while self._admit_credit >= 1.0 and self._queue:
            self._admit_credit -= 1.0
            pid = self._queue.pop(0)
            self._set_stage(day, pid, LifecycleStage.TestFix)
            admitted += 1

        r = rng.stream(cfg.seed, "scripted", day)
        for stream in cfg.streams:
            for k in range(rng.poisson(r, stream.rate(day, cfg.days))):
                self._scripted_commit(day, stream, k, r)

        due = [t for t in self.tickets if t.due == day]
        self.tickets = [t for t in self.tickets if t.due != day]
        for t in sorted(due, key=lambda t: (t.package_id, t.kind)):
            self._manual_fix(day, t)

        for pid in sorted(p for p, s in self.stage.items() if s is LifecycleStage.TestFix):
            failing = self._arm_failures(pid)
            if failing and self.reasoner is not None and not self._agent_already_failed(pid):
                if not self._run_agent(day, failing, f"testfix:{pid}"):
                    # skip further attempts until something in the closure changes
                    self._checked[pid] = (self._version, self._arm_failures(pid), True)
                failing = self._arm_failures(pid)
            if not failing:
                self._set_stage(day, pid, LifecycleStage.MultiarchCi)

        self._lsc_round(day, phase, LifecycleStage.MultiarchCi, "enable_arm_ci")
        self._lsc_round(day, phase, LifecycleStage.ReleaseConfig, "enable_arm_release")

        rollout = sorted(p for p, s in self.stage.items() if s is LifecycleStage.Rollout)
        jobs = [j for p in rollout for j in self._jobs_of.get(p, ()) if j not in self._excluded]
        before = {j: self.qualifier.state(j).stage for j in jobs}
        champ_day(self.fleet, self.qualifier, jobs, day, cfg.seed, cfg.health)
        for j in jobs:
            now = self.qualifier.states[j].stage
            if now is Stage.Ineligible and before[j] is not Stage.Ineligible:
                self._open_ticket(day, self.fleet.job(j).package_id, "runtime")
        for pid in rollout:
            live = [j for j in self._jobs_of.get(pid, ()) if j not in self._excluded]
            if all(self.qualifier.states[j].stage is Stage.Qualified for j in live):
                self._set_stage(day, pid, LifecycleStage.FullProduction)

        counts = tuple(sum(1 for s in self.stage.values() if s is st) for st in LIFECYCLE)
        self.metrics.append(DayMetrics(day, phase, admitted, counts, len(self.qualifier.qualified()),
                                       len(self.fleet.jobs), len(self.commits) - n_commits))

    def run(self) -> "Simulation":
        for day in range(self.cfg.days):
            self.step(day)
        return self


_SCRIPTED_TEMPLATES: dict[Category, tuple[str, str]] = {
    Category.MigrationTooling: ("tools/migration/step_{day}_{k}.py", "+def rewrite(target):"),
    Category.BuildTestInfrastructure: ("benchmarks/arm_targets_{day}_{k}.list", "+//bench:arm_{k}"),
    Category.HardwarePlatformEnablement: ("platforms/arm_host_{day}_{k}.def", "+isa: aarch64"),
    Category.TestExecutionEnvironment: ("infra/tests/BUILD", '+    timeout = "long",'),
    Category.MonitoringAndDashboards: ("monitoring/arm_{day}_{k}.panel", "+panel: arm_vs_x86"),
    Category.Documentation: ("docs/arm_{day}_{k}.md", "+## Arm notes"),
    Category.CodeCleanupDeprecation: ("util/legacy_{day}_{k}.cc", "-// DEPRECATED x86 path"),
    Category.PerformanceOptimization: ("perf/tuning_{day}_{k}/BUILD", '+    fdo_profile = "//fdo:arm",'),
}
