"""Large-scale changes: generate a mega-change from a template, shard it by
owner, gate every shard on CI for both ISAs, draw owner approval, submit,
and roll back.

Shards keep an append-only event list; :func:`lsc_stats` derives every
rate from those events alone.
"""

from __future__ import annotations

import csv
import enum
import fnmatch
import io
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

from isamig import oracle, rng
from isamig.errors import FormatError, IntegrityError, NotFound, SpecError, StateError
from isamig.fleet.model import PHASES, Blueprint, Fleet, Isa, SourceFile

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

ARM_VARIANT_LINE = "arm_variant_mode = ::blueprint::VariantMode::VARIANT_MODE_RELEASE,"
ARM_CI_LINE = "arm_ci_mode = ::blueprint::CiMode::CI_MODE_PRESUBMIT,"

BLUEPRINT_TEMPLATES = ("enable_arm_release", "enable_arm_ci")


class ShardState(str, enum.Enum):
    Pending = "Pending"
    CiRunning = "CiRunning"
    AwaitingApproval = "AwaitingApproval"
    Refused = "Refused"
    Submitted = "Submitted"
    RolledBack = "RolledBack"


_ALLOWED = {
    ShardState.Pending: {ShardState.CiRunning},
    ShardState.CiRunning: {ShardState.Pending, ShardState.AwaitingApproval},
    ShardState.AwaitingApproval: {ShardState.Refused, ShardState.Submitted},
    ShardState.Refused: {ShardState.Pending},
    ShardState.Submitted: {ShardState.RolledBack},
    ShardState.RolledBack: {ShardState.Pending},
}


@dataclass(frozen=True)
class ChangeSpec:
    id: str
    predicate: str
    template: str
    phase_label: str = "Early"
    global_approval: bool = False

    def __post_init__(self):
        if self.phase_label not in PHASES:
            raise SpecError(f"{self.id}: unknown phase {self.phase_label!r}")
        kind, _, arg = self.predicate.partition(":")
        if kind not in ("blueprint", "files") or not arg:
            raise SpecError(f"{self.id}: predicate must be 'blueprint:<globs>' or 'files:<globs>'")
        if self.template in BLUEPRINT_TEMPLATES:
            if kind != "blueprint":
                raise SpecError(f"{self.id}: template {self.template} needs a blueprint predicate")
        elif self.template.startswith("replace:"):
            if kind != "files":
                raise SpecError(f"{self.id}: replace template needs a files predicate")
            old, sep, new = self.template[len("replace:"):].partition("=>")
            if not sep or not old:
                raise SpecError(f"{self.id}: replace template is 'replace:<old>=><new>'")
            if old in new:
                raise SpecError(f"{self.id}: replacement contains the match text; not idempotent")
        else:
            raise SpecError(f"{self.id}: unknown template {self.template!r}")

    @property
    def globs(self) -> list[str]:
        return [g for g in self.predicate.partition(":")[2].split(",") if g]


def load_change_spec(path) -> ChangeSpec:
    try:
        doc = tomllib.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise FormatError(f"{path}: {exc}") from None
    missing = [k for k in ("predicate", "template") if k not in doc]
    if missing:
        raise FormatError(f"{path}: missing {', '.join(missing)}")
    return ChangeSpec(
        id=str(doc.get("id", Path(path).stem)),
        predicate=doc["predicate"],
        template=doc["template"],
        phase_label=doc.get("phase", "Early"),
        global_approval=bool(doc.get("global_approval", False)),
    )


@dataclass(frozen=True)
class ChangeEdit:
    """One file edit.  ``apply`` is computed against the current fleet, so
    applying it twice is the same as applying it once."""

    package_id: str
    file: str
    template: str
    diff: str
    lines_added: int
    lines_removed: int

    def apply(self, fleet: Fleet) -> Fleet:
        if self.template in BLUEPRINT_TEMPLATES:
            bp = fleet.package(self.package_id).blueprint
            new = _blueprint_after(bp, self.template)
            return fleet if new == bp else fleet.with_blueprint(new)
        old, _, repl = self.template[len("replace:"):].partition("=>")
        f = fleet.file(self.file)
        if old not in f.text:
            return fleet
        text = f.text.replace(old, repl)
        return fleet.with_file(SourceFile(f.path, tuple(text.split("\n"))))


def _blueprint_after(bp: Blueprint, template: str) -> Blueprint:
    ci = dict(bp.ci_enabled)
    ci[Isa.Arm] = True
    if template == "enable_arm_ci":
        return replace(bp, ci_enabled=ci)
    return replace(bp, variant_modes=bp.variant_modes | {Isa.Arm}, ci_enabled=ci)


@dataclass(frozen=True)
class MegaChange:
    spec: ChangeSpec
    edits: tuple[ChangeEdit, ...]

    @property
    def files(self) -> set[str]:
        return {e.file for e in self.edits}


def generate_change(fleet: Fleet, spec: ChangeSpec) -> MegaChange:
    edits = []
    if spec.template in BLUEPRINT_TEMPLATES:
        for pkg in fleet.packages:
            if not any(fnmatch.fnmatchcase(pkg.id, g) for g in spec.globs):
                continue
            bp = pkg.blueprint
            if _blueprint_after(bp, spec.template) == bp:
                continue
            line = ARM_VARIANT_LINE if spec.template == "enable_arm_release" else ARM_CI_LINE
            diff = f"--- a/{bp.path}\n+++ b/{bp.path}\n+{line}"
            edits.append(ChangeEdit(pkg.id, bp.path, spec.template, diff, 1, 0))
    else:
        old, _, new = spec.template[len("replace:"):].partition("=>")
        for pkg in fleet.packages:
            for f in pkg.files:
                if not any(fnmatch.fnmatchcase(f.path, g) for g in spec.globs):
                    continue
                hits = [ln for ln in f.lines if old in ln]
                if not hits:
                    continue
                body = "\n".join(f"-{ln}\n+{ln.replace(old, new)}" for ln in hits)
                diff = f"--- a/{f.path}\n+++ b/{f.path}\n{body}"
                edits.append(ChangeEdit(pkg.id, f.path, spec.template, diff, len(hits), len(hits)))
    edits.sort(key=lambda e: e.file)
    return MegaChange(spec, tuple(edits))


@dataclass
class ShardEvent:
    day: int
    spec_id: str
    owner_id: str
    phase: str
    before: ShardState
    after: ShardState
    detail: str = ""


@dataclass
class Shard:
    spec_id: str
    owner_id: str
    edits: tuple[ChangeEdit, ...]
    phase_label: str
    global_approval: bool
    state: ShardState = ShardState.Pending
    attempts: int = 0
    ci_result: str = ""
    ci_log: tuple[str, ...] = ()
    events: list[ShardEvent] = field(default_factory=list)
    # pre-submit copies used by rollback
    _undo: dict = field(default_factory=dict, repr=False)

    @property
    def package_ids(self) -> list[str]:
        return sorted({e.package_id for e in self.edits})

    def _move(self, to: ShardState, day: int, detail: str = "") -> None:
        if to not in _ALLOWED[self.state]:
            raise StateError(f"shard {self.spec_id}/{self.owner_id}: {self.state.value} -> {to.value}")
        self.events.append(ShardEvent(day, self.spec_id, self.owner_id, self.phase_label, self.state, to, detail))
        self.state = to


@dataclass
class ShardedChange:
    spec: ChangeSpec
    shards: list[Shard]

    @property
    def spec_id(self) -> str:
        return self.spec.id


def shard_by_owner(fleet: Fleet, mega: MegaChange) -> ShardedChange:
    by_owner: dict[str, list[ChangeEdit]] = {}
    for e in mega.edits:
        try:
            pkg = fleet.package_of_path(e.file)
            fleet.owner(pkg.owner_id)
        except NotFound as exc:
            raise IntegrityError(f"orphan file {e.file}: {exc}") from None
        if pkg.id != e.package_id:
            raise IntegrityError(f"edit {e.file} claims package {e.package_id}, owned by {pkg.id}")
        by_owner.setdefault(pkg.owner_id, []).append(e)
    shards = [
        Shard(mega.spec.id, owner, tuple(edits), mega.spec.phase_label, mega.spec.global_approval)
        for owner, edits in sorted(by_owner.items())
    ]
    return ShardedChange(mega.spec, shards)


@dataclass
class ShardPolicy:
    phase: str | None = None  # defaults to the spec's phase label
    refusal: dict | None = None  # phase -> p; overrides the owner's policy
    sanitizers: bool = True
    day: int = 0
    seed: int = 0


@dataclass(frozen=True)
class ShardOutcome:
    state: ShardState
    ci_result: str
    ci_log: tuple[str, ...]
    day: int


def ci_targets(fleet: Fleet, package_ids: Iterable[str]) -> tuple[list[str], list[str]]:
    """Build and test targets of the edited packages and their direct reverse deps."""
    scope = set(package_ids)
    for pid in list(scope):
        scope.update(fleet.reverse_deps(pid))
    builds, tests = [], []
    for pid in sorted(scope):
        pkg = fleet.package(pid)
        builds += [t.id for t in pkg.build_targets]
        tests += [t.id for t in pkg.test_targets]
    return builds, tests


def run_ci(fleet: Fleet, package_ids: Iterable[str], sanitizers: bool = True) -> tuple[bool, tuple[str, ...]]:
    """x86 CI for the whole scope; Arm CI only for packages that opted in."""
    builds, tests = ci_targets(fleet, package_ids)
    log: list[str] = []
    for isa in (Isa.X86, Isa.Arm):
        for t in builds:
            if isa is Isa.Arm and not _arm_ci(fleet, t):
                continue
            res = oracle.build(fleet, t, isa)
            if not res.passed:
                log.append(f"FAIL {t} [{isa.value}]")
                log.extend(res.log)
        for t in tests:
            if isa is Isa.Arm and not _arm_ci(fleet, t):
                continue
            res = oracle.run_test(fleet, t, isa, sanitizers)
            if not res.passed:
                log.append(f"FAIL {t} [{isa.value}]")
                log.extend(res.log)
    return not log, tuple(log)


def _arm_ci(fleet: Fleet, target: str) -> bool:
    return bool(fleet.target(target)[0].blueprint.ci_enabled.get(Isa.Arm))


def failing_ci_targets(log: Iterable[str]) -> list[str]:
    """Target ids named by ``FAIL`` lines of a CI log."""
    out = []
    for line in log:
        if line.startswith("FAIL "):
            t = line.split()[1]
            if t not in out:
                out.append(t)
    return out


def apply_edits(fleet: Fleet, edits: Iterable[ChangeEdit]) -> Fleet:
    for e in edits:
        fleet = e.apply(fleet)
    return fleet


def run_shard_pipeline(fleet: Fleet, shard: Shard, policy: ShardPolicy | None = None) -> tuple[Fleet, ShardOutcome]:
    """CI on both ISAs, then an approval draw, then submit.

    A CI failure returns the shard to Pending with the failing log attached;
    that is where a repair agent takes over.
    """
    policy = policy or ShardPolicy()
    day = policy.day
    if policy.phase is not None:
        shard.phase_label = policy.phase
    if shard.state in (ShardState.Refused, ShardState.RolledBack):
        shard._move(ShardState.Pending, day, "retry")
    if shard.state is not ShardState.Pending:
        raise StateError(f"shard {shard.spec_id}/{shard.owner_id} is {shard.state.value}, not Pending")
    shard.attempts += 1
    shard._move(ShardState.CiRunning, day)
    candidate = apply_edits(fleet, shard.edits)
    ok, log = run_ci(candidate, shard.package_ids, policy.sanitizers)
    shard.ci_result = "pass" if ok else "fail"
    shard.ci_log = log
    if not ok:
        shard._move(ShardState.Pending, day, "ci_failed")
        return fleet, ShardOutcome(shard.state, shard.ci_result, log, day)
    shard._move(ShardState.AwaitingApproval, day)
    if not shard.global_approval:
        phase = shard.phase_label
        owner = fleet.owner(shard.owner_id)
        p = policy.refusal[phase] if policy.refusal is not None else owner.refusal_probability(phase)
        draw = rng.unit(policy.seed, "approval", shard.spec_id, shard.owner_id, shard.attempts)
        if draw < p:
            shard._move(ShardState.Refused, day, f"p={p}")
            return fleet, ShardOutcome(shard.state, shard.ci_result, log, day)
    # optimistic re-validation: edits are recomputed against the live fleet
    shard._undo = {e.package_id: fleet.package(e.package_id) for e in shard.edits}
    fleet = apply_edits(fleet, shard.edits)
    shard._move(ShardState.Submitted, day, "global" if shard.global_approval else "approved")
    return fleet, ShardOutcome(shard.state, shard.ci_result, log, day)


def rollback(fleet: Fleet, shard: Shard, day: int = 0, reason: str = "") -> Fleet:
    if shard.state is not ShardState.Submitted:
        raise StateError(f"cannot roll back shard in state {shard.state.value}")
    for e in shard.edits:
        prior = shard._undo[e.package_id]
        if e.template in BLUEPRINT_TEMPLATES:
            fleet = fleet.with_blueprint(prior.blueprint)
        else:
            fleet = fleet.with_file(prior.file(e.file))
    shard._move(ShardState.RolledBack, day, reason)
    return fleet


def rollback_package(fleet: Fleet, shard: Shard, package_id: str, day: int = 0, reason: str = "") -> tuple[Fleet, Shard]:
    """Application-level rollback: split ``package_id``'s edits out of a
    submitted shard into their own shard and roll that back."""
    if shard.state is not ShardState.Submitted:
        raise StateError(f"cannot roll back shard in state {shard.state.value}")
    mine = tuple(e for e in shard.edits if e.package_id == package_id)
    if not mine:
        raise NotFound(f"{package_id} not in shard {shard.spec_id}/{shard.owner_id}")
    if len(mine) == len(shard.edits):
        return rollback(fleet, shard, day, reason), shard
    shard.edits = tuple(e for e in shard.edits if e.package_id != package_id)
    part = Shard(shard.spec_id, shard.owner_id, mine, shard.phase_label, shard.global_approval,
                 state=ShardState.Submitted, attempts=shard.attempts, ci_result=shard.ci_result)
    part.events.append(ShardEvent(day, shard.spec_id, shard.owner_id, shard.phase_label, ShardState.Submitted,
                                  ShardState.Submitted, f"split:{package_id}"))
    part._undo = {package_id: shard._undo.pop(package_id)}
    return rollback(fleet, part, day, reason), part


@dataclass
class LscStats:
    refusal_rate: float
    rollback_rate: float
    submitted_count: int
    refused_count: int
    rolled_back_count: int
    approval_draws: int
    per_phase: dict

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _rate(num: int, den: int) -> float:
    return num / den if den else 0.0


def lsc_stats(events: Iterable[ShardEvent]) -> LscStats:
    """Rates derived from shard events.

    refusal_rate = refusals / approval decisions (refused + submitted);
    rollback_rate = rollbacks / submissions.
    """
    per: dict[str, dict[str, int]] = {}
    for ev in events:
        bucket = per.setdefault(ev.phase, {"refused": 0, "submitted": 0, "rolled_back": 0})
        if ev.after is ShardState.Refused:
            bucket["refused"] += 1
        elif ev.after is ShardState.Submitted and ev.before is ShardState.AwaitingApproval:
            bucket["submitted"] += 1
        elif ev.after is ShardState.RolledBack:
            bucket["rolled_back"] += 1
    ref = sum(b["refused"] for b in per.values())
    sub = sum(b["submitted"] for b in per.values())
    rb = sum(b["rolled_back"] for b in per.values())
    return LscStats(
        refusal_rate=_rate(ref, ref + sub),
        rollback_rate=_rate(rb, sub),
        submitted_count=sub,
        refused_count=ref,
        rolled_back_count=rb,
        approval_draws=ref + sub,
        per_phase={k: {**v, "refusal_rate": _rate(v["refused"], v["refused"] + v["submitted"]),
                       "rollback_rate": _rate(v["rolled_back"], v["submitted"])}
                   for k, v in sorted(per.items())},
    )


SHARD_CSV_HEADER = ("spec_id", "owner", "state", "ci_result", "day")


def shard_outcomes_csv(rows: Iterable[tuple]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SHARD_CSV_HEADER)
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


SHARD_EVENT_CSV_HEADER = ("day", "spec_id", "owner", "phase", "before", "after", "detail")


def shard_events_csv(events: Iterable[ShardEvent]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SHARD_EVENT_CSV_HEADER)
    for e in events:
        w.writerow((e.day, e.spec_id, e.owner_id, e.phase, e.before.value, e.after.value, e.detail))
    return buf.getvalue()


def read_shard_events_csv(text: str) -> list[ShardEvent]:
    rows = list(csv.DictReader(io.StringIO(text)))
    return [ShardEvent(int(r["day"]), r["spec_id"], r["owner"], r["phase"], ShardState(r["before"]),
                       ShardState(r["after"]), r["detail"]) for r in rows]
