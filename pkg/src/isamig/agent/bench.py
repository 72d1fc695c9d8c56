"""Revert-based benchmark: undo one known fix, let the agent restore green."""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from isamig import oracle, rng
from isamig.agent.loops import (
    DEFAULT_MAX_ROUNDS,
    DEFAULT_STEP_LIMIT,
    AgentTrace,
    Outcome,
    orchestrate,
    verify_goals,
)
from isamig.errors import ConfigError, SizeError
from isamig.fleet.model import Fleet
from isamig.oracle import DefectClass, Edit

BENCH_REPORT_VERSION = 1


@dataclass(frozen=True)
class BenchmarkCase:
    id: str
    fleet: Fleet
    reverted_defect_class: DefectClass
    goals: tuple[str, ...]
    golden_edit: Edit
    package_id: str


def _revert_sites(fleet: Fleet, classes) -> list[tuple[DefectClass, str]]:
    """(class, file) pairs where a canonical fix occurs exactly once in a file."""
    sites = []
    for pkg in fleet.packages:
        for f in pkg.files:
            text = f.text
            for cls in classes:
                if text.count(oracle.DEFECTS[cls].fix) == 1:
                    sites.append((cls, f.path))
    return sites


def _failing_goals(fleet: Fleet, package_id: str, sanitizers: bool) -> tuple[str, ...]:
    pkg = fleet.package(package_id)
    goals = []
    for t in pkg.build_targets:
        if not oracle.build(fleet, t.id, oracle.Isa.Arm).passed:
            goals.append(t.id)
    for t in pkg.test_targets:
        if not oracle.run_test(fleet, t.id, oracle.Isa.Arm, sanitizers).passed:
            goals.append(t.id)
    return tuple(sorted(goals))


def make_case(fleet: Fleet, cls: DefectClass, path: str, case_id: str, sanitizers: bool = True) -> BenchmarkCase | None:
    """Revert the fix at ``path``; None when the revert has no identifiable failing target."""
    spec = oracle.DEFECTS[cls]
    reverted = oracle.apply_fix(fleet, Edit(path, spec.fix, spec.pattern))
    pkg_id = fleet.package_of_path(path).id
    goals = _failing_goals(reverted, pkg_id, sanitizers)
    if not goals:
        return None
    return BenchmarkCase(case_id, reverted, cls, goals, Edit(path, spec.pattern, spec.fix), pkg_id)


def validate_case(case: BenchmarkCase, sanitizers: bool = True) -> list[str]:
    problems = []
    if verify_goals(case.fleet, case.goals, sanitizers):
        problems.append("goals already green before the agent runs")
    restored = oracle.apply_fix(case.fleet, case.golden_edit)
    if not verify_goals(restored, case.goals, sanitizers):
        problems.append("golden edit does not restore green")
    undone = oracle.apply_fix(restored, Edit(case.golden_edit.file, case.golden_edit.replacement,
                                             case.golden_edit.match_text))
    if undone != case.fleet:
        problems.append("revert is not clean")
    return problems


def build_benchmark(fleet: Fleet, n_cases: int, seed: int, class_mix: dict | None = None,
                    sanitizers: bool = True) -> list[BenchmarkCase]:
    """Sample ``n_cases`` revert cases from a fully fixed fleet.

    ``class_mix`` (class -> weight) allocates the case count across classes
    by largest remainder; without it cases are drawn uniformly over sites.
    """
    if n_cases < 0:
        raise ConfigError("n_cases < 0")
    if n_cases == 0:
        return []
    leftover = [d for d in oracle.scan_fleet(fleet) if d.cls in oracle.REPAIRABLE_CLASSES]
    if leftover:
        raise ConfigError(f"fleet is not fully fixed: {len(leftover)} repairable defects present")
    classes = sorted(oracle.REPAIRABLE_CLASSES, key=lambda c: list(DefectClass).index(c))
    sites = _revert_sites(fleet, classes)
    r = rng.stream(seed, "bench", "sites")
    r.shuffle(sites)

    if class_mix:
        mix = {DefectClass(k): v for k, v in class_mix.items() if v > 0}
        quota = rng.largest_remainder(mix, n_cases)
    else:
        quota = None
    cases: list[BenchmarkCase] = []
    taken = {c: 0 for c in classes}
    for cls, path in sites:
        if len(cases) == n_cases:
            break
        if quota is not None and taken[cls] >= quota.get(cls, 0):
            continue
        case = make_case(fleet, cls, path, f"case{len(cases):04d}", sanitizers)
        if case is None:
            continue
        cases.append(case)
        taken[cls] += 1
    if len(cases) < n_cases:
        raise SizeError(f"only {len(cases)} revertible fixes with identifiable targets; {n_cases} requested")
    return cases


def bench_fleet(seed: int, n_packages: int = 500, defect_rate: float = 1.5) -> Fleet:
    """A post-migration fleet: generate with defects, then apply every canonical fix."""
    from isamig.fleet.generate import generate_fleet

    return oracle.fix_all(generate_fleet(seed=seed, n_packages=n_packages, defect_rate=defect_rate))


@dataclass(frozen=True)
class CaseResult:
    case_id: str
    cls: DefectClass
    outcome: Outcome
    steps: int
    agent_outcome: Outcome


@dataclass
class BenchReport:
    cases: list[CaseResult]
    traces: dict[str, AgentTrace] = field(default_factory=dict, repr=False)

    @property
    def per_class(self) -> dict[str, dict]:
        from isamig.taxonomy.categories import CATEGORY_OF_DEFECT

        out = {}
        for cls in DefectClass:
            rows = [c for c in self.cases if c.cls is cls]
            if not rows:
                continue
            fixed = sum(c.outcome is Outcome.Fixed for c in rows)
            out[cls.value] = {
                "category": CATEGORY_OF_DEFECT[cls].label,
                "cases": len(rows),
                "fixed": fixed,
                "success_rate": fixed / len(rows),
            }
        return out

    @property
    def success_rate(self) -> float:
        if not self.cases:
            return 0.0
        return sum(c.outcome is Outcome.Fixed for c in self.cases) / len(self.cases)

    def to_dict(self) -> dict:
        return {
            "bench_report_version": BENCH_REPORT_VERSION,
            "cases": len(self.cases),
            "success_rate": self.success_rate,
            "per_class": self.per_class,
            "outcomes": {o.value: sum(c.outcome is o for c in self.cases) for o in Outcome},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("case_id", "class", "outcome", "steps"))
        for c in self.cases:
            w.writerow((c.case_id, c.cls.value, c.outcome.value, c.steps))
        return buf.getvalue()


def run_case(case: BenchmarkCase, reasoner, step_limit: int = DEFAULT_STEP_LIMIT,
             max_rounds: int = DEFAULT_MAX_ROUNDS, sanitizers: bool = True) -> tuple[CaseResult, AgentTrace]:
    fleet, trace = orchestrate(case.fleet, case.goals, reasoner, step_limit, max_rounds, sanitizers)
    # never trust the agent's own claim
    green = verify_goals(fleet, case.goals, sanitizers)
    if green:
        outcome = Outcome.Fixed
    else:
        outcome = trace.outcome if trace.outcome is not Outcome.Fixed else Outcome.GaveUp
    return CaseResult(case.id, case.reverted_defect_class, outcome, trace.tool_calls, trace.outcome), trace


def run_benchmark(cases, reasoner, step_limit: int = DEFAULT_STEP_LIMIT, parallelism: int = 1,
                  max_rounds: int = DEFAULT_MAX_ROUNDS, sanitizers: bool = True) -> BenchReport:
    """Cases run on isolated snapshots; results are merged in case order."""
    cases = list(cases)

    def one(case):
        return run_case(case, reasoner, step_limit, max_rounds, sanitizers)

    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(one, cases))
    else:
        results = [one(c) for c in cases]
    report = BenchReport([r for r, _ in results])
    report.traces = {r.case_id: t for r, t in results}
    return report
