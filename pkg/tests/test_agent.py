from __future__ import annotations

import json

import pytest

from helpers import inject, lib_path, with_tests
from isamig import oracle
from isamig.agent import (
    AgentContext,
    NullReasoner,
    Outcome,
    RuleReasoner,
    build_benchmark,
    check_trace_grammar,
    fix_build,
    fix_test,
    orchestrate,
    run_benchmark,
    validate_case,
)
from isamig.agent.bench import bench_fleet
from isamig.agent.tools import MalformedCall, Tool, ToolCall, finish
from isamig.errors import ConfigError, SizeError
from isamig.fleet import Isa
from isamig.oracle import DefectClass


class LiarReasoner:
    """Claims success without touching anything."""

    def next_action(self, ctx):
        return "done", finish("Success")


class FlakyReasoner(RuleReasoner):
    """First reply is garbage, then behaves like the rule table."""

    def __init__(self):
        super().__init__()
        self.calls = 0

    def next_action(self, ctx):
        self.calls += 1
        if self.calls == 1:
            raise MalformedCall("unknown tool 'Compile'")
        return super().next_action(ctx)


def test_green_workspace_needs_no_fixer(clean_fleet):
    pkg = clean_fleet.packages[0]
    fleet, trace = orchestrate(clean_fleet, [pkg.build_targets[0].id], RuleReasoner())
    assert trace.outcome is Outcome.Fixed and trace.fixers == [] and fleet is clean_fleet
    assert check_trace_grammar(trace) == []


def test_single_build_defect_takes_one_fixer(clean_fleet):
    pkg = clean_fleet.packages[0]
    broken = inject(clean_fleet, DefectClass.IntrinsicUse, lib_path(pkg))
    fleet, trace = orchestrate(broken, [pkg.build_targets[0].id], RuleReasoner())
    assert trace.outcome is Outcome.Fixed
    assert [f.loop for f in trace.fixers] == ["build_fixer"]
    assert oracle.build(fleet, pkg.build_targets[0].id, Isa.Arm).passed
    assert len(trace.edits) == 1 and trace.edits[0].defect_class is DefectClass.IntrinsicUse
    assert check_trace_grammar(trace) == []


def test_step_limit(clean_fleet):
    pkg = clean_fleet.packages[0]
    broken = inject(clean_fleet, DefectClass.IntrinsicUse, lib_path(pkg))
    broken = inject(broken, DefectClass.ArchSpecificFlag, pkg.build_file)
    _, outcome = fix_build(broken, pkg.build_targets[0].id, RuleReasoner(), step_limit=1)
    assert outcome is Outcome.StepLimit


def test_arch_flag_fixed_quickly(clean_fleet):
    pkg = clean_fleet.packages[0]
    broken = inject(clean_fleet, DefectClass.ArchSpecificFlag, pkg.build_file)
    fleet, trace = orchestrate(broken, [pkg.build_targets[0].id], RuleReasoner())
    assert trace.outcome is Outcome.Fixed
    assert trace.fixers[0].context.steps_used <= 3


def test_class_without_rule_gives_up(clean_fleet):
    pkg = clean_fleet.packages[0]
    broken = inject(clean_fleet, DefectClass.IntrinsicUse, lib_path(pkg))
    reasoner = RuleReasoner.for_classes([DefectClass.LongDouble])
    fleet, trace = orchestrate(broken, [pkg.build_targets[0].id], reasoner)
    assert trace.outcome is Outcome.GaveUp and fleet == broken
    assert check_trace_grammar(trace) == []


def test_dependency_fix_lands_in_dep(clean_fleet):
    user = next(p for p in clean_fleet.packages if p.deps)
    dep = clean_fleet.package(user.deps[0])
    broken = inject(clean_fleet, DefectClass.UnsupportedDependency, dep.build_file)
    fleet, trace = orchestrate(broken, [user.build_targets[0].id], RuleReasoner())
    assert trace.outcome is Outcome.Fixed
    assert [e.file for e in trace.edits] == [dep.build_file]
    assert any(e.tool == Tool.SearchCode.value for e in trace.events)


@pytest.mark.parametrize("cls", [DefectClass.ExactFpEquality, DefectClass.MemoryOrdering])
def test_test_fixer(clean_fleet, cls):
    pkg = with_tests(clean_fleet)
    t = pkg.test_targets[0]
    path = t.srcs[0] if cls is DefectClass.ExactFpEquality else lib_path(pkg)
    broken = inject(clean_fleet, cls, path)
    fleet, outcome = fix_test(broken, t.id, RuleReasoner())
    assert outcome is Outcome.Fixed
    assert oracle.run_test(fleet, t.id, Isa.Arm, sanitizers=True).passed


def test_malformed_reply_costs_a_step(clean_fleet):
    pkg = clean_fleet.packages[0]
    broken = inject(clean_fleet, DefectClass.IntrinsicUse, lib_path(pkg))
    _, trace = orchestrate(broken, [pkg.build_targets[0].id], FlakyReasoner())
    assert trace.outcome is Outcome.Fixed
    assert any(e.tool == "Malformed" for e in trace.events)
    assert check_trace_grammar(trace) == []


def test_success_claims_are_verified(clean_fleet):
    pkg = clean_fleet.packages[0]
    broken = inject(clean_fleet, DefectClass.IntrinsicUse, lib_path(pkg))
    fleet, outcome = fix_build(broken, pkg.build_targets[0].id, LiarReasoner())
    assert outcome is Outcome.GaveUp and fleet == broken


def test_reasoner_is_pure_over_context(clean_fleet):
    pkg = clean_fleet.packages[0]
    broken = inject(clean_fleet, DefectClass.IntrinsicUse, lib_path(pkg))
    _, trace = orchestrate(broken, [pkg.build_targets[0].id], RuleReasoner())
    ctx = trace.fixers[0].context
    replayed = AgentContext.from_wire(json.loads(ctx.serialize()))
    assert replayed.serialize() == ctx.serialize()
    r = RuleReasoner()
    for n in range(1, ctx.steps_used):
        assert r.next_action(ctx.prefix(n)) == r.next_action(replayed.prefix(n))


def test_tool_call_validation():
    with pytest.raises(MalformedCall):
        ToolCall.parse("Compile", {})
    with pytest.raises(MalformedCall):
        ToolCall.parse("EditCode", {"file": "a"})
    with pytest.raises(MalformedCall):
        ToolCall.parse("Finish", {"status": "Maybe"})
    assert ToolCall.parse("Build", {"target": "//a:b"}).tool is Tool.Build


@pytest.fixture(scope="module")
def bench():
    return bench_fleet(seed=2, n_packages=120)


def test_bench_zero_and_too_many(bench):
    assert build_benchmark(bench, 0, seed=1) == []
    with pytest.raises(SizeError):
        build_benchmark(bench, 100_000, seed=1)


def test_bench_needs_fixed_fleet(small_fleet):
    with pytest.raises(ConfigError):
        build_benchmark(small_fleet, 5, seed=1)


def test_bench_cases_are_valid_and_deterministic(bench):
    cases = build_benchmark(bench, 20, seed=4)
    assert [c.id for c in cases] == [c.id for c in build_benchmark(bench, 20, seed=4)]
    for case in cases:
        assert validate_case(case) == []
        assert not verify_fresh(case)


def verify_fresh(case):
    from isamig.agent import verify_goals

    return verify_goals(case.fleet, case.goals)


def test_bench_class_mix(bench):
    mix = {"IntrinsicUse": 3, "LongDouble": 1}
    cases = build_benchmark(bench, 8, seed=4, class_mix=mix)
    counts = {}
    for c in cases:
        counts[c.reverted_defect_class.value] = counts.get(c.reverted_defect_class.value, 0) + 1
    assert counts == {"IntrinsicUse": 6, "LongDouble": 2}


def test_bench_report_schema(bench):
    cases = build_benchmark(bench, 12, seed=5)
    report = run_benchmark(cases, RuleReasoner())
    doc = json.loads(report.to_json())
    assert doc["bench_report_version"] == 1 and doc["cases"] == 12 and doc["success_rate"] == 1.0
    assert set(doc["outcomes"]) == {"Fixed", "GaveUp", "StepLimit"}
    lines = report.to_csv().splitlines()
    assert lines[0] == "case_id,class,outcome,steps" and len(lines) == 13
    null = run_benchmark(cases, NullReasoner())
    assert null.success_rate == 0.0
    par = run_benchmark(cases, RuleReasoner(), parallelism=3)
    assert par.to_csv() == report.to_csv()
