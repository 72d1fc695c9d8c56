from isamig.agent.bench import (
    BenchmarkCase,
    BenchReport,
    bench_fleet,
    build_benchmark,
    run_benchmark,
    validate_case,
)
from isamig.agent.loops import (
    AgentTrace,
    Outcome,
    check_trace_grammar,
    fix_build,
    fix_test,
    orchestrate,
    verify_goals,
)
from isamig.agent.reasoners import NullReasoner, RuleReasoner, SubprocessReasoner, default_rules, make_reasoner
from isamig.agent.tools import AgentContext, Tool, ToolCall, Workspace

__all__ = [
    "AgentContext", "AgentTrace", "BenchReport", "BenchmarkCase", "NullReasoner", "Outcome", "RuleReasoner",
    "SubprocessReasoner", "Tool", "ToolCall", "Workspace", "bench_fleet", "build_benchmark",
    "check_trace_grammar", "default_rules", "fix_build", "fix_test", "make_reasoner", "orchestrate",
    "run_benchmark", "validate_case", "verify_goals",
]
