"""Commit classification: an ordered heuristic rule table and an external
classifier speaking the NDJSON protocol."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Iterable, Protocol

from isamig.taxonomy.categories import Category
from isamig.taxonomy.model import CommitRecord

C = Category
DOC_SUFFIXES = (".md", ".rst", ".txt", ".adoc")
TEST_PATH = re.compile(r"(_test\.\w+$|/tests?/|/testdata/|^testdata/)")


def _is_doc(path: str) -> bool:
    return path.endswith(DOC_SUFFIXES) or path.startswith("docs/") or "/docs/" in path


def _is_build(path: str) -> bool:
    base = path.rsplit("/", 1)[-1]
    return base in ("BUILD", "BUILD.bazel") or base.endswith(".bzl")


@dataclass(frozen=True)
class Rule:
    category: Category
    description: str
    test: Callable[["_View"], bool]


@dataclass(frozen=True)
class _View:
    paths: tuple[str, ...]
    hunks: str
    message: str

    def hunk_has(self, *words: str) -> bool:
        return any(w in self.hunks for w in words)

    def path_has(self, *words: str) -> bool:
        return any(w in p for p in self.paths for w in words)

    def says(self, *words: str) -> bool:
        text = self.message.lower()
        return any(w in text for w in words)


RULES: tuple[Rule, ...] = (
    Rule(C.Documentation, "every touched file is documentation",
         lambda v: all(_is_doc(p) for p in v.paths)),
    Rule(C.ReleaseAndRolloutConfig, "release definitions: blueprints, variant modes, release size",
         lambda v: v.path_has(".blueprint") or v.hunk_has("arm_variant_mode", "embed_debug_symbols")),
    Rule(C.SchedulingAndProvisioning, "deploy configs: placement constraints, heap limits, capacity",
         lambda v: v.path_has(".borg") or v.hunk_has("constraint arch", "heap_limit_mb", "arm_capacity")),
    Rule(C.IntrinsicsAndVectorCode, "x86 intrinsics or their portable replacements",
         lambda v: v.hunk_has("_mm_", "_mm256_", "portable_simd", "immintrin.h", "arm_neon.h")),
    Rule(C.DataRepresentation, "extended precision types",
         lambda v: v.hunk_has("long double", "float128")),
    Rule(C.MemoryModel, "atomics ordering",
         lambda v: v.hunk_has("memory_order", "std::atomic_thread_fence")),
    Rule(C.TestFixes, "assertion or test data changes in test files",
         lambda v: any(TEST_PATH.search(p) for p in v.paths)
         and (v.hunk_has("EXPECT_NEAR", "EXPECT_EQ", "ASSERT_", "golden") or v.path_has("testdata/"))),
    Rule(C.TestExecutionEnvironment, "test runner settings: timeouts, sharding, sanitizers",
         lambda v: v.hunk_has("timeout =", "shard_count", "test_env", "size = \"", "sanitizer", "flaky")),
    Rule(C.PlatformSpecificConditionals, "architecture preprocessor guards",
         lambda v: v.hunk_has("__x86_64__", "__aarch64__", "__arm__", "__i386__")),
    Rule(C.PerformanceOptimization, "profile guided or tuning changes",
         lambda v: v.hunk_has("fdo_profile", "-mcpu", "-march", "__builtin_prefetch", "likely(")
         or v.says("performance", "speedup", "fdo")),
    Rule(C.BuildTestInfrastructure, "benchmark target lists and CI plumbing",
         lambda v: v.path_has("benchmarks/", "tap/", "ci/", "_benchmark")),
    Rule(C.MigrationTooling, "porting and migration tools",
         lambda v: v.path_has("tools/migration", "porting/", "tools/port") or v.says("porting tool", "migration tool")),
    Rule(C.MonitoringAndDashboards, "monitoring and dashboards",
         lambda v: v.path_has("monitoring/", "dashboards/") or v.says("dashboard", "monitoring")),
    Rule(C.CodeCleanupDeprecation, "removal of deprecated code",
         lambda v: v.says("deprecat", "remove unused", "cleanup") or v.hunk_has("DEPRECATED")),
    Rule(C.HardwarePlatformEnablement, "hardware and platform definitions",
         lambda v: v.path_has("platforms/", "hardware/") or v.says("hardware", "platform definition")),
    Rule(C.BuildAndConfigFiles, "remaining BUILD and Starlark edits",
         lambda v: any(_is_build(p) for p in v.paths)),
)


def classify_heuristic(commit: CommitRecord) -> Category:
    """First matching rule wins; commits with no diff are Uncategorized."""
    if not commit.file_diffs:
        return C.Uncategorized
    view = _View(commit.paths, "\n".join(d.hunk for d in commit.file_diffs), commit.message)
    for rule in RULES:
        if rule.test(view):
            return rule.category
    return C.Uncategorized


class Classifier(Protocol):
    def classify_batch(self, commits: list[CommitRecord]) -> list[Category]: ...


class HeuristicClassifier:
    name = "heuristic"

    def classify_batch(self, commits: list[CommitRecord]) -> list[Category]:
        return [classify_heuristic(c) for c in commits]


@dataclass(frozen=True)
class ClassifyWarning:
    commit_id: str
    message: str


class SubprocessClassifier:
    """External classifier: one ``classify`` round trip per batch.

    Request ``{"kind": "classify", "commits": [...]}``; reply
    ``{"labels": [...]}`` with one label per commit (number or name).
    Unknown labels, and every commit of a failed batch, fall back to
    Uncategorized with a warning.
    """

    name = "subprocess"

    def __init__(self, argv, timeout: float = 30.0):
        from isamig.protocol import StdioPeer

        self.peer = StdioPeer(argv, timeout=timeout)
        self.warnings: list[ClassifyWarning] = []

    @property
    def round_trips(self) -> int:
        return self.peer.round_trips

    def classify_batch(self, commits: list[CommitRecord]) -> list[Category]:
        from isamig.protocol import ProtocolError

        try:
            reply = self.peer.request({"kind": "classify", "commits": [c.to_dict() for c in commits]})
            labels = reply.get("labels")
            if not isinstance(labels, list) or len(labels) != len(commits):
                raise ProtocolError("labels missing or of wrong length")
        except ProtocolError as exc:
            self.warnings.extend(ClassifyWarning(c.id, str(exc)) for c in commits)
            return [C.Uncategorized] * len(commits)
        out = []
        for c, label in zip(commits, labels):
            try:
                out.append(Category.parse(label))
            except ValueError:
                self.warnings.append(ClassifyWarning(c.id, f"unknown label {label!r}"))
                out.append(C.Uncategorized)
        return out

    def close(self) -> None:
        self.peer.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def classify(commit: CommitRecord, classifier: Classifier | None = None) -> Category:
    return (classifier or HeuristicClassifier()).classify_batch([commit])[0]


def batch_classify(commits: Iterable[CommitRecord], batch_size: int = 100,
                   classifier: Classifier | None = None) -> list[tuple[str, Category]]:
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    classifier = classifier or HeuristicClassifier()
    commits = list(commits)
    out: list[tuple[str, Category]] = []
    for i in range(0, len(commits), batch_size):
        chunk = commits[i:i + batch_size]
        out.extend(zip((c.id for c in chunk), classifier.classify_batch(chunk)))
    return out


def make_classifier(spec: str):
    """``heuristic`` | ``cmd:<command line>``."""
    import shlex

    if spec == "heuristic":
        return HeuristicClassifier()
    if spec.startswith("cmd:"):
        return SubprocessClassifier(shlex.split(spec[4:]))
    raise ValueError(f"unknown classifier {spec!r}")
