"""Portability oracle: latent Arm defects as literal text, and the build/test/
release outcomes they cause.

Outcomes depend only on file text.  A defect is *present* iff its class
pattern occurs in a file; nothing about defects is stored anywhere else.

Diagnostic lines have the frozen format::

    ERROR <class> <file>:<line>: <message>
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable

from isamig import rng as rngmod
from isamig.errors import BuildFailed, ConfigError, EditError, InternalError, NotFound
from isamig.fleet.model import Fleet, Isa, Package, SourceFile

LOG_TEMPLATE_VERSION = "1"


class DefectClass(str, enum.Enum):
    IntrinsicUse = "IntrinsicUse"
    LongDouble = "LongDouble"
    ExactFpEquality = "ExactFpEquality"
    ArchSpecificFlag = "ArchSpecificFlag"
    MemoryOrdering = "MemoryOrdering"
    HeapLimit = "HeapLimit"
    UnsupportedDependency = "UnsupportedDependency"
    SchedulingConstraint = "SchedulingConstraint"
    ReleaseSizeOverflow = "ReleaseSizeOverflow"


class SurfacePhase(str, enum.Enum):
    BuildTime = "BuildTime"
    TestTime = "TestTime"
    SanitizerTime = "SanitizerTime"
    ReleaseTime = "ReleaseTime"
    RuntimeOnly = "RuntimeOnly"
    DeployTime = "DeployTime"


@dataclass(frozen=True)
class DefectSpec:
    cls: DefectClass
    phase: SurfacePhase
    pattern: str
    fix: str
    host: str  # "src" | "test" | "BUILD" | "borg"
    message: str
    line: str  # template for an injected line; {p} is the pattern


# One canonical pattern and one canonical fix per class.  A fix never
# contains its own pattern, and no pattern is a substring of another
# class's fix or of any generated filler line.
DEFECTS: dict[DefectClass, DefectSpec] = {
    s.cls: s
    for s in (
        DefectSpec(DefectClass.IntrinsicUse, SurfacePhase.BuildTime,
                   "_mm_add_ps", "portable_simd_add", "src",
                   "use of undeclared identifier '_mm_add_ps' (x86 SSE intrinsic unavailable on aarch64)",
                   "  acc = {p}(acc, lane);"),
        DefectSpec(DefectClass.LongDouble, SurfacePhase.TestTime,
                   "long double", "float128_t", "src",
                   "long double width differs: 80-bit x87 extended on x86, 128-bit IEEE quad on aarch64",
                   "  {p} wide_sum = 0;"),
        DefectSpec(DefectClass.ExactFpEquality, SurfacePhase.TestTime,
                   "EXPECT_EQ(expected, computed)", "EXPECT_NEAR(expected, computed, 1e-9)", "test",
                   "expected 0.333333333 == computed 0.333333343 (exact floating point comparison)",
                   "  {p};"),
        DefectSpec(DefectClass.ArchSpecificFlag, SurfacePhase.BuildTime,
                   "-mavx2", "-O2", "BUILD",
                   "unsupported option '-mavx2' for target 'aarch64-unknown-linux-gnu'",
                   '    copts = ["{p}"],'),
        DefectSpec(DefectClass.MemoryOrdering, SurfacePhase.SanitizerTime,
                   "std::memory_order_relaxed", "std::memory_order_seq_cst", "src",
                   "ThreadSanitizer: data race on atomic published with relaxed ordering",
                   "  ready.store(true, {p});"),
        DefectSpec(DefectClass.HeapLimit, SurfacePhase.RuntimeOnly,
                   "heap_limit_mb = 2048", "heap_limit_mb = 3072", "borg",
                   "out of memory: heap limit tuned for x86 allocation profile",
                   "  {p}"),
        DefectSpec(DefectClass.UnsupportedDependency, SurfacePhase.BuildTime,
                   "//third_party/ipp:x86_only", "//third_party/portable:ipp_compat", "BUILD",
                   "dependency '//third_party/ipp:x86_only' has no aarch64 variant",
                   '    deps = ["{p}"],'),
        DefectSpec(DefectClass.SchedulingConstraint, SurfacePhase.DeployTime,
                   'constraint arch == "x86_64"', 'constraint arch in ("x86_64", "aarch64")', "borg",
                   "unsatisfiable scheduling constraint on aarch64 machines",
                   "  {p}"),
        DefectSpec(DefectClass.ReleaseSizeOverflow, SurfacePhase.ReleaseTime,
                   "embed_debug_symbols = True", "embed_debug_symbols = False", "BUILD",
                   "multiarch release exceeds package capacity limit",
                   "    {p},"),
    )
}

PHASE_OF = {c: s.phase for c, s in DEFECTS.items()}
BUILD_CLASSES = frozenset(c for c, s in DEFECTS.items() if s.phase is SurfacePhase.BuildTime)
TEST_CLASSES = frozenset(c for c, s in DEFECTS.items() if s.phase is SurfacePhase.TestTime)
SANITIZER_CLASSES = frozenset(c for c, s in DEFECTS.items() if s.phase is SurfacePhase.SanitizerTime)
# classes a build/test loop can observe and therefore repair
REPAIRABLE_CLASSES = BUILD_CLASSES | TEST_CLASSES | SANITIZER_CLASSES

DEFAULT_DEFECT_MIX = {
    DefectClass.IntrinsicUse: 0.15,
    DefectClass.LongDouble: 0.10,
    DefectClass.ExactFpEquality: 0.15,
    DefectClass.ArchSpecificFlag: 0.15,
    DefectClass.MemoryOrdering: 0.08,
    DefectClass.HeapLimit: 0.08,
    DefectClass.UnsupportedDependency: 0.12,
    DefectClass.SchedulingConstraint: 0.07,
    DefectClass.ReleaseSizeOverflow: 0.10,
}

DEFAULT_RELEASE_CAPACITY = 100


def format_diagnostic(cls: DefectClass, path: str, line_no: int) -> str:
    return f"ERROR {cls.value} {path}:{line_no}: {DEFECTS[cls].message}"


def parse_diagnostic(line: str) -> tuple[DefectClass, str, int] | None:
    """Inverse of :func:`format_diagnostic`; None for non-diagnostic lines."""
    if not line.startswith("ERROR "):
        return None
    try:
        _, cls, loc, _ = line.split(" ", 3)
        path, line_no = loc.rstrip(":").rsplit(":", 1)
        return DefectClass(cls), path, int(line_no)
    except ValueError:
        return None


@dataclass(frozen=True)
class DefectInstance:
    id: str
    cls: DefectClass
    file_path: str
    line_no: int
    pattern: str

    def present(self, fleet: Fleet) -> bool:
        try:
            return self.pattern in fleet.file(self.file_path).text
        except NotFound:
            return False

    @property
    def phase(self) -> SurfacePhase:
        return PHASE_OF[self.cls]


def scan_file(f: SourceFile) -> tuple[DefectInstance, ...]:
    """Exact-substring scan.  At most one defect per line (first class wins)."""
    out = []
    for i, line in enumerate(f.lines, start=1):
        for cls, spec in DEFECTS.items():
            if spec.pattern in line:
                out.append(DefectInstance(f"{f.path}:{i}", cls, f.path, i, spec.pattern))
                break
    return tuple(out)


def scan_package(pkg: Package) -> list[DefectInstance]:
    return [d for f in pkg.files for d in f.scan]


def scan_fleet(fleet: Fleet) -> list[DefectInstance]:
    return [d for p in fleet.packages for d in scan_package(p)]


def _scan_paths(fleet: Fleet, pkg: Package, paths: Iterable[str]) -> list[DefectInstance]:
    out = []
    for path in paths:
        out.extend(pkg.file(path).scan)
    return out


@dataclass(frozen=True)
class Result:
    status: str  # "Pass" | "Fail"
    log: tuple[str, ...] = ()
    surfaced_defects: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return self.status == "Pass"


BuildResult = TestResult = ReleaseResult = Result

PASS = Result("Pass")


def _result(defects: list[DefectInstance]) -> Result:
    if not defects:
        return PASS
    defects = sorted(set(defects), key=lambda d: (d.file_path, d.line_no))
    return Result(
        "Fail",
        tuple(format_diagnostic(d.cls, d.file_path, d.line_no) for d in defects),
        tuple(d.id for d in defects),
    )


def compiled_defects(fleet: Fleet, target_id: str) -> list[DefectInstance]:
    """Every defect in the files compiled into ``target_id``, including deps."""
    pkg, target, _ = fleet.target(target_id)
    found = _scan_paths(fleet, pkg, pkg.compiled_paths(target))
    for dep_id in fleet.transitive_deps(pkg.id):
        dep = fleet.package(dep_id)
        found.extend(_scan_paths(fleet, dep, dep.compiled_paths()))
    return found


def build(fleet: Fleet, target: str, isa: Isa) -> Result:
    pkg, t, _ = fleet.target(target)
    if isa is not Isa.Arm:
        return PASS
    found = [d for d in compiled_defects(fleet, target) if d.cls in BUILD_CLASSES]
    return _result(found)


def run_test(fleet: Fleet, test_target: str, isa: Isa, sanitizers: bool = False) -> Result:
    pkg, t, kind = fleet.target(test_target)
    if kind != "test":
        raise NotFound(f"{test_target} is not a test target")
    built = build(fleet, test_target, isa)
    if not built.passed:
        return built
    # test-time classes only fire in the package's own compiled files
    own = _scan_paths(fleet, pkg, pkg.compiled_paths(t))
    surfaced = []
    for d in own:
        if isa is Isa.Arm and d.cls in TEST_CLASSES:
            surfaced.append(d)
        elif sanitizers and d.cls in SANITIZER_CLASSES:
            surfaced.append(d)
    return _result(surfaced)


def build_release(fleet: Fleet, package_id: str, isas: Iterable[Isa],
                  capacity_limit: int = DEFAULT_RELEASE_CAPACITY) -> Result:
    pkg = fleet.package(package_id)
    isas = frozenset(isas)
    for isa in sorted(isas, key=lambda i: i.value):
        for t in pkg.build_targets:
            res = build(fleet, t.id, isa)
            if not res.passed:
                raise BuildFailed(res)
    if len(isas) < 2:
        return PASS
    if pkg.blueprint.release_size_units * len(isas) <= capacity_limit:
        return PASS
    overflow = [d for d in scan_package(pkg) if d.cls is DefectClass.ReleaseSizeOverflow]
    return _result(overflow)


def runtime_defects(fleet: Fleet, package_id: str) -> list[DefectInstance]:
    """Defects that reach production: heap limits in deploy config, plus
    relaxed-ordering races in the package's compiled code."""
    pkg = fleet.package(package_id)
    compiled = set(pkg.compiled_paths())
    out = []
    for d in scan_package(pkg):
        if d.cls is DefectClass.HeapLimit:
            out.append(d)
        elif d.cls is DefectClass.MemoryOrdering and d.file_path in compiled:
            out.append(d)
    return out


def scheduling_blockers(fleet: Fleet, package_id: str) -> list[DefectInstance]:
    return [d for d in scan_package(fleet.package(package_id))
            if d.cls is DefectClass.SchedulingConstraint]


@dataclass(frozen=True)
class Edit:
    file: str
    match_text: str
    replacement: str

    def as_args(self) -> dict:
        return {"file": self.file, "match_text": self.match_text, "replacement": self.replacement}


def canonical_edit(defect: DefectInstance) -> Edit:
    return Edit(defect.file_path, DEFECTS[defect.cls].pattern, DEFECTS[defect.cls].fix)


def apply_edit(fleet: Fleet, edit: Edit) -> tuple[Fleet, SourceFile, SourceFile]:
    """Replace the first occurrence of ``match_text``; returns (fleet', old, new)."""
    try:
        old = fleet.file(edit.file)
    except NotFound as exc:
        raise EditError(str(exc)) from None
    if not edit.match_text:
        raise EditError("empty match_text")
    text = old.text
    if edit.match_text not in text:
        raise EditError(f"{edit.match_text!r} not found in {edit.file}")
    new_text = text.replace(edit.match_text, edit.replacement, 1)
    new = SourceFile(old.path, tuple(new_text.split("\n")) if new_text else ())
    return fleet.with_file(new), old, new


def apply_fix(fleet: Fleet, target: "DefectInstance | str | Edit | dict") -> Fleet:
    """Apply a defect's canonical fix (by instance or id) or an explicit edit."""
    if isinstance(target, dict):
        target = Edit(target["file"], target["match_text"], target["replacement"])
    if isinstance(target, str):
        path, _, line = target.rpartition(":")
        try:
            f = fleet.file(path)
        except NotFound as exc:
            raise EditError(str(exc)) from None
        matches = [d for d in f.scan if d.id == target]
        if not matches:
            raise EditError(f"defect {target} is not present")
        target = matches[0]
    if isinstance(target, DefectInstance):
        target = canonical_edit(target)
    return apply_edit(fleet, target)[0]


def fix_all(fleet: Fleet, classes: Iterable[DefectClass] | None = None) -> Fleet:
    """Apply the canonical fix to every present defect (optionally of some classes)."""
    wanted = set(classes) if classes is not None else set(DefectClass)
    for d in scan_fleet(fleet):
        if d.cls in wanted and d.present(fleet):
            fleet = apply_fix(fleet, d)
    return fleet


# --- injection -------------------------------------------------------------


@dataclass
class InjectionReport:
    injected: list[DefectInstance] = field(default_factory=list)


def _hosts(pkg: Package, host: str) -> list[SourceFile]:
    if host == "BUILD":
        return [f for f in pkg.files if f.path == pkg.build_file]
    if host == "borg":
        return [f for f in pkg.files if f.path.endswith(".borg")]
    lib = {s for t in pkg.build_targets for s in t.srcs}
    tests = {s for t in pkg.test_targets for s in t.srcs}
    if host == "src":
        return [f for f in pkg.files if f.path in lib]
    if host == "test":
        return [f for f in pkg.files if f.path in tests]
    raise InternalError(f"unknown host kind {host}")


def validate_mix(defect_mix: dict) -> dict[DefectClass, float]:
    try:
        mix = {DefectClass(k): float(v) for k, v in defect_mix.items()}
    except ValueError as exc:
        raise ConfigError(f"defect_mix: {exc}") from None
    if any(v < 0 for v in mix.values()):
        raise ConfigError("defect_mix has a negative weight")
    if abs(sum(mix.values()) - 1.0) > 1e-9:
        raise ConfigError(f"defect_mix sums to {sum(mix.values())!r}, expected 1")
    return mix


def inject_defects(fleet: Fleet, defect_mix: dict, rate_per_package: float, seed: int,
                   report: InjectionReport | None = None) -> Fleet:
    """Insert defect lines into package sources.

    Per-package defect counts are Poisson(rate).  The class of each defect
    comes from a largest-remainder allocation of the total over
    ``defect_mix``, shuffled, so the class histogram tracks the mix to within
    one defect per class.  A defect that cannot be hosted (no file of the
    right kind without that pattern) is carried to the next package.
    """
    if rate_per_package < 0:
        raise ConfigError("rate_per_package < 0")
    mix = validate_mix(defect_mix)
    if rate_per_package == 0:
        return fleet
    r = rngmod.stream(seed, "inject")
    ids = sorted(p.id for p in fleet.packages)
    counts = [rngmod.poisson(r, rate_per_package) for _ in ids]
    total = sum(counts)
    alloc = rngmod.largest_remainder({c: w for c, w in mix.items() if w > 0}, total)
    classes = [c for c in DefectClass for _ in range(alloc.get(c, 0))]
    r.shuffle(classes)

    queue = iter(classes)
    carry: list[DefectClass] = []
    for pid, n in zip(ids, counts):
        todo = carry + [next(queue) for _ in range(n)]
        carry = []
        for cls in todo:
            pkg = fleet.package(pid)
            placed = _place(pkg, cls, r)
            if placed is None:
                carry.append(cls)
                continue
            new_file, inst = placed
            fleet = fleet.with_file(new_file)
            if report is not None:
                report.injected.append(inst)
    # wrap around once for leftovers
    for cls in carry:
        for pid in ids:
            placed = _place(fleet.package(pid), cls, r)
            if placed is not None:
                fleet = fleet.with_file(placed[0])
                if report is not None:
                    report.injected.append(placed[1])
                break
        else:
            raise InternalError(f"no host left for a {cls.value} defect")
    return fleet


def _place(pkg: Package, cls: DefectClass, r) -> tuple[SourceFile, DefectInstance] | None:
    spec = DEFECTS[cls]
    hosts = [f for f in _hosts(pkg, spec.host) if spec.pattern not in f.text]
    if not hosts:
        return None
    f = hosts[r.randrange(len(hosts))]
    # insert inside the body: after the first line, before the last
    lo, hi = (1, max(1, len(f.lines) - 1)) if len(f.lines) >= 2 else (len(f.lines), len(f.lines))
    at = r.randint(lo, hi)
    line = spec.line.format(p=spec.pattern)
    lines = f.lines[:at] + (line,) + f.lines[at:]
    new = SourceFile(f.path, lines)
    hits = [d for d in new.scan if d.cls is cls]
    if len(hits) != 1:
        raise InternalError(f"pattern collision injecting {cls.value} into {f.path}")
    return new, hits[0]
