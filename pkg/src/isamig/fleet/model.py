"""Fleet data model: packages, owners, targets, Blueprints, jobs and cells.

All types are frozen.  A :class:`Fleet` is an immutable snapshot; every
mutation (an edit, a Blueprint change) produces a new snapshot that shares
untouched packages with the old one.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Mapping

from isamig.errors import IntegrityError, NotFound


class Isa(str, enum.Enum):
    X86 = "X86"
    Arm = "Arm"


PHASES = ("Early", "ScaleUp", "Final")


@dataclass(frozen=True)
class Owner:
    id: str
    refusal_policy: Mapping[str, float]

    def __post_init__(self):
        for phase, p in self.refusal_policy.items():
            if not 0.0 <= p <= 1.0:
                raise IntegrityError(f"owner {self.id}: refusal_policy[{phase}]={p} outside [0,1]")

    def refusal_probability(self, phase: str) -> float:
        return float(self.refusal_policy.get(phase, 0.0))


@dataclass(frozen=True)
class SourceFile:
    path: str
    lines: tuple[str, ...]

    @property
    def text(self) -> str:
        return "\n".join(self.lines)

    @cached_property
    def scan(self):
        """Defects present in this file, cached per immutable file value."""
        from isamig.oracle import scan_file

        return scan_file(self)


@dataclass(frozen=True)
class Target:
    id: str
    srcs: tuple[str, ...]


@dataclass(frozen=True)
class Blueprint:
    package_id: str
    variant_modes: frozenset
    ci_enabled: Mapping[Isa, bool]
    release_size_units: int

    def __post_init__(self):
        if Isa.X86 not in self.variant_modes:
            raise IntegrityError(f"blueprint {self.package_id}: X86 missing from variant_modes")
        if self.release_size_units < 0:
            raise IntegrityError(f"blueprint {self.package_id}: negative release size")

    @property
    def arm_enabled(self) -> bool:
        return Isa.Arm in self.variant_modes

    @property
    def path(self) -> str:
        return blueprint_path(self.package_id)


def blueprint_path(package_id: str) -> str:
    return f"{package_id}/{package_id}.blueprint"


@dataclass(frozen=True)
class Package:
    id: str
    owner_id: str
    files: tuple[SourceFile, ...]
    build_targets: tuple[Target, ...]
    test_targets: tuple[Target, ...]
    deps: tuple[str, ...]
    blueprint: Blueprint

    def __post_init__(self):
        paths = {f.path for f in self.files}
        for t in self.build_targets + self.test_targets:
            for src in t.srcs:
                if src not in paths:
                    raise IntegrityError(f"target {t.id} references {src} outside package {self.id}")

    def file(self, path: str) -> SourceFile:
        for f in self.files:
            if f.path == path:
                return f
        raise NotFound(f"no file {path} in package {self.id}")

    def with_file(self, new: SourceFile) -> "Package":
        files = tuple(new if f.path == new.path else f for f in self.files)
        return replace(self, files=files)

    @property
    def build_file(self) -> str:
        return f"{self.id}/BUILD"

    def compiled_paths(self, target: Target | None = None) -> tuple[str, ...]:
        """Files that go into compiling ``target`` (or the package library when None).

        A target always compiles its own srcs plus the package BUILD file and
        the srcs of every build target (tests link the library).
        """
        paths = {self.build_file} if any(f.path == self.build_file for f in self.files) else set()
        for t in self.build_targets:
            paths.update(t.srcs)
        if target is not None:
            paths.update(target.srcs)
        return tuple(sorted(paths))


@dataclass(frozen=True)
class Job:
    id: str
    package_id: str
    cells: tuple[str, ...]
    tasks_per_cell: int
    borg_constraints: frozenset = frozenset()

    def __post_init__(self):
        if not self.cells:
            raise IntegrityError(f"job {self.id}: no cells")
        if self.tasks_per_cell < 1:
            raise IntegrityError(f"job {self.id}: tasks_per_cell < 1")


@dataclass(frozen=True)
class Cell:
    id: str
    capacity: Mapping[Isa, int]

    def __post_init__(self):
        if any(v < 0 for v in self.capacity.values()):
            raise IntegrityError(f"cell {self.id}: negative capacity")


class _Topology:
    """Dependency-graph caches; shared between snapshots with identical deps."""

    def __init__(self, deps: dict[str, tuple[str, ...]]):
        self.deps = deps
        self._closure: dict[str, tuple[str, ...]] = {}
        rdeps: dict[str, list[str]] = {p: [] for p in deps}
        for p, ds in deps.items():
            for d in ds:
                if d not in rdeps:
                    raise IntegrityError(f"package {p} depends on unknown package {d}")
                rdeps[d].append(p)
        self.rdeps = {p: tuple(sorted(v)) for p, v in rdeps.items()}
        self.order = topo_sort(deps)

    def closure(self, pid: str) -> tuple[str, ...]:
        hit = self._closure.get(pid)
        if hit is not None:
            return hit
        seen: set[str] = set()
        stack = list(self.deps[pid])
        while stack:
            d = stack.pop()
            if d in seen:
                continue
            seen.add(d)
            stack.extend(self.deps[d])
        out = tuple(sorted(seen))
        self._closure[pid] = out
        return out


def topo_sort(deps: Mapping[str, Iterable[str]]) -> list[str]:
    """Kahn's algorithm, dependencies first, ties broken by id."""
    import heapq

    indeg = {p: 0 for p in deps}
    users: dict[str, list[str]] = {p: [] for p in deps}
    for p, ds in deps.items():
        for d in ds:
            indeg[p] += 1
            users.setdefault(d, []).append(p)
    ready = [p for p, n in indeg.items() if n == 0]
    heapq.heapify(ready)
    out = []
    while ready:
        p = heapq.heappop(ready)
        out.append(p)
        for u in users.get(p, ()):
            indeg[u] -= 1
            if indeg[u] == 0:
                heapq.heappush(ready, u)
    if len(out) != len(indeg):
        raise IntegrityError("package dependency graph has a cycle")
    return out


@dataclass(frozen=True)
class Fleet:
    seed: int
    packages: tuple[Package, ...]
    owners: tuple[Owner, ...]
    cells: tuple[Cell, ...]
    jobs: tuple[Job, ...]
    clock_day: int = 0
    _topology: _Topology | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        pk = {p.id: p for p in self.packages}
        if len(pk) != len(self.packages):
            raise IntegrityError("duplicate package id")
        own = {o.id: o for o in self.owners}
        if len(own) != len(self.owners):
            raise IntegrityError("duplicate owner id")
        cells = {c.id: c for c in self.cells}
        jobs = {j.id: j for j in self.jobs}
        if len(jobs) != len(self.jobs):
            raise IntegrityError("duplicate job id")
        if self.clock_day < 0:
            raise IntegrityError("clock_day < 0")
        object.__setattr__(self, "_pkg", pk)
        object.__setattr__(self, "_own", own)
        object.__setattr__(self, "_cell", cells)
        object.__setattr__(self, "_job", jobs)
        if self._topology is None:
            object.__setattr__(self, "_topology", _Topology({p.id: p.deps for p in self.packages}))

    def validate(self) -> None:
        """Check every cross-reference resolves."""
        seen_paths: set[str] = set()
        for p in self.packages:
            if p.owner_id not in self._own:
                raise IntegrityError(f"package {p.id}: unknown owner {p.owner_id}")
            if p.blueprint.package_id != p.id:
                raise IntegrityError(f"package {p.id}: blueprint for {p.blueprint.package_id}")
            for f in p.files:
                if f.path in seen_paths:
                    raise IntegrityError(f"duplicate file path {f.path}")
                seen_paths.add(f.path)
        for j in self.jobs:
            if j.package_id not in self._pkg:
                raise IntegrityError(f"job {j.id}: unknown package {j.package_id}")
            for c in j.cells:
                if c not in self._cell:
                    raise IntegrityError(f"job {j.id}: unknown cell {c}")

    # lookups

    def package(self, pid: str) -> Package:
        try:
            return self._pkg[pid]
        except KeyError:
            raise NotFound(f"unknown package {pid}") from None

    def owner(self, oid: str) -> Owner:
        try:
            return self._own[oid]
        except KeyError:
            raise NotFound(f"unknown owner {oid}") from None

    def job(self, jid: str) -> Job:
        try:
            return self._job[jid]
        except KeyError:
            raise NotFound(f"unknown job {jid}") from None

    def cell(self, cid: str) -> Cell:
        try:
            return self._cell[cid]
        except KeyError:
            raise NotFound(f"unknown cell {cid}") from None

    def has_package(self, pid: str) -> bool:
        return pid in self._pkg

    def target(self, target_id: str) -> tuple[Package, Target, str]:
        """Resolve ``//pkg:name`` to (package, target, kind)."""
        if not target_id.startswith("//") or ":" not in target_id:
            raise NotFound(f"malformed target id {target_id!r}")
        pid = target_id[2:].split(":", 1)[0]
        pkg = self._pkg.get(pid)
        if pkg is not None:
            for t in pkg.build_targets:
                if t.id == target_id:
                    return pkg, t, "build"
            for t in pkg.test_targets:
                if t.id == target_id:
                    return pkg, t, "test"
        raise NotFound(f"unknown target {target_id}")

    def package_of_path(self, path: str) -> Package:
        pkg = self._pkg.get(path.split("/", 1)[0])
        if pkg is None:
            raise NotFound(f"no package owns {path}")
        return pkg

    def file(self, path: str) -> SourceFile:
        return self.package_of_path(path).file(path)

    def jobs_of(self, pid: str) -> list[Job]:
        return [j for j in self.jobs if j.package_id == pid]

    def transitive_deps(self, pid: str) -> tuple[str, ...]:
        self.package(pid)
        return self._topology.closure(pid)

    def reverse_deps(self, pid: str) -> tuple[str, ...]:
        self.package(pid)
        return self._topology.rdeps[pid]

    def topo_order(self) -> list[str]:
        return list(self._topology.order)

    # functional updates

    def with_package(self, pkg: Package) -> "Fleet":
        old = self.package(pkg.id)
        packages = tuple(pkg if p.id == pkg.id else p for p in self.packages)
        topo = self._topology if old.deps == pkg.deps else None
        return replace(self, packages=packages, _topology=topo)

    def with_file(self, new: SourceFile) -> "Fleet":
        pkg = self.package_of_path(new.path)
        pkg.file(new.path)
        return self.with_package(pkg.with_file(new))

    def with_blueprint(self, bp: Blueprint) -> "Fleet":
        return self.with_package(replace(self.package(bp.package_id), blueprint=bp))

    def with_clock(self, day: int) -> "Fleet":
        return replace(self, clock_day=day)


def query_targets(fleet: Fleet, package_id: str) -> dict[str, list[str]]:
    pkg = fleet.package(package_id)
    return {
        "build_targets": [t.id for t in pkg.build_targets],
        "test_targets": [t.id for t in pkg.test_targets],
    }
