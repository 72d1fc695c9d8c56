"""Small builders shared by tests."""

from __future__ import annotations

from isamig import oracle
from isamig.fleet.model import SourceFile


def insert_line(fleet, path: str, text: str, at: int = 1):
    f = fleet.file(path)
    lines = f.lines[:at] + (text,) + f.lines[at:]
    return fleet.with_file(SourceFile(path, lines))


def inject(fleet, cls: oracle.DefectClass, path: str):
    spec = oracle.DEFECTS[cls]
    return insert_line(fleet, path, spec.line.format(p=spec.pattern))


def lib_path(pkg) -> str:
    return pkg.build_targets[0].srcs[0]


def with_tests(fleet, min_deps: int = 0):
    """First package that has a test target (and at least ``min_deps`` deps)."""
    for p in fleet.packages:
        if p.test_targets and len(p.deps) >= min_deps:
            return p
    raise LookupError("no package with tests")
