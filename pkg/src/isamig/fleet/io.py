"""Fleet snapshot (de)serialization.

One UTF-8 JSON document with top-level keys ``seed``, ``clock_day``,
``owners``, ``cells``, ``packages``, ``jobs``.  Collections are sorted by id
and keys are sorted, so equal fleets serialize to identical bytes.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

from isamig.errors import FormatError, IsaMigError
from isamig.fleet.model import Blueprint, Cell, Fleet, Isa, Job, Owner, Package, SourceFile, Target

SNAPSHOT_KEYS = ("seed", "clock_day", "owners", "cells", "packages", "jobs")


def _isa_map(m) -> dict:
    return {isa.value: m[isa] for isa in sorted(m, key=lambda i: i.value)}


def fleet_to_dict(fleet: Fleet) -> dict[str, Any]:
    return {
        "seed": fleet.seed,
        "clock_day": fleet.clock_day,
        "owners": [
            {"id": o.id, "refusal_policy": dict(sorted(o.refusal_policy.items()))}
            for o in sorted(fleet.owners, key=lambda o: o.id)
        ],
        "cells": [
            {"id": c.id, "capacity": _isa_map(c.capacity)}
            for c in sorted(fleet.cells, key=lambda c: c.id)
        ],
        "packages": [_package_to_dict(p) for p in sorted(fleet.packages, key=lambda p: p.id)],
        "jobs": [
            {
                "id": j.id,
                "package_id": j.package_id,
                "cells": list(j.cells),
                "tasks_per_cell": j.tasks_per_cell,
                "borg_constraints": sorted(j.borg_constraints),
            }
            for j in sorted(fleet.jobs, key=lambda j: j.id)
        ],
    }


def _package_to_dict(p: Package) -> dict:
    bp = p.blueprint
    return {
        "id": p.id,
        "owner_id": p.owner_id,
        "files": [{"path": f.path, "lines": list(f.lines)} for f in sorted(p.files, key=lambda f: f.path)],
        "build_targets": [{"id": t.id, "srcs": list(t.srcs)} for t in sorted(p.build_targets, key=lambda t: t.id)],
        "test_targets": [{"id": t.id, "srcs": list(t.srcs)} for t in sorted(p.test_targets, key=lambda t: t.id)],
        "deps": sorted(p.deps),
        "blueprint": {
            "package_id": bp.package_id,
            "variant_modes": sorted(i.value for i in bp.variant_modes),
            "ci_enabled": _isa_map(bp.ci_enabled),
            "release_size_units": bp.release_size_units,
        },
    }


def dumps(fleet: Fleet) -> str:
    return json.dumps(fleet_to_dict(fleet), sort_keys=True, indent=1, ensure_ascii=False) + "\n"


def fleet_digest(fleet: Fleet) -> str:
    return hashlib.sha256(dumps(fleet).encode("utf-8")).hexdigest()


def save_fleet(fleet: Fleet, path) -> None:
    Path(path).write_text(dumps(fleet), encoding="utf-8")


def _get(obj: dict, key: str, where: str):
    if not isinstance(obj, dict):
        raise FormatError(f"{where}: expected an object, got {type(obj).__name__}")
    if key not in obj:
        raise FormatError(f"{where}: missing field {key!r}")
    return obj[key]


def _isa_keyed(obj: dict, where: str) -> dict:
    try:
        return {Isa(k): v for k, v in obj.items()}
    except (ValueError, AttributeError):
        raise FormatError(f"{where}: bad ISA key in {obj!r}") from None


def fleet_from_dict(doc: dict) -> Fleet:
    for key in SNAPSHOT_KEYS:
        _get(doc, key, "snapshot")
    try:
        owners = tuple(
            Owner(_get(o, "id", f"owners[{i}]"), dict(_get(o, "refusal_policy", f"owners[{i}]")))
            for i, o in enumerate(doc["owners"])
        )
        cells = tuple(
            Cell(_get(c, "id", f"cells[{i}]"), _isa_keyed(_get(c, "capacity", f"cells[{i}]"), f"cells[{i}].capacity"))
            for i, c in enumerate(doc["cells"])
        )
        packages = []
        for i, p in enumerate(doc["packages"]):
            where = f"packages[{i}]"
            bpd = _get(p, "blueprint", where)
            bp = Blueprint(
                package_id=_get(bpd, "package_id", where + ".blueprint"),
                variant_modes=frozenset(Isa(v) for v in _get(bpd, "variant_modes", where + ".blueprint")),
                ci_enabled=_isa_keyed(_get(bpd, "ci_enabled", where + ".blueprint"), where + ".blueprint.ci_enabled"),
                release_size_units=int(_get(bpd, "release_size_units", where + ".blueprint")),
            )
            packages.append(Package(
                id=_get(p, "id", where),
                owner_id=_get(p, "owner_id", where),
                files=tuple(SourceFile(_get(f, "path", f"{where}.files[{k}]"), tuple(_get(f, "lines", f"{where}.files[{k}]")))
                            for k, f in enumerate(_get(p, "files", where))),
                build_targets=tuple(Target(_get(t, "id", where), tuple(_get(t, "srcs", where)))
                                    for t in _get(p, "build_targets", where)),
                test_targets=tuple(Target(_get(t, "id", where), tuple(_get(t, "srcs", where)))
                                   for t in _get(p, "test_targets", where)),
                deps=tuple(_get(p, "deps", where)),
                blueprint=bp,
            ))
        jobs = tuple(
            Job(
                id=_get(j, "id", f"jobs[{i}]"),
                package_id=_get(j, "package_id", f"jobs[{i}]"),
                cells=tuple(_get(j, "cells", f"jobs[{i}]")),
                tasks_per_cell=int(_get(j, "tasks_per_cell", f"jobs[{i}]")),
                borg_constraints=frozenset(_get(j, "borg_constraints", f"jobs[{i}]")),
            )
            for i, j in enumerate(doc["jobs"])
        )
        fleet = Fleet(seed=int(doc["seed"]), packages=tuple(packages), owners=owners, cells=cells,
                      jobs=jobs, clock_day=int(doc["clock_day"]))
        fleet.validate()
    except FormatError:
        raise
    except (IsaMigError, TypeError, ValueError) as exc:
        raise FormatError(f"invalid snapshot: {exc}") from None
    return fleet


def loads(text: str) -> Fleet:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return fleet_from_dict(doc)


def load_fleet(path) -> Fleet:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"{path}: {exc.strerror}") from None
    return loads(text)
