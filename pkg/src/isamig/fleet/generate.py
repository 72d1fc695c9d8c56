"""Seeded synthetic fleet generator."""

from __future__ import annotations

from dataclasses import dataclass, field

from isamig import rng as rngmod
from isamig.errors import ConfigError
from isamig.fleet.model import (
    Blueprint,
    Cell,
    Fleet,
    Isa,
    Job,
    Owner,
    Package,
    SourceFile,
    Target,
)

# default per-phase refusal probabilities for LSC shard approval
REFUSAL_PRESET = {"Early": 0.05, "ScaleUp": 0.006, "Final": 0.0}


@dataclass
class FleetParams:
    seed: int = 0
    n_packages: int = 500
    n_owners: int = 40
    n_cells: int = 8
    defect_mix: dict | None = None  # None -> oracle.DEFAULT_DEFECT_MIX
    dep_density: float = 1.5
    defect_rate: float = 0.6
    jobs_per_package: float = 2.0
    n_layers: int = 8
    owner_skew: float = 0.0
    x86_only_fraction: float = 0.02
    arm_cell_fraction: float = 0.75
    refusal_policy: dict = field(default_factory=lambda: dict(REFUSAL_PRESET))

    def to_dict(self) -> dict:
        from isamig.oracle import DEFAULT_DEFECT_MIX

        mix = self.defect_mix if self.defect_mix is not None else DEFAULT_DEFECT_MIX
        d = dict(self.__dict__)
        d["defect_mix"] = {getattr(k, "value", k): v for k, v in mix.items()}
        return d


_FILLER = (
    "  acc = acc * 3 + 1;",
    "  acc ^= (acc >> 7);",
    "  if (acc < 0) acc = -acc;",
    "  total += Lookup(table, acc);",
    "  LOG(INFO) << \"step \" << acc;",
    "  buffer.push_back(acc);",
    "  acc = std::max(acc, floor_value);",
    "  CHECK_GE(acc, 0);",
)


def _lib_file(pid: str, name: str, r) -> SourceFile:
    body = [r.choice(_FILLER) for _ in range(r.randint(2, 6))]
    lines = [
        f"// {pid}/{name}.cc",
        f'#include "{pid}/{name}.h"',
        f"namespace {pid} {{",
        f"int Compute_{name}(int x) {{",
        "  int acc = x;",
        *body,
        "  return acc;",
        "}",
        f"}}  // namespace {pid}",
    ]
    return SourceFile(f"{pid}/{name}.cc", tuple(lines))


def _test_file(pid: str, name: str, r) -> SourceFile:
    lines = [
        '#include "gtest/gtest.h"',
        f'#include "{pid}/{name}.h"',
        f"TEST({name.title()}Test, ComputesPositive) {{",
        f"  EXPECT_GT({pid}::Compute_{name}({r.randint(1, 9)}), 0);",
        f"  EXPECT_TRUE({pid}::Compute_{name}(0) >= 0);",
        "}",
    ]
    return SourceFile(f"{pid}/{name}_test.cc", tuple(lines))


def _build_file(pid: str, libs: list[str], tests: list[str], deps: list[str]) -> SourceFile:
    lines = []
    for lib in libs:
        lines += ["cc_library(", f'    name = "{lib}",', f'    srcs = ["{lib}.cc"],']
        lines += [f'    deps = ["//{d}:{d}_lib0"],' for d in deps]
        lines += [")"]
    for lib in tests:
        lines += ["cc_test(", f'    name = "{lib}_test",', f'    srcs = ["{lib}_test.cc"],',
                  f'    deps = [":{lib}"],', ")"]
    return SourceFile(f"{pid}/BUILD", tuple(lines))


def _borg_file(pid: str, r) -> SourceFile:
    lines = [
        f"job {pid}_server {{",
        f'  binary = "//{pid}:{pid}_lib0"',
        f"  priority = {r.choice((100, 200, 300))}",
        f"  ram_mb = {r.choice((512, 1024, 4096))}",
        "}",
    ]
    return SourceFile(f"{pid}/deploy.borg", tuple(lines))


def generate_base_fleet(params: FleetParams) -> Fleet:
    """Defect-free fleet: topology, files, jobs, cells."""
    if params.n_packages < 1:
        raise ConfigError("n_packages must be >= 1")
    if params.n_owners < 1:
        raise ConfigError("n_owners must be >= 1 (zero owners)")
    if params.n_cells < 1:
        raise ConfigError("n_cells must be >= 1")
    if params.dep_density < 0 or params.jobs_per_package < 1:
        raise ConfigError("dep_density must be >= 0 and jobs_per_package >= 1")
    seed = params.seed

    owners = tuple(
        Owner(f"owner{i:03d}", dict(params.refusal_policy)) for i in range(params.n_owners)
    )

    r_cells = rngmod.stream(seed, "fleet", "cells")
    cells = []
    for i in range(params.n_cells):
        arm = r_cells.randint(50, 400) if (i == 0 or r_cells.random() < params.arm_cell_fraction) else 0
        cells.append(Cell(f"cell{i:02d}", {Isa.X86: r_cells.randint(200, 2000), Isa.Arm: arm}))

    n = params.n_packages
    layers = max(1, min(params.n_layers, n))
    layer_of = [i * layers // n for i in range(n)]
    pids = [f"pkg{i:04d}" for i in range(n)]

    r_own = rngmod.stream(seed, "fleet", "owners")
    weights = [1.0 / (k + 1) ** params.owner_skew for k in range(params.n_owners)]
    owner_of = [r_own.choices(owners, weights)[0].id for _ in range(n)]

    r_dep = rngmod.stream(seed, "fleet", "deps")
    deps_of: list[list[str]] = []
    for i in range(n):
        lower = [j for j in range(i) if layer_of[j] < layer_of[i]]
        k = min(len(lower), rngmod.poisson(r_dep, params.dep_density))
        deps_of.append(sorted(pids[j] for j in r_dep.sample(lower, k)))

    r_src = rngmod.stream(seed, "fleet", "sources")
    r_bp = rngmod.stream(seed, "fleet", "blueprints")
    packages = []
    for i, pid in enumerate(pids):
        n_libs = r_src.randint(1, 3)
        libs = [f"{pid}_lib{k}" for k in range(n_libs)]
        n_tests = r_src.choice((0, 1, 1, 2, 2, 3))
        tests = libs[: min(n_tests, n_libs)]
        files = [_lib_file(pid, lib, r_src) for lib in libs]
        files += [_test_file(pid, lib, r_src) for lib in tests]
        files.append(_build_file(pid, libs, tests, deps_of[i]))
        files.append(_borg_file(pid, r_src))
        files.append(SourceFile(f"{pid}/README.md", (f"# {pid}", "", "Service library.")))
        files.sort(key=lambda f: f.path)
        bp = Blueprint(
            package_id=pid,
            variant_modes=frozenset({Isa.X86}),
            ci_enabled={Isa.X86: True, Isa.Arm: False},
            release_size_units=r_bp.randint(10, 90),
        )
        packages.append(Package(
            id=pid,
            owner_id=owner_of[i],
            files=tuple(files),
            build_targets=tuple(Target(f"//{pid}:{lib}", (f"{pid}/{lib}.cc",)) for lib in libs),
            test_targets=tuple(Target(f"//{pid}:{lib}_test", (f"{pid}/{lib}_test.cc",)) for lib in tests),
            deps=tuple(deps_of[i]),
            blueprint=bp,
        ))

    r_job = rngmod.stream(seed, "fleet", "jobs")
    jobs = []
    cell_ids = [c.id for c in cells]
    p_more = 1.0 - 1.0 / params.jobs_per_package
    for pid in pids:
        k = 1
        while r_job.random() < p_more:
            k += 1
        for _ in range(k):
            tags = set()
            if r_job.random() < params.x86_only_fraction:
                tags.add("x86_only")
            if r_job.random() < 0.2:
                tags.add("latency_sensitive")
            n_cells = min(len(cell_ids), r_job.randint(1, 3))
            jobs.append(Job(
                id=f"job{len(jobs):05d}",
                package_id=pid,
                cells=tuple(sorted(r_job.sample(cell_ids, n_cells))),
                tasks_per_cell=min(200, 1 + int(r_job.paretovariate(1.2))),
                borg_constraints=frozenset(tags),
            ))

    fleet = Fleet(seed=seed, packages=tuple(packages), owners=owners, cells=tuple(cells),
                  jobs=tuple(jobs), clock_day=0)
    fleet.validate()
    return fleet


def generate_fleet(params: FleetParams | None = None, **kwargs) -> Fleet:
    """Generate a fleet and inject latent defects.  Pure in ``params``."""
    from isamig.oracle import DEFAULT_DEFECT_MIX, inject_defects, validate_mix

    if params is None:
        params = FleetParams(**kwargs)
    elif kwargs:
        raise TypeError("pass either params or keyword arguments")
    mix = validate_mix(params.defect_mix if params.defect_mix is not None else DEFAULT_DEFECT_MIX)
    fleet = generate_base_fleet(params)
    return inject_defects(fleet, mix, params.defect_rate, rngmod.derive_seed(params.seed, "defects"))
