from __future__ import annotations

import pytest

from helpers import inject, lib_path, with_tests
from isamig import oracle
from isamig.errors import BuildFailed, ConfigError, EditError, NotFound
from isamig.fleet import Isa
from isamig.oracle import DefectClass, Edit


def test_diagnostic_round_trip():
    line = oracle.format_diagnostic(DefectClass.IntrinsicUse, "p/a.cc", 4)
    assert line.startswith("ERROR IntrinsicUse p/a.cc:4: ")
    assert oracle.parse_diagnostic(line) == (DefectClass.IntrinsicUse, "p/a.cc", 4)
    assert oracle.parse_diagnostic("status: Fail") is None


def test_every_class_has_one_pattern_and_fix():
    assert len(oracle.DEFECTS) == 9
    for cls, spec in oracle.DEFECTS.items():
        assert spec.pattern not in spec.fix or spec.fix.count(spec.pattern) == 0, cls
        assert spec.line.format(p=spec.pattern).count(spec.pattern) == 1


def test_rate_zero_is_identity(clean_fleet):
    assert oracle.inject_defects(clean_fleet, oracle.DEFAULT_DEFECT_MIX, 0.0, seed=1) is clean_fleet


def test_negative_rate_rejected(clean_fleet):
    with pytest.raises(ConfigError):
        oracle.inject_defects(clean_fleet, oracle.DEFAULT_DEFECT_MIX, -1.0, seed=1)


def test_injected_patterns_occur_once(clean_fleet):
    report = oracle.InjectionReport()
    f = oracle.inject_defects(clean_fleet, oracle.DEFAULT_DEFECT_MIX, 1.0, seed=5, report=report)
    assert report.injected
    for d in report.injected:
        text = f.file(d.file_path).text
        assert text.count(d.pattern) == 1
        assert d.present(f)


def test_intrinsic_breaks_arm_only(clean_fleet):
    pkg = clean_fleet.packages[0]
    f = inject(clean_fleet, DefectClass.IntrinsicUse, lib_path(pkg))
    t = pkg.build_targets[0].id
    res = oracle.build(f, t, Isa.Arm)
    assert not res.passed and res.surfaced_defects
    assert oracle.build(f, t, Isa.X86).passed
    assert oracle.build(f, t, Isa.Arm) == res


def test_clean_build_passes_with_empty_log(clean_fleet):
    res = oracle.build(clean_fleet, clean_fleet.packages[0].build_targets[0].id, Isa.Arm)
    assert res.passed and res.log == () and res.surfaced_defects == ()


def test_build_failure_propagates_from_dep(clean_fleet):
    user = next(p for p in clean_fleet.packages if p.deps)
    dep = clean_fleet.package(user.deps[0])
    f = inject(clean_fleet, DefectClass.UnsupportedDependency, dep.build_file)
    res = oracle.build(f, user.build_targets[0].id, Isa.Arm)
    assert not res.passed
    assert any(dep.build_file in line for line in res.log)


def test_memory_ordering_needs_sanitizers(clean_fleet):
    pkg = with_tests(clean_fleet)
    f = inject(clean_fleet, DefectClass.MemoryOrdering, lib_path(pkg))
    t = pkg.test_targets[0].id
    assert oracle.run_test(f, t, Isa.Arm, sanitizers=False).passed
    assert not oracle.run_test(f, t, Isa.Arm, sanitizers=True).passed
    assert oracle.run_test(f, t, Isa.X86, sanitizers=False).passed


def test_exact_fp_equality_message(clean_fleet):
    pkg = with_tests(clean_fleet)
    f = inject(clean_fleet, DefectClass.ExactFpEquality, pkg.test_targets[0].srcs[0])
    res = oracle.run_test(f, pkg.test_targets[0].id, Isa.Arm)
    assert not res.passed
    assert "expected 0.333333333 == computed" in res.log[0]
    assert oracle.run_test(f, pkg.test_targets[0].id, Isa.X86).passed


def test_run_test_rejects_build_target(clean_fleet):
    with pytest.raises(NotFound):
        oracle.run_test(clean_fleet, clean_fleet.packages[0].build_targets[0].id, Isa.Arm)
    with pytest.raises(NotFound):
        oracle.build(clean_fleet, "//nope:nope", Isa.Arm)


def _big(fleet, pkg, size):
    from dataclasses import replace

    return fleet.with_blueprint(replace(pkg.blueprint, release_size_units=size))


def test_release_overflow(clean_fleet):
    pkg = clean_fleet.packages[0]
    f = _big(clean_fleet, pkg, 60)
    assert oracle.build_release(f, pkg.id, {Isa.X86, Isa.Arm}).passed  # no defect
    f = inject(f, DefectClass.ReleaseSizeOverflow, pkg.build_file)
    assert not oracle.build_release(f, pkg.id, {Isa.X86, Isa.Arm}).passed
    assert oracle.build_release(f, pkg.id, {Isa.X86}).passed
    small = _big(f, pkg, 40)
    assert oracle.build_release(small, pkg.id, {Isa.X86, Isa.Arm}).passed


def test_release_propagates_build_failure(clean_fleet):
    pkg = clean_fleet.packages[0]
    f = inject(clean_fleet, DefectClass.IntrinsicUse, lib_path(pkg))
    with pytest.raises(BuildFailed):
        oracle.build_release(f, pkg.id, {Isa.X86, Isa.Arm})


def test_apply_fix_by_edit_and_id(clean_fleet):
    pkg = clean_fleet.packages[0]
    path = lib_path(pkg)
    f = inject(clean_fleet, DefectClass.IntrinsicUse, path)
    t = pkg.build_targets[0].id
    fixed = oracle.apply_fix(f, Edit(path, "_mm_add_ps", "portable_simd_add"))
    assert oracle.build(fixed, t, Isa.Arm).passed
    defect_id = oracle.build(f, t, Isa.Arm).surfaced_defects[0]
    assert oracle.apply_fix(f, defect_id) == fixed


def test_long_double_fix_clears_test_failure(clean_fleet):
    pkg = with_tests(clean_fleet)
    f = inject(clean_fleet, DefectClass.LongDouble, lib_path(pkg))
    t = pkg.test_targets[0].id
    assert not oracle.run_test(f, t, Isa.Arm).passed
    path = lib_path(pkg)
    assert oracle.run_test(oracle.apply_fix(f, Edit(path, "long double", "float128_t")), t, Isa.Arm).passed


def test_non_matching_edit(clean_fleet):
    path = lib_path(clean_fleet.packages[0])
    with pytest.raises(EditError):
        oracle.apply_fix(clean_fleet, Edit(path, "no such text", "x"))
    with pytest.raises(EditError):
        oracle.apply_fix(clean_fleet, Edit("missing/file.cc", "a", "b"))


def test_hand_edit_equals_apply_fix(clean_fleet):
    from isamig.fleet.model import SourceFile

    pkg = clean_fleet.packages[0]
    path = lib_path(pkg)
    f = inject(clean_fleet, DefectClass.IntrinsicUse, path)
    by_hand = f.with_file(SourceFile(path, tuple(
        ln.replace("_mm_add_ps", "portable_simd_add") for ln in f.file(path).lines)))
    assert by_hand == oracle.apply_fix(f, oracle.scan_package(f.package(pkg.id))[0])


def test_runtime_and_scheduling_defects_stay_out_of_logs(clean_fleet):
    pkg = with_tests(clean_fleet)
    borg = f"{pkg.id}/deploy.borg"
    f = inject(clean_fleet, DefectClass.HeapLimit, borg)
    f = inject(f, DefectClass.SchedulingConstraint, borg)
    for t in pkg.build_targets:
        assert oracle.build(f, t.id, Isa.Arm).passed
    for t in pkg.test_targets:
        assert oracle.run_test(f, t.id, Isa.Arm, sanitizers=True).passed
    assert [d.cls for d in oracle.runtime_defects(f, pkg.id)] == [DefectClass.HeapLimit]
    assert len(oracle.scheduling_blockers(f, pkg.id)) == 1
