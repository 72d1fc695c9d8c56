from __future__ import annotations

from dataclasses import replace

import pytest

from helpers import inject, lib_path
from isamig import lsc
from isamig.errors import FormatError, SpecError, StateError
from isamig.fleet import Isa, generate_fleet
from isamig.lsc import ChangeSpec, ShardPolicy, ShardState
from isamig.oracle import DefectClass, fix_all


@pytest.fixture(scope="module")
def ten():
    return fix_all(generate_fleet(seed=3, n_packages=10, n_owners=3, n_cells=2, defect_rate=0.0))


def _reown(fleet, owners):
    for pkg, owner in zip(fleet.packages, owners):
        fleet = fleet.with_package(replace(pkg, owner_id=owner))
    return fleet


def _spec(**kw):
    base = dict(id="arm-ci", predicate="blueprint:*", template="enable_arm_ci")
    base.update(kw)
    return ChangeSpec(**base)


def test_one_edit_per_matching_blueprint(ten):
    mega = lsc.generate_change(ten, _spec())
    assert len(mega.edits) == 10
    assert all(e.lines_added == 1 and e.lines_removed == 0 for e in mega.edits)
    enabled = lsc.apply_edits(ten, mega.edits)
    assert lsc.generate_change(enabled, _spec()).edits == ()


def test_empty_predicate_match(ten):
    mega = lsc.generate_change(ten, _spec(predicate="blueprint:nothing*"))
    assert mega.edits == ()
    assert lsc.shard_by_owner(ten, mega).shards == []


@pytest.mark.parametrize("owners,expected", [
    (["owner000"] * 4 + ["owner001"] * 3 + ["owner002"] * 3, {"owner000": 4, "owner001": 3, "owner002": 3}),
    (["owner001"] * 10, {"owner001": 10}),
])
def test_shard_by_owner(ten, owners, expected):
    fleet = _reown(ten, owners)
    sharded = lsc.shard_by_owner(fleet, lsc.generate_change(fleet, _spec()))
    assert {s.owner_id: len(s.edits) for s in sharded.shards} == expected
    assert all(s.state is ShardState.Pending for s in sharded.shards)


def test_shard_count_matches_distinct_owners():
    fleet = generate_fleet(seed=0, n_packages=500, defect_rate=0.0)
    mega = lsc.generate_change(fleet, _spec())
    shards = lsc.shard_by_owner(fleet, mega).shards
    assert len(shards) == len({p.owner_id for p in fleet.packages})
    files = [e.file for s in shards for e in s.edits]
    assert sorted(files) == sorted(mega.files) and len(files) == len(set(files))


def test_global_approval_submits_without_draw(ten):
    sharded = lsc.shard_by_owner(ten, lsc.generate_change(ten, _spec(global_approval=True)))
    fleet = ten
    for shard in sharded.shards:
        fleet, out = lsc.run_shard_pipeline(fleet, shard, ShardPolicy(refusal={"Early": 1.0}))
        assert out.state is ShardState.Submitted
    assert all(p.blueprint.ci_enabled[Isa.Arm] for p in fleet.packages)


def test_refusal_probability_one(ten):
    sharded = lsc.shard_by_owner(ten, lsc.generate_change(ten, _spec()))
    for shard in sharded.shards:
        fleet, out = lsc.run_shard_pipeline(ten, shard, ShardPolicy(refusal={"Early": 1.0}))
        assert out.state is ShardState.Refused and fleet is ten


def test_ci_failure_blocks_with_log(ten):
    pkg = ten.packages[0]
    broken = inject(ten, DefectClass.IntrinsicUse, lib_path(pkg))
    mega = lsc.generate_change(broken, _spec(predicate=f"blueprint:{pkg.id}"))
    shard = lsc.shard_by_owner(broken, mega).shards[0]
    fleet, out = lsc.run_shard_pipeline(broken, shard)
    assert out.state is ShardState.Pending and out.ci_result == "fail"
    assert fleet is broken
    assert any("IntrinsicUse" in line for line in out.ci_log)
    assert pkg.build_targets[0].id in lsc.failing_ci_targets(out.ci_log)
    assert [e.detail for e in shard.events][-1] == "ci_failed"


def test_unmigrated_reverse_dep_does_not_block(ten):
    user = next(p for p in ten.packages if p.deps)
    dep = ten.package(user.deps[0])
    broken = inject(ten, DefectClass.IntrinsicUse, lib_path(user))
    mega = lsc.generate_change(broken, _spec(predicate=f"blueprint:{dep.id}"))
    shard = lsc.shard_by_owner(broken, mega).shards[0]
    _, out = lsc.run_shard_pipeline(broken, shard, ShardPolicy(refusal={"Early": 0.0}))
    assert out.state is ShardState.Submitted


def test_rollback_and_retry(ten):
    spec = _spec(global_approval=True, predicate=f"blueprint:{ten.packages[0].id}")
    shard = lsc.shard_by_owner(ten, lsc.generate_change(ten, spec)).shards[0]
    fleet, _ = lsc.run_shard_pipeline(ten, shard)
    assert fleet.packages[0].blueprint != ten.packages[0].blueprint
    restored = lsc.rollback(fleet, shard, day=2, reason="regression")
    assert restored.packages[0].blueprint == ten.packages[0].blueprint
    assert shard.state is ShardState.RolledBack
    with pytest.raises(StateError):
        lsc.rollback(restored, shard)
    again, out = lsc.run_shard_pipeline(restored, shard, ShardPolicy(day=3))
    assert out.state is ShardState.Submitted and shard.attempts == 2
    assert again.packages[0].blueprint == fleet.packages[0].blueprint


def test_rollback_package_splits_shard(ten):
    fleet0 = _reown(ten, ["owner000"] * 10)
    shard = lsc.shard_by_owner(fleet0, lsc.generate_change(fleet0, _spec(global_approval=True))).shards[0]
    fleet, _ = lsc.run_shard_pipeline(fleet0, shard)
    pid = fleet0.packages[4].id
    back, part = lsc.rollback_package(fleet, shard, pid)
    assert part.state is ShardState.RolledBack and shard.state is ShardState.Submitted
    assert back.package(pid).blueprint == fleet0.package(pid).blueprint
    assert all(back.package(p.id).blueprint == fleet.package(p.id).blueprint for p in fleet.packages if p.id != pid)


def test_edits_are_idempotent(ten):
    mega = lsc.generate_change(ten, _spec(template="enable_arm_release"))
    once = lsc.apply_edits(ten, mega.edits)
    assert lsc.apply_edits(once, mega.edits) == once
    assert all(p.blueprint.arm_enabled for p in once.packages)


def test_replace_template(ten):
    spec = ChangeSpec("gt", "files:*_test.cc", "replace:EXPECT_GT(=>EXPECT_LT(0, ")
    mega = lsc.generate_change(ten, spec)
    assert mega.edits and all(e.lines_removed == e.lines_added == 1 for e in mega.edits)
    once = lsc.apply_edits(ten, mega.edits)
    assert lsc.apply_edits(once, mega.edits) == once


@pytest.mark.parametrize("kw", [
    dict(predicate="nonsense"),
    dict(template="rewrite_everything"),
    dict(phase_label="Late"),
    dict(predicate="files:*.cc"),
    dict(predicate="files:*.cc", template="replace:a=>ab"),
])
def test_bad_specs(kw):
    with pytest.raises(SpecError):
        _spec(**kw)


def test_load_change_spec(tmp_path):
    p = tmp_path / "arm.toml"
    p.write_text('id = "x"\npredicate = "blueprint:pkg*"\ntemplate = "enable_arm_ci"\nphase = "ScaleUp"\n')
    spec = lsc.load_change_spec(p)
    assert spec == ChangeSpec("x", "blueprint:pkg*", "enable_arm_ci", "ScaleUp")
    (tmp_path / "bad.toml").write_text('template = "enable_arm_ci"\n')
    with pytest.raises(FormatError):
        lsc.load_change_spec(tmp_path / "bad.toml")


def test_event_csv_round_trip(ten):
    sharded = lsc.shard_by_owner(ten, lsc.generate_change(ten, _spec()))
    events = []
    for shard in sharded.shards:
        lsc.run_shard_pipeline(ten, shard, ShardPolicy(refusal={"Early": 0.5}, seed=4))
        events += shard.events
    text = lsc.shard_events_csv(events)
    assert text.splitlines()[0] == ",".join(lsc.SHARD_EVENT_CSV_HEADER)
    assert lsc.read_shard_events_csv(text) == events
    stats = lsc.lsc_stats(events)
    assert stats.approval_draws == len(sharded.shards)
