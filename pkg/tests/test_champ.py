from __future__ import annotations

from dataclasses import replace

import pytest

from helpers import inject
from isamig import champ, health, lsc
from isamig.champ import ChampConfig, HealthSample, QualificationState, Qualifier, Stage, evaluate
from isamig.errors import DeployBlocked, IntegrityError, StateError
from isamig.fleet import Isa
from isamig.health import HealthConfig
from isamig.lsc import ChangeSpec
from isamig.oracle import DefectClass

QUIET = HealthConfig(noise_scale=0.0)


def _sample(isa, crash=0.005, rpc=0.01, lat=1.0, job="j", day=0):
    return HealthSample(job, isa, day, crash, rpc, lat)


@pytest.fixture(scope="module")
def arm_fleet(clean_fleet):
    mega = lsc.generate_change(clean_fleet, ChangeSpec("rel", "blueprint:*", "enable_arm_release"))
    return lsc.apply_edits(clean_fleet, mega.edits)


@pytest.fixture(scope="module")
def placeable(arm_fleet):
    return [j.id for j in arm_fleet.jobs if not health.deploy_blockers(arm_fleet, j)]


def test_evaluate_examples():
    assert evaluate(_sample(Isa.Arm), _sample(Isa.X86)).healthy
    v = evaluate(_sample(Isa.Arm, crash=0.06), _sample(Isa.X86, crash=0.005))
    assert not v.healthy and v.metrics == ("crash_rate",) and v.label == "Regressed(crash_rate)"
    assert evaluate(_sample(Isa.Arm, rpc=0.014), _sample(Isa.X86, rpc=0.01)).healthy
    assert evaluate(_sample(Isa.Arm, rpc=0.016), _sample(Isa.X86, rpc=0.01)).metrics == ("rpc_error_rate",)
    assert evaluate(_sample(Isa.Arm, lat=1.31), _sample(Isa.X86)).metrics == ("latency_ratio",)


def test_evaluate_rejects_mismatch():
    with pytest.raises(IntegrityError):
        evaluate(_sample(Isa.Arm, job="a"), _sample(Isa.X86, job="b"))
    with pytest.raises(IntegrityError):
        evaluate(_sample(Isa.Arm, day=1), _sample(Isa.X86, day=2))
    with pytest.raises(IntegrityError):
        evaluate(_sample(Isa.X86), _sample(Isa.X86))
    with pytest.raises(IntegrityError):
        _sample(Isa.Arm, crash=1.5)


def test_stage_fractions_nondecreasing():
    f = champ.stage_fractions(10, 3)
    walk = [f[s] for s in champ.WALK]
    assert walk == sorted(walk) and walk[0] == 0.0 and walk[-1] == 1.0


def _walk(fleet, job, verdicts, config=ChampConfig(), start=0):
    q = Qualifier(config)
    for day, v in enumerate(verdicts, start=start):
        q.step(fleet, job, v, day)
    return q


def test_healthy_walk_takes_stages_times_dwell(arm_fleet, placeable):
    job = placeable[0]
    q = _walk(arm_fleet, job, [champ.HEALTHY] * 11)
    assert q.state(job).stage is Stage.CanaryCell
    q.step(arm_fleet, job, champ.HEALTHY, 11)
    assert q.state(job).stage is Stage.Qualified and q.state(job).arm_fraction == 1.0
    assert champ.replay_violations(q.events) == []


def test_dwell_resets_on_regression(arm_fleet, placeable):
    job = placeable[0]
    bad = champ.Verdict(False, ("crash_rate",))
    q = _walk(arm_fleet, job, [champ.HEALTHY, champ.HEALTHY, bad])
    s = q.state(job)
    assert s.stage is Stage.Ineligible and s.retry_day == 32 and s.bug_id == "bug00000"
    assert not q.needs_sample(job, 10)
    q.step(arm_fleet, job, None, 31)
    assert q.state(job).stage is Stage.Ineligible
    q.step(arm_fleet, job, None, 32)
    assert q.state(job).stage is Stage.CanaryTask and q.state(job).episode == 1
    assert champ.replay_violations(q.events) == []


def test_deploy_blocked_pauses_clock(arm_fleet, placeable):
    job = placeable[0]
    q = _walk(arm_fleet, job, [champ.HEALTHY, None, None, champ.HEALTHY, champ.HEALTHY])
    assert q.state(job).stage is Stage.CanaryTask
    assert [e.verdict for e in q.events][1:3] == ["DeployBlocked", "DeployBlocked"]


def test_qualified_is_absorbing():
    s = QualificationState("j", Stage.Qualified, 1.0)
    with pytest.raises(StateError):
        champ.transition(s, Stage.Ineligible, 0.0)
    with pytest.raises(StateError):
        champ.transition(QualificationState("j"), Stage.Qualified, 1.0)


def test_x86_only_is_deploy_blocked(arm_fleet, placeable):
    job = arm_fleet.job(placeable[0])
    pinned = replace(job, borg_constraints=tuple(job.borg_constraints) + (health.X86_ONLY_TAG,))
    tagged = replace(arm_fleet, jobs=tuple(pinned if j.id == job.id else j for j in arm_fleet.jobs))
    with pytest.raises(DeployBlocked):
        health.check_deployable(tagged, job.id)
    assert health.observe(tagged, job.id, 0, seed=1) is None


def test_unmigrated_blueprint_is_deploy_blocked(clean_fleet):
    job = clean_fleet.jobs[0]
    assert "blueprint has no Arm variant" in health.deploy_blockers(clean_fleet, job)
    assert health.deploy_blockers(clean_fleet, job, Isa.X86) == []


def test_heap_limit_penalty(arm_fleet, placeable):
    job = arm_fleet.job(placeable[0])
    sick = inject(arm_fleet, DefectClass.HeapLimit, f"{job.package_id}/deploy.borg")
    cfg = HealthConfig()
    for day in range(20):
        arm = health.sample_health(sick, job.id, Isa.Arm, day, seed=3, config=cfg)
        x86 = health.sample_health(sick, job.id, Isa.X86, day, seed=3, config=cfg)
        assert arm.crash_rate - x86.crash_rate >= cfg.heap_penalty - 2 * cfg.crash_noise
        assert not evaluate(arm, x86).healthy


def test_noise_free_samples_are_baseline(arm_fleet, placeable):
    jid = placeable[0]
    a = health.sample_health(arm_fleet, jid, Isa.Arm, 5, seed=9, config=QUIET)
    x = health.sample_health(arm_fleet, jid, Isa.X86, 5, seed=9, config=QUIET)
    assert (a.crash_rate, a.rpc_error_rate, a.latency_ratio) == (x.crash_rate, x.rpc_error_rate, 1.0)


def test_fix_during_ineligibility_then_qualifies(arm_fleet, placeable):
    jid = placeable[0]
    pkg = arm_fleet.job(jid).package_id
    sick = inject(arm_fleet, DefectClass.HeapLimit, f"{pkg}/deploy.borg")
    q = Qualifier()
    health.champ_day(sick, q, [jid], 0, seed=2, health=QUIET)
    s = q.state(jid)
    assert s.stage is Stage.Ineligible and s.retry_day == 30
    assert len(q.bugs.open_bugs()) == 1
    for day in range(1, 30 + 12):
        health.champ_day(arm_fleet, q, [jid], day, seed=2, health=QUIET)
    assert q.state(jid).stage is Stage.Qualified
    assert q.bugs.open_bugs() == [] and champ.open_bug_violations(q.bugs) == []
    assert champ.replay_violations(q.events) == []


def test_repeat_regression_reuses_bug(arm_fleet, placeable):
    jid = placeable[0]
    pkg = arm_fleet.job(jid).package_id
    sick = inject(arm_fleet, DefectClass.HeapLimit, f"{pkg}/deploy.borg")
    q = Qualifier()
    for day in range(70):
        health.champ_day(sick, q, [jid], day, seed=2, health=QUIET)
    assert len(q.bugs.bugs) == 1 and len(q.bugs.open_bugs()) == 1
    # re-entry on the retry day does not consume that day's verdict
    entered = [e.day for e in q.events if e.stage_after is Stage.Ineligible and e.stage_before is not Stage.Ineligible]
    assert entered == [0, 31, 62]


def test_events_csv_header(arm_fleet, placeable):
    q = _walk(arm_fleet, placeable[0], [champ.HEALTHY] * 3)
    lines = q.events_csv().splitlines()
    assert lines[0] == ",".join(champ.CHAMP_CSV_HEADER) and len(lines) == 4
