"""Synthetic production health for jobs, plus placement checks.

This is the only place that turns latent runtime defects into metrics.
Noise is bounded and uniform, seeded per (job, isa, day), so a whole run
is reproducible and ``noise_scale=0`` yields exact baselines.
"""

from __future__ import annotations

from dataclasses import dataclass

from isamig import oracle, rng
from isamig.champ import ChampConfig, HealthSample, Qualifier, Verdict, evaluate
from isamig.errors import DeployBlocked
from isamig.fleet.model import Fleet, Isa, Job
from isamig.oracle import DefectClass

X86_ONLY_TAG = "x86_only"


@dataclass(frozen=True)
class HealthConfig:
    noise_scale: float = 1.0
    crash_noise: float = 0.002  # absolute
    rpc_noise: float = 0.05  # relative
    latency_noise: float = 0.03  # relative
    heap_penalty: float = 0.05
    memory_order_penalty: float = 0.03

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def deploy_blockers(fleet: Fleet, job: Job, isa: Isa = Isa.Arm) -> list[str]:
    """Reasons the job cannot be placed on ``isa``; empty when placeable."""
    if isa is Isa.X86:
        return []
    reasons = []
    pkg = fleet.package(job.package_id)
    if not pkg.blueprint.arm_enabled:
        reasons.append("blueprint has no Arm variant")
    if X86_ONLY_TAG in job.borg_constraints:
        reasons.append("job carries an x86-only constraint")
    if oracle.scheduling_blockers(fleet, pkg.id):
        reasons.append("deploy config pins arch to x86_64")
    if not any(fleet.cell(c).capacity.get(Isa.Arm, 0) > 0 for c in job.cells):
        reasons.append("no Arm capacity in the job's cells")
    return reasons


def check_deployable(fleet: Fleet, job_id: str, isa: Isa = Isa.Arm) -> None:
    job = fleet.job(job_id)
    reasons = deploy_blockers(fleet, job, isa)
    if reasons:
        raise DeployBlocked(job_id, "; ".join(reasons))


def baseline(seed: int, job_id: str) -> tuple[float, float, float]:
    """Per-job x86 baseline (crash_rate, rpc_error_rate, latency_ratio)."""
    r = rng.stream(seed, "health", "baseline", job_id)
    return r.uniform(0.001, 0.01), r.uniform(0.004, 0.02), 1.0


def penalties(fleet: Fleet, job: Job, config: HealthConfig = HealthConfig()) -> float:
    extra = 0.0
    for d in oracle.runtime_defects(fleet, job.package_id):
        if d.cls is DefectClass.HeapLimit:
            extra += config.heap_penalty
        elif d.cls is DefectClass.MemoryOrdering:
            extra += config.memory_order_penalty
    return extra


def sample_health(fleet: Fleet, job_id: str, isa: Isa, day: int, seed: int,
                  config: HealthConfig = HealthConfig()) -> HealthSample:
    """One day's health sample; raises DeployBlocked for unplaceable Arm jobs."""
    job = fleet.job(job_id)
    check_deployable(fleet, job_id, isa)
    crash, rpc, lat = baseline(seed, job_id)
    r = rng.stream(seed, "health", "noise", job_id, isa.value, day)
    s = config.noise_scale
    crash += r.uniform(-1, 1) * config.crash_noise * s
    rpc *= 1 + r.uniform(-1, 1) * config.rpc_noise * s
    lat *= 1 + r.uniform(-1, 1) * config.latency_noise * s
    if isa is Isa.Arm:
        crash += penalties(fleet, job, config)
    clamp = lambda v: min(1.0, max(0.0, v))  # noqa: E731
    return HealthSample(job_id, isa, day, clamp(crash), clamp(rpc), lat)


def observe(fleet: Fleet, job_id: str, day: int, seed: int, health: HealthConfig = HealthConfig(),
            champ: ChampConfig = ChampConfig()) -> Verdict | None:
    """Today's verdict for a job; None when the job is DeployBlocked on Arm."""
    try:
        arm = sample_health(fleet, job_id, Isa.Arm, day, seed, health)
    except DeployBlocked:
        return None
    x86 = sample_health(fleet, job_id, Isa.X86, day, seed, health)
    return evaluate(arm, x86, champ)


def champ_day(fleet: Fleet, qualifier: Qualifier, job_ids, day: int, seed: int,
              health: HealthConfig = HealthConfig()) -> None:
    """Step every listed job once, in id order."""
    for jid in sorted(job_ids):
        verdict = observe(fleet, jid, day, seed, health, qualifier.config) if qualifier.needs_sample(jid, day) else None
        qualifier.step(fleet, jid, verdict, day)
