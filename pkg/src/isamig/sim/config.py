"""Scenario configuration for the day-by-day migration simulation."""

from __future__ import annotations

from dataclasses import dataclass, field

from isamig.champ import ChampConfig
from isamig.errors import ConfigError
from isamig.fleet.generate import REFUSAL_PRESET, FleetParams
from isamig.fleet.model import PHASES
from isamig.health import HealthConfig
from isamig.taxonomy.categories import Category


@dataclass(frozen=True)
class ScriptedStream:
    """Human-driven commits modeled only by their corpus footprint.

    The daily count is Poisson with a rate that moves linearly from
    ``rate_start`` on day 0 to ``rate_end`` on the last day.
    """

    category: Category
    rate_start: float
    rate_end: float
    loc_median: int = 15

    def rate(self, day: int, days: int) -> float:
        t = day / max(days - 1, 1)
        return max(0.0, self.rate_start + (self.rate_end - self.rate_start) * t)

    def to_dict(self) -> dict:
        return {"category": int(self.category), "rate_start": self.rate_start, "rate_end": self.rate_end,
                "loc_median": self.loc_median}


C = Category
DEFAULT_STREAMS: tuple[ScriptedStream, ...] = (
    ScriptedStream(C.MigrationTooling, 1.5, 0.1, 60),
    ScriptedStream(C.BuildTestInfrastructure, 1.2, 0.2, 20),
    ScriptedStream(C.HardwarePlatformEnablement, 0.6, 0.05, 40),
    ScriptedStream(C.TestExecutionEnvironment, 0.8, 0.2, 4),
    ScriptedStream(C.MonitoringAndDashboards, 0.3, 0.3, 25),
    ScriptedStream(C.Documentation, 0.3, 0.2, 30),
    ScriptedStream(C.CodeCleanupDeprecation, 0.1, 0.4, 35),
    ScriptedStream(C.PerformanceOptimization, 0.1, 0.3, 10),
)

# phase -> (first day, end day exclusive)
DEFAULT_SCHEDULE: dict[str, tuple[int, int]] = {"Early": (0, 40), "ScaleUp": (40, 80), "Final": (80, 120)}
DEFAULT_ADMISSION: dict[str, float] = {"Early": 1.0, "ScaleUp": 4.0, "Final": 8.0}


@dataclass(frozen=True)
class ScenarioConfig:
    fleet: FleetParams = field(default_factory=FleetParams)
    days: int = 120
    schedule: dict = field(default_factory=lambda: dict(DEFAULT_SCHEDULE))
    admission: dict = field(default_factory=lambda: dict(DEFAULT_ADMISSION))
    agent: bool = True
    reasoner: str = "rules"
    step_limit: int = 16
    sanitizers: bool = True
    champ: ChampConfig = field(default_factory=ChampConfig)
    health: HealthConfig = field(default_factory=HealthConfig)
    refusal: dict = field(default_factory=lambda: dict(REFUSAL_PRESET))
    global_approval_phases: tuple[str, ...] = ("Final",)
    manual_fix_days: int = 10
    streams: tuple[ScriptedStream, ...] = DEFAULT_STREAMS
    seed: int = 0

    def validate(self) -> None:
        if self.days < 1:
            raise ConfigError("days must be >= 1")
        if self.step_limit < 1:
            raise ConfigError("step_limit must be >= 1")
        if self.manual_fix_days < 0:
            raise ConfigError("manual_fix_days must be >= 0")
        if set(self.schedule) != set(PHASES):
            raise ConfigError(f"schedule must name exactly the phases {PHASES}")
        prev_end = 0
        for phase in PHASES:
            start, end = self.schedule[phase]
            if start != prev_end or end <= start:
                raise ConfigError(f"phase {phase} range {start}..{end} is not contiguous and ordered")
            prev_end = end
        for phase in PHASES:
            if self.admission.get(phase, 0) < 0:
                raise ConfigError(f"negative admission rate for {phase}")
            p = self.refusal.get(phase)
            if p is None or not 0.0 <= p <= 1.0:
                raise ConfigError(f"refusal probability for {phase} must be in [0, 1]")

    def phase_of(self, day: int) -> str:
        for phase in PHASES:
            start, end = self.schedule[phase]
            if start <= day < end:
                return phase
        return PHASES[-1]

    def to_dict(self) -> dict:
        return {
            "fleet": self.fleet.to_dict(), "days": self.days,
            "schedule": {k: list(v) for k, v in self.schedule.items()}, "admission": dict(self.admission),
            "agent": self.agent, "reasoner": self.reasoner, "step_limit": self.step_limit,
            "sanitizers": self.sanitizers, "champ": self.champ.to_dict(), "health": self.health.to_dict(),
            "refusal": dict(self.refusal), "global_approval_phases": list(self.global_approval_phases),
            "manual_fix_days": self.manual_fix_days, "streams": [s.to_dict() for s in self.streams],
            "seed": self.seed,
        }
