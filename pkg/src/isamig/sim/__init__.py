"""Day-by-day migration simulation."""

from isamig.sim.config import DEFAULT_STREAMS, ScenarioConfig, ScriptedStream
from isamig.sim.driver import LIFECYCLE, LifecycleStage, Simulation
from isamig.sim.report import REPORT_VERSION, build_report, recompute, render, run_scenario, write_report

__all__ = [
    "DEFAULT_STREAMS", "LIFECYCLE", "LifecycleStage", "REPORT_VERSION", "ScenarioConfig", "ScriptedStream",
    "Simulation", "build_report", "recompute", "render", "run_scenario", "write_report",
]
