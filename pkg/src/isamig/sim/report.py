"""Scenario outputs and their recomputation from the raw logs.

Files written to the report directory:

* ``report.json``: the summary (versioned by ``report_version``)
* ``corpus.jsonl``: one commit record per line
* ``events.csv``: driver events (admissions, stage changes, commits, ...)
* ``champ_events.csv``: qualification log
* ``lsc_shards.csv``: final state per shard
* ``lsc_events.csv``: every shard state transition
* ``timeseries.csv``: per-day stage counts and qualified fraction
* ``category_series.csv``: per-bucket commit share of each category
* ``bugs.json``: qualification bugs
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from isamig.champ import Stage
from isamig.lsc import lsc_stats, read_shard_events_csv, shard_events_csv, shard_outcomes_csv
from isamig.sim.driver import EVENT_CSV_HEADER, LIFECYCLE, Simulation
from isamig.taxonomy.aggregate import category_stats, group_shares, time_series
from isamig.taxonomy.model import dumps_corpus, loads_corpus

REPORT_VERSION = 1
OUTPUT_FILES = ("report.json", "corpus.jsonl", "events.csv", "champ_events.csv", "lsc_shards.csv",
                "lsc_events.csv", "timeseries.csv", "category_series.csv", "bugs.json")


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def timeseries_csv(sim: Simulation) -> str:
    header = ("day", "phase", "admitted") + tuple(s.value for s in LIFECYCLE) + (
        "qualified_jobs", "total_jobs", "qualified_fraction", "commits")
    rows = [(m.day, m.phase, m.admitted) + m.stage_counts + (m.qualified_jobs, m.total_jobs,
                                                              f"{m.qualified_fraction:.6f}", m.commits)
            for m in sim.metrics]
    return _csv(header, rows)


def shard_events(sim: Simulation):
    return [e for s in sim.shards for e in s.events]


def phase_shape(series) -> dict:
    """Early-vs-late commit share of tooling/test work and of config work."""
    groups = group_shares(series)
    n = len(series.buckets)
    zero = (0.0,) * n
    tooling = [a + b for a, b in zip(groups.get("SupportingProcesses", zero), groups.get("TestChanges", zero))]
    config = list(groups.get("BuildAndConfig", zero))
    return {"first_bucket": {"tooling_test": tooling[0], "config": config[0]},
            "last_bucket": {"tooling_test": tooling[-1], "config": config[-1]},
            "holds": tooling[0] > config[0] and config[-1] > tooling[-1]}


def build_report(sim: Simulation) -> dict:
    cfg = sim.cfg
    stats = category_stats(sim.commits)
    series = time_series(sim.commits, end_day=cfg.days - 1)
    runs = sim.agent_runs
    last = sim.metrics[-1]
    qualified_series = [[m.day, m.qualified_fraction] for m in sim.metrics]
    return {
        "report_version": REPORT_VERSION,
        "config": cfg.to_dict(),
        "days": cfg.days,
        "final_qualified_fraction": last.qualified_fraction,
        "qualified_fraction": qualified_series,
        "total_jobs": last.total_jobs,
        "excluded_jobs": len(sim._excluded),
        "final_stages": dict(zip((s.value for s in LIFECYCLE), last.stage_counts)),
        "not_admitted": len(sim._queue),
        "commits": stats.to_dict(),
        "category_series": series.to_dict(),
        "phase_shape": phase_shape(series),
        "lsc": lsc_stats(shard_events(sim)).to_dict(),
        "agent": {
            "enabled": cfg.agent,
            "runs": len(runs),
            "fixed": sum(r["outcome"] == "Fixed" for r in runs),
            "gave_up": sum(r["outcome"] == "GaveUp" for r in runs),
            "step_limit": sum(r["outcome"] == "StepLimit" for r in runs),
            "tool_calls": sum(r["tool_calls"] for r in runs),
        },
        "champ": {
            "qualified_jobs": last.qualified_jobs,
            "bugs_filed": len(sim.qualifier.bugs.bugs),
            "bugs_open": len(sim.qualifier.bugs.open_bugs()),
            "evaluations": len(sim.qualifier.events),
        },
        "outputs": list(OUTPUT_FILES),
    }


def render(sim: Simulation) -> dict[str, str]:
    """File name -> content, for every output file."""
    report = build_report(sim)
    series = time_series(sim.commits, end_day=sim.cfg.days - 1)
    return {
        "report.json": json.dumps(report, sort_keys=True, indent=1) + "\n",
        "corpus.jsonl": dumps_corpus(sim.commits),
        "events.csv": _csv(EVENT_CSV_HEADER, (e.row() for e in sim.events)),
        "champ_events.csv": sim.qualifier.events_csv(),
        "lsc_shards.csv": shard_outcomes_csv(
            (s.spec_id, s.owner_id, s.state.value, s.ci_result, s.events[-1].day if s.events else "")
            for s in sim.shards),
        "lsc_events.csv": shard_events_csv(shard_events(sim)),
        "timeseries.csv": timeseries_csv(sim),
        "category_series.csv": series.to_csv(),
        "bugs.json": sim.qualifier.bugs.to_json(),
    }


def write_report(sim: Simulation, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in render(sim).items():
        (out / name).write_text(text, encoding="utf-8")
    return out


def recompute(out_dir) -> dict:
    """Re-derive the report's rates from the raw logs alone."""
    out = Path(out_dir)
    report = json.loads((out / "report.json").read_text("utf-8"))
    total_jobs = report["total_jobs"]
    days = report["days"]
    stage: dict[str, str] = {}
    by_day: dict[int, list[tuple[str, str]]] = {}
    for row in csv.DictReader(io.StringIO((out / "champ_events.csv").read_text("utf-8"))):
        by_day.setdefault(int(row["day"]), []).append((row["job_id"], row["stage_after"]))
    qualified = []
    for day in range(days):
        for job, st in by_day.get(day, ()):
            stage[job] = st
        n = sum(1 for s in stage.values() if s == Stage.Qualified.value)
        qualified.append([day, n / total_jobs if total_jobs else 0.0])
    commits = loads_corpus((out / "corpus.jsonl").read_text("utf-8"))
    stats = category_stats(commits)
    series = time_series(commits, end_day=days - 1)
    lsc = lsc_stats(read_shard_events_csv((out / "lsc_events.csv").read_text("utf-8")))
    return {
        "final_qualified_fraction": qualified[-1][1] if qualified else 0.0,
        "qualified_fraction": qualified,
        "commits": stats.to_dict(),
        "category_series": series.to_dict(),
        "lsc": lsc.to_dict(),
    }


def run_scenario(config, fleet=None) -> tuple[Simulation, dict]:
    sim = Simulation(config, fleet).run()
    return sim, build_report(sim)
