from __future__ import annotations

import json
from dataclasses import replace
import subprocess
import sys

import pytest

from isamig.cli import main
from isamig.taxonomy import dumps_corpus, golden_corpus


def _run(*argv):
    return main([str(a) for a in argv])


def test_fleet_gen_and_migrate(tmp_path, capsys):
    fleet = tmp_path / "fleet.json"
    assert _run("fleet", "gen", "--packages", 30, "--owners", 5, "--cells", 3, "--seed", 2, "--out", fleet) == 0
    out = tmp_path / "run"
    assert _run("migrate", "run", "--fleet", fleet, "--days", 30, "--report", out, "--seed", 2,
                "--agent", "off", "--noise", 0) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["days"] == 30 and report["agent"]["enabled"] is False
    assert sorted(p.name for p in out.iterdir()) == sorted(report["outputs"])
    assert "qualified fraction" in capsys.readouterr().out


def test_agent_bench(tmp_path):
    out = tmp_path / "bench"
    assert _run("agent", "bench", "--cases", 10, "--packages", 80, "--seed", 1, "--out", out) == 0
    doc = json.loads((out / "bench.json").read_text())
    assert doc["cases"] == 10 and doc["success_rate"] == 1.0
    assert (out / "bench.csv").read_text().startswith("case_id,class,outcome,steps")


def test_classify_and_report(tmp_path):
    raw = tmp_path / "raw.jsonl"
    raw.write_text(dumps_corpus([replace(c, category=None) for c in golden_corpus()]))
    labeled = tmp_path / "labeled.jsonl"
    assert _run("classify", "--corpus", raw, "--out", labeled, "--batch-size", 5) == 0
    out = tmp_path / "rep"
    assert _run("report", "--corpus", labeled, "--out", out, "--sample-cap", 3, "--seed", 4) == 0
    stats = json.loads((out / "stats.json").read_text())
    assert stats["total_commits"] == 17
    assert set(json.loads((out / "grades.json").read_text())) == {str(i) for i in range(17)}


@pytest.mark.parametrize("argv", [
    [],
    ["fleet"],
    ["fleet", "gen"],
    ["migrate", "run", "--report", "x", "--agent", "maybe"],
    ["agent", "bench", "--cases", "many"],
    ["explode"],
])
def test_usage_errors_exit_1(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 1


def test_data_errors_exit_2(tmp_path):
    assert _run("migrate", "run", "--fleet", tmp_path / "missing.json", "--report", tmp_path / "r") == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert _run("agent", "bench", "--fleet", bad, "--cases", 3) == 2
    assert _run("agent", "bench", "--packages", 5, "--cases", 500, "--out", tmp_path / "b") == 2
    unlabeled = tmp_path / "u.jsonl"
    unlabeled.write_text('{"id": "a", "day": 0}\n')
    assert _run("report", "--corpus", unlabeled, "--out", tmp_path / "o") == 2


def test_console_script_entry():
    proc = subprocess.run([sys.executable, "-m", "isamig.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "fleet" in proc.stdout
