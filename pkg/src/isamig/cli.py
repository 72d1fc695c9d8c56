"""Command line entry point.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from isamig.errors import IsaMigError

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _on_off(value: str) -> bool:
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return value == "on"


def _fleet_params(args):
    from isamig.fleet.generate import FleetParams

    return FleetParams(seed=args.seed, n_packages=args.packages, n_owners=args.owners, n_cells=args.cells,
                       defect_rate=args.defect_rate)


def _add_fleet_args(p, defect_rate: float = 0.6) -> None:
    p.add_argument("--packages", type=int, default=500)
    p.add_argument("--owners", type=int, default=40)
    p.add_argument("--cells", type=int, default=8)
    p.add_argument("--defect-rate", type=float, default=defect_rate, help="mean defects per package")


def cmd_fleet_gen(args) -> int:
    from isamig.fleet import generate_fleet, save_fleet

    fleet = generate_fleet(_fleet_params(args))
    save_fleet(fleet, args.out)
    print(f"wrote {args.out}: {len(fleet.packages)} packages, {len(fleet.jobs)} jobs")
    return EXIT_OK


def cmd_migrate_run(args) -> int:
    from isamig.champ import ChampConfig
    from isamig.fleet import load_fleet
    from isamig.health import HealthConfig
    from isamig.sim import ScenarioConfig, Simulation, write_report

    fleet = load_fleet(args.fleet) if args.fleet else None
    cfg = ScenarioConfig(fleet=_fleet_params(args), days=args.days, agent=args.agent, reasoner=args.reasoner,
                         step_limit=args.step_limit, sanitizers=args.sanitizers,
                         champ=ChampConfig(dwell_days=args.dwell_days),
                         health=HealthConfig(noise_scale=args.noise), seed=args.seed)
    sim = Simulation(cfg, fleet).run()
    out = write_report(sim, args.report)
    last = sim.metrics[-1]
    print(f"wrote {out}: day {last.day}, qualified fraction {last.qualified_fraction:.4f}, "
          f"{len(sim.commits)} commits")
    return EXIT_OK


def cmd_agent_bench(args) -> int:
    from isamig.agent.bench import bench_fleet, build_benchmark, run_benchmark
    from isamig.agent.reasoners import make_reasoner
    from isamig.fleet import load_fleet
    from isamig.oracle import DefectClass, fix_all

    classes = [DefectClass(c) for c in args.classes.split(",")] if args.classes else None
    if args.fleet:
        fleet = fix_all(load_fleet(args.fleet))
    else:
        fleet = bench_fleet(args.seed, args.packages, args.defect_rate)
    cases = build_benchmark(fleet, args.cases, args.seed, sanitizers=args.sanitizers)
    reasoner = make_reasoner(args.reasoner, classes)
    try:
        report = run_benchmark(cases, reasoner, args.step_limit, args.parallelism, sanitizers=args.sanitizers)
    finally:
        if hasattr(reasoner, "close"):
            reasoner.close()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "bench.json").write_text(report.to_json(), encoding="utf-8")
        (out / "bench.csv").write_text(report.to_csv(), encoding="utf-8")
        print(f"wrote {out}: {len(report.cases)} cases, success rate {report.success_rate:.4f}")
    else:
        sys.stdout.write(report.to_json())
    return EXIT_OK


def cmd_classify(args) -> int:
    from isamig.taxonomy import batch_classify, load_corpus, make_classifier, save_corpus

    commits = load_corpus(args.corpus)
    classifier = make_classifier(args.classifier)
    try:
        labels = dict(batch_classify(commits, args.batch_size, classifier))
    finally:
        if hasattr(classifier, "close"):
            classifier.close()
    for w in getattr(classifier, "warnings", ()):
        print(f"warning: {w.commit_id}: {w.message}", file=sys.stderr)
    save_corpus([c.with_category(labels[c.id]) for c in commits], args.out)
    print(f"wrote {args.out}: {len(commits)} commits")
    return EXIT_OK


def cmd_report(args) -> int:
    from isamig.taxonomy import aggregate, load_corpus
    from isamig.taxonomy.grade import by_category, grade_automatability

    commits = load_corpus(args.corpus)
    missing = [c.id for c in commits if c.category is None]
    if missing:
        raise IsaMigError(f"{len(missing)} commits lack a category (first: {missing[0]}); run classify first")
    stats, series = aggregate(commits, args.bucket_days, args.mega_threshold)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "stats.json").write_text(json.dumps(stats.to_dict(), sort_keys=True, indent=1) + "\n", "utf-8")
    (out / "category_series.csv").write_text(series.to_csv(), encoding="utf-8")
    grades = grade_automatability(by_category(commits), sample_cap=args.sample_cap, seed=args.seed)
    doc = {str(int(c)): h.to_dict() for c, h in grades.items()}
    (out / "grades.json").write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n", "utf-8")
    print(f"wrote {out}: {stats.total_commits} commits in {len(stats.rows)} categories")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="isamig", description="x86 to Arm fleet migration simulator and toolkit")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fleet = sub.add_parser("fleet", help="fleet snapshots").add_subparsers(dest="action", required=True,
                                                                            parser_class=_Parser)
    gen = fleet.add_parser("gen", help="generate a synthetic fleet")
    _add_fleet_args(gen)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_fleet_gen)

    migrate = sub.add_parser("migrate", help="run a migration scenario").add_subparsers(
        dest="action", required=True, parser_class=_Parser)
    run = migrate.add_parser("run", help="simulate the migration day by day")
    run.add_argument("--fleet", help="fleet snapshot; generated from --seed when omitted")
    _add_fleet_args(run)
    run.add_argument("--days", type=int, default=120)
    run.add_argument("--report", required=True, help="output directory")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--agent", type=_on_off, default=True, metavar="on|off")
    run.add_argument("--sanitizers", type=_on_off, default=True, metavar="on|off")
    run.add_argument("--reasoner", default="rules")
    run.add_argument("--step-limit", type=int, default=16)
    run.add_argument("--dwell-days", type=int, default=3)
    run.add_argument("--noise", type=float, default=1.0, help="health noise scale (0 disables noise)")
    run.set_defaults(func=cmd_migrate_run)

    agent = sub.add_parser("agent", help="fix agent tools").add_subparsers(dest="action", required=True,
                                                                           parser_class=_Parser)
    bench = agent.add_parser("bench", help="revert-based benchmark")
    bench.add_argument("--cases", type=int, default=245)
    bench.add_argument("--reasoner", default="rules", help="rules | null | cmd:<command line>")
    bench.add_argument("--classes", help="restrict the rule table to these defect classes")
    bench.add_argument("--fleet", help="fleet snapshot; all defects are fixed before sampling")
    _add_fleet_args(bench, defect_rate=1.5)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--step-limit", type=int, default=16)
    bench.add_argument("--parallelism", type=int, default=1)
    bench.add_argument("--sanitizers", type=_on_off, default=True, metavar="on|off")
    bench.add_argument("--out", help="output directory (bench.json, bench.csv); stdout when omitted")
    bench.set_defaults(func=cmd_agent_bench)

    cl = sub.add_parser("classify", help="categorize a commit corpus")
    cl.add_argument("--corpus", required=True)
    cl.add_argument("--out", required=True)
    cl.add_argument("--classifier", default="heuristic", help="heuristic | cmd:<command line>")
    cl.add_argument("--batch-size", type=int, default=100)
    cl.add_argument("--seed", type=int, default=0)
    cl.set_defaults(func=cmd_classify)

    rp = sub.add_parser("report", help="aggregate statistics for a categorized corpus")
    rp.add_argument("--corpus", required=True)
    rp.add_argument("--out", required=True)
    rp.add_argument("--bucket-days", type=int, default=30)
    rp.add_argument("--mega-threshold", type=int, default=10_000)
    rp.add_argument("--sample-cap", type=int, default=50)
    rp.add_argument("--seed", type=int, default=0)
    rp.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (IsaMigError, OSError, ValueError, KeyError) as exc:
        print(f"isamig: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
