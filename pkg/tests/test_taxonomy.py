from __future__ import annotations

import statistics
import sys
from pathlib import Path

import pytest

from corpora import random_corpus
from isamig.errors import FormatError
from isamig.taxonomy import (
    Category,
    CommitRecord,
    FileDiff,
    SubprocessClassifier,
    aggregate,
    batch_classify,
    category_stats,
    classify_heuristic,
    dumps_corpus,
    golden_corpus,
    grade_automatability,
    loads_corpus,
    quantile,
    time_series,
)
from isamig.taxonomy.grade import ConstantGrader, HeuristicGrader, SubprocessGrader, by_category

PEER = [sys.executable, "-m", "isamig.plugins.rules"]
FAKE = [sys.executable, str(Path(__file__).with_name("fake_peer.py"))]


def _commit(path, hunk="", message="change", cid="x"):
    return CommitRecord(cid, 0, message, (FileDiff(path, 1, 0, hunk),))


def test_golden_corpus_all_correct():
    golden = golden_corpus()
    assert len(golden) == 17
    assert {int(c.category) for c in golden} == set(range(17))
    for c in golden:
        assert classify_heuristic(c) is c.category, c.id


@pytest.mark.parametrize("commit,expected", [
    (_commit("pkg/pkg.blueprint", "+arm_variant_mode = VARIANT_MODE_RELEASE,"), Category(9)),
    (_commit("pkg/lib.cc", "-long double x;\n+float128_t x;"), Category(2)),
    (_commit("pkg/lib.cc", "+_mm_add_ps(a, b);"), Category(3)),
    (CommitRecord("e", 0, "empty"), Category.Uncategorized),
])
def test_heuristic_examples(commit, expected):
    assert classify_heuristic(commit) is expected


def test_category_parse_and_groups():
    assert Category.parse("3") is Category(3) and Category.parse(Category(3).label) is Category(3)
    with pytest.raises(ValueError):
        Category.parse("NoSuchCategory")
    assert Category.Uncategorized.group != Category(1).group


def test_batch_size_invariance():
    commits = golden_corpus() * 3
    ref = batch_classify(commits, batch_size=1000)
    for size in (1, 7, 17, 50):
        assert batch_classify(commits, batch_size=size) == ref


def test_subprocess_round_trips_per_batch():
    commits = random_corpus(1, n=250, categorized=False)
    with SubprocessClassifier(PEER) as clf:
        labels = batch_classify(commits, 100, clf)
        assert clf.round_trips == 3
    assert labels == batch_classify(commits, 100)


def test_unknown_label_falls_back_with_warning():
    commits = golden_corpus()[:4]
    with SubprocessClassifier(FAKE + ["badlabel"]) as clf:
        labels = batch_classify(commits, 2, clf)
    assert {c for _, c in labels} == {Category.Uncategorized}
    assert len(clf.warnings) == 4 and "unknown label" in clf.warnings[0].message


def test_failed_batch_marks_all_uncategorized():
    commits = golden_corpus()[:3]
    with SubprocessClassifier(FAKE + ["error"]) as clf:
        labels = batch_classify(commits, 10, clf)
    assert [c for _, c in labels] == [Category.Uncategorized] * 3 and len(clf.warnings) == 3


def test_quantile_examples():
    xs = list(range(1, 101))
    assert quantile(xs, 0.05) == pytest.approx(5.95)
    assert quantile(xs, 0.95) == pytest.approx(95.05)
    assert quantile([1, 5, 100], 0.5) == 5
    assert quantile([7], 0.3) == 7
    with pytest.raises(ValueError):
        quantile([], 0.5)


def test_quantile_matches_statistics_inclusive():
    for seed in range(20):
        xs = random_corpus(seed)
        locs = [c.loc_delta for c in xs]
        if len(locs) < 2:
            continue
        cuts = statistics.quantiles(locs, n=20, method="inclusive")
        assert quantile(locs, 0.05) == pytest.approx(cuts[0])
        assert quantile(locs, 0.95) == pytest.approx(cuts[-1])


def test_stats_conservation():
    commits = random_corpus(3, n=300)
    stats = category_stats(commits)
    assert sum(r.commits for r in stats.rows) == stats.total_commits == 300
    assert sum(r.loc for r in stats.rows) == stats.total_loc
    assert sum(r.commit_share for r in stats.rows) == pytest.approx(1.0)
    assert all(c.loc_delta > 10_000 for c in commits if c.id in stats.mega_commits)


def test_time_series_shares():
    commits = random_corpus(4, n=200)
    series = time_series(commits, bucket_days=30)
    assert series.buckets[0] == 0 and all(b % 30 == 0 for b in series.buckets)
    for i in range(len(series.buckets)):
        total = sum(series.commits[c][i] for c in series.commits)
        if total:
            assert sum(series.shares[c][i] for c in series.shares) == pytest.approx(1.0)
    assert series.to_csv().splitlines()[0].startswith("bucket_start_day,c")


def test_aggregate_needs_categories():
    with pytest.raises(ValueError):
        aggregate(random_corpus(5, categorized=False))


def test_corpus_round_trip():
    commits = random_corpus(6, n=30)
    assert loads_corpus(dumps_corpus(commits)) == commits
    with pytest.raises(FormatError):
        loads_corpus('{"day": 3}\n')


def test_grading_cap_and_constant():
    commits = random_corpus(7, n=400)
    grades = grade_automatability(by_category(commits), ConstantGrader(3), sample_cap=10)
    for cat, h in grades.items():
        assert len(h.sampled) == min(10, h.population)
        assert h.counts[2] == len(h.sampled) and sum(h.counts) == len(h.sampled)


def test_grading_is_seeded():
    groups = by_category(random_corpus(8, n=400))
    a = grade_automatability(groups, HeuristicGrader(1), sample_cap=5, seed=1)
    b = grade_automatability(groups, HeuristicGrader(1), sample_cap=5, seed=1)
    c = grade_automatability(groups, HeuristicGrader(1), sample_cap=5, seed=2)
    assert a == b
    assert any(a[k].sampled != c[k].sampled for k in a)


def test_invalid_grade_marks_category_ungraded():
    groups = by_category(random_corpus(9, n=40))
    grader = SubprocessGrader(FAKE + ["badgrade"])
    try:
        grades = grade_automatability(groups, grader, sample_cap=3)
    finally:
        grader.close()
    assert all(not h.graded and h.error for h in grades.values())
