"""Per-category commit statistics and per-period category shares.

Quantiles use linear interpolation between order statistics (the
"type 7" rule): position ``h = (n - 1) * q`` over the sorted values.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

from isamig.taxonomy.categories import Category
from isamig.taxonomy.model import CommitRecord

DEFAULT_BUCKET_DAYS = 30
DEFAULT_MEGA_THRESHOLD = 10_000


def quantile(values, q: float) -> float:
    xs = sorted(values)
    if not xs:
        raise ValueError("quantile of an empty sequence")
    if not 0.0 <= q <= 1.0:
        raise ValueError("q outside [0, 1]")
    h = (len(xs) - 1) * q
    lo = math.floor(h)
    hi = min(lo + 1, len(xs) - 1)
    return xs[lo] + (h - lo) * (xs[hi] - xs[lo])


@dataclass(frozen=True)
class CategoryRow:
    category: Category
    commits: int
    loc: int
    commit_share: float
    loc_share: float
    loc_median: float
    loc_interval_90: tuple[float, float]
    automated_commits: int
    automated_loc: int
    automation_commit_share: float
    automation_loc_share: float

    def to_dict(self) -> dict:
        return {
            "category": int(self.category), "name": self.category.label, "group": self.category.group,
            "commits": self.commits, "loc": self.loc, "commit_share": self.commit_share,
            "loc_share": self.loc_share, "loc_median": self.loc_median,
            "loc_interval_90": list(self.loc_interval_90), "automated_commits": self.automated_commits,
            "automated_loc": self.automated_loc, "automation_commit_share": self.automation_commit_share,
            "automation_loc_share": self.automation_loc_share,
        }


@dataclass(frozen=True)
class CategoryStats:
    rows: tuple[CategoryRow, ...]
    total_commits: int
    total_loc: int
    automated_commit_share: float
    automated_loc_share: float
    mega_threshold: int
    mega_commits: tuple[str, ...]
    mega_loc: int
    mega_loc_share: float

    def row(self, category: Category) -> CategoryRow | None:
        for r in self.rows:
            if r.category is category:
                return r
        return None

    def to_dict(self) -> dict:
        return {
            "rows": [r.to_dict() for r in self.rows], "total_commits": self.total_commits,
            "total_loc": self.total_loc, "automated_commit_share": self.automated_commit_share,
            "automated_loc_share": self.automated_loc_share,
            "mega_commits": {"threshold": self.mega_threshold, "ids": list(self.mega_commits),
                             "loc": self.mega_loc, "loc_share": self.mega_loc_share},
        }


@dataclass(frozen=True)
class TimeSeries:
    bucket_days: int
    buckets: tuple[int, ...]  # bucket start days
    commits: dict  # Category -> tuple of counts per bucket
    shares: dict  # Category -> tuple of shares per bucket

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cats = sorted(self.commits)
        w.writerow(["bucket_start_day"] + [f"c{int(c)}_share" for c in cats])
        for i, b in enumerate(self.buckets):
            w.writerow([b] + [f"{self.shares[c][i]:.6f}" for c in cats])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"bucket_days": self.bucket_days, "buckets": list(self.buckets),
                "commits": {str(int(c)): list(v) for c, v in sorted(self.commits.items())},
                "shares": {str(int(c)): list(v) for c, v in sorted(self.shares.items())}}


def _share(part: float, whole: float) -> float:
    return part / whole if whole else 0.0


def _category(c: CommitRecord) -> Category:
    if c.category is None:
        raise ValueError(f"commit {c.id} is not categorized")
    return c.category


def category_stats(commits, mega_threshold: int = DEFAULT_MEGA_THRESHOLD) -> CategoryStats:
    commits = sorted(commits, key=lambda c: c.id)
    by_cat: dict[Category, list[CommitRecord]] = {}
    for c in commits:
        by_cat.setdefault(_category(c), []).append(c)
    total_n = len(commits)
    total_loc = sum(c.loc_delta for c in commits)
    rows = []
    for cat in sorted(by_cat):
        cs = by_cat[cat]
        locs = [c.loc_delta for c in cs]
        auto = [c for c in cs if c.automated]
        loc = sum(locs)
        auto_loc = sum(c.loc_delta for c in auto)
        rows.append(CategoryRow(
            cat, len(cs), loc, _share(len(cs), total_n), _share(loc, total_loc), quantile(locs, 0.5),
            (quantile(locs, 0.05), quantile(locs, 0.95)), len(auto), auto_loc,
            _share(len(auto), len(cs)), _share(auto_loc, loc)))
    mega = [c for c in commits if c.loc_delta > mega_threshold]
    mega_loc = sum(c.loc_delta for c in mega)
    return CategoryStats(
        tuple(rows), total_n, total_loc,
        _share(sum(c.automated for c in commits), total_n),
        _share(sum(c.loc_delta for c in commits if c.automated), total_loc),
        mega_threshold, tuple(c.id for c in mega), mega_loc, _share(mega_loc, total_loc))


def time_series(commits, bucket_days: int = DEFAULT_BUCKET_DAYS, end_day: int | None = None) -> TimeSeries:
    if bucket_days < 1:
        raise ValueError("bucket_days must be >= 1")
    commits = list(commits)
    last = max([c.day for c in commits] + ([end_day] if end_day is not None else [0]))
    n = last // bucket_days + 1
    cats = sorted({_category(c) for c in commits})
    counts = {cat: [0] * n for cat in cats}
    for c in commits:
        counts[c.category][c.day // bucket_days] += 1
    totals = [sum(counts[cat][i] for cat in cats) for i in range(n)]
    shares = {cat: tuple(_share(counts[cat][i], totals[i]) for i in range(n)) for cat in cats}
    return TimeSeries(bucket_days, tuple(i * bucket_days for i in range(n)),
                      {cat: tuple(v) for cat, v in counts.items()}, shares)


def group_shares(series: TimeSeries) -> dict[str, tuple[float, ...]]:
    """Per-bucket commit share of each category group."""
    out: dict[str, list[float]] = {}
    for cat, shares in series.shares.items():
        acc = out.setdefault(cat.group, [0.0] * len(series.buckets))
        for i, s in enumerate(shares):
            acc[i] += s
    return {g: tuple(v) for g, v in sorted(out.items())}


def aggregate(commits, bucket_days: int = DEFAULT_BUCKET_DAYS,
              mega_threshold: int = DEFAULT_MEGA_THRESHOLD) -> tuple[CategoryStats, TimeSeries]:
    commits = list(commits)
    return category_stats(commits, mega_threshold), time_series(commits, bucket_days)
