"""Automatability grading: sample up to ``sample_cap`` commits per
category and collect 1-5 grades (1 = trivial to automate)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

from isamig import rng
from isamig.taxonomy.categories import Category
from isamig.taxonomy.model import CommitRecord

GRADES = (1, 2, 3, 4, 5)

# Placeholder grade distributions used by HeuristicGrader.  They encode a
# rough prior (config edits easy, tooling and hardware work hard) and are
# not measurements of anything.
PLACEHOLDER_WEIGHTS: dict[int, tuple[float, ...]] = {
    0: (0.2, 0.2, 0.2, 0.2, 0.2),
    1: (0.2, 0.4, 0.3, 0.1, 0.0),
    2: (0.2, 0.4, 0.3, 0.1, 0.0),
    3: (0.1, 0.3, 0.4, 0.2, 0.0),
    4: (0.0, 0.2, 0.4, 0.3, 0.1),
    5: (0.0, 0.1, 0.3, 0.4, 0.2),
    6: (0.4, 0.4, 0.2, 0.0, 0.0),
    7: (0.3, 0.4, 0.2, 0.1, 0.0),
    8: (0.6, 0.3, 0.1, 0.0, 0.0),
    9: (0.7, 0.3, 0.0, 0.0, 0.0),
    10: (0.5, 0.3, 0.2, 0.0, 0.0),
    11: (0.2, 0.3, 0.3, 0.2, 0.0),
    12: (0.0, 0.1, 0.3, 0.4, 0.2),
    13: (0.1, 0.2, 0.4, 0.2, 0.1),
    14: (0.2, 0.3, 0.3, 0.2, 0.0),
    15: (0.0, 0.0, 0.2, 0.4, 0.4),
    16: (0.1, 0.2, 0.3, 0.3, 0.1),
}


class Grader(Protocol):
    def grade(self, commit: CommitRecord) -> int: ...


class HeuristicGrader:
    """Placeholder: draws a grade from the category's fixed prior, keyed on
    the commit id so the result is a pure function of the record."""

    def __init__(self, seed: int = 0):
        self.seed = seed

    def grade(self, commit: CommitRecord) -> int:
        cat = int(commit.category or 0)
        u = rng.unit(self.seed, "grade", commit.id)
        acc = 0.0
        for g, w in zip(GRADES, PLACEHOLDER_WEIGHTS[cat]):
            acc += w
            if u < acc:
                return g
        return GRADES[-1]


class ConstantGrader:
    def __init__(self, value: int):
        self.value = value

    def grade(self, commit: CommitRecord) -> int:
        return self.value


class GraderProtocolError(Exception):
    pass


class SubprocessGrader:
    """External grader: request ``{"kind": "grade", "commit": {...}}``,
    reply ``{"grade": 1..5}``."""

    def __init__(self, argv, timeout: float = 30.0):
        from isamig.protocol import StdioPeer

        self.peer = StdioPeer(argv, timeout=timeout)

    def grade(self, commit: CommitRecord) -> int:
        from isamig.protocol import ProtocolError

        try:
            reply = self.peer.request({"kind": "grade", "commit": commit.to_dict()})
        except ProtocolError as exc:
            raise GraderProtocolError(str(exc)) from None
        return reply.get("grade")

    def close(self) -> None:
        self.peer.close()


@dataclass(frozen=True)
class GradeHistogram:
    category: Category
    population: int
    sampled: tuple[str, ...]
    counts: tuple[int, ...] | None  # None when the category is ungraded
    error: str = ""

    @property
    def graded(self) -> bool:
        return self.counts is not None

    def to_dict(self) -> dict:
        return {"category": int(self.category), "population": self.population, "sampled": list(self.sampled),
                "counts": None if self.counts is None else dict(zip(map(str, GRADES), self.counts)),
                "error": self.error}


def sample_commits(commits: list[CommitRecord], cap: int, seed: int, category: Category) -> list[CommitRecord]:
    pool = sorted(commits, key=lambda c: c.id)
    if len(pool) <= cap:
        return pool
    r = rng.stream(seed, "grade-sample", int(category))
    return sorted(r.sample(pool, cap), key=lambda c: c.id)


def grade_automatability(commits_by_category: dict, grader: Grader | None = None, sample_cap: int = 50,
                         seed: int = 0) -> dict[Category, GradeHistogram]:
    """A grade outside 1-5, or any grader failure, marks the whole category ungraded."""
    if sample_cap < 1:
        raise ValueError("sample_cap must be >= 1")
    grader = grader or HeuristicGrader(seed)
    out = {}
    for cat in sorted(commits_by_category):
        commits = list(commits_by_category[cat])
        picked = sample_commits(commits, sample_cap, seed, cat)
        counts = [0] * len(GRADES)
        error = ""
        for c in picked:
            try:
                g = grader.grade(c)
            except GraderProtocolError as exc:
                error = str(exc)
                break
            if isinstance(g, bool) or not isinstance(g, int) or g not in GRADES:
                error = f"grade {g!r} for {c.id} outside 1-5"
                break
            counts[g - 1] += 1
        ids = tuple(c.id for c in picked)
        out[cat] = GradeHistogram(cat, len(commits), ids, None if error else tuple(counts), error)
    return out


def by_category(commits) -> dict[Category, list[CommitRecord]]:
    out: dict[Category, list[CommitRecord]] = {}
    for c in commits:
        out.setdefault(c.category or Category.Uncategorized, []).append(c)
    return out
