"""Skeleton of a category-discovery pipeline.

Commits are split into groups, a consolidator proposes candidate labels
per group, the candidate lists are merged and reduced to a final label
set.  No model ships with this package; the consolidator is pluggable
and the bundled one only counts heuristic categories.
"""

from __future__ import annotations

from collections import Counter
from typing import Protocol

from isamig.taxonomy.classify import classify_heuristic
from isamig.taxonomy.model import CommitRecord


class Consolidator(Protocol):
    def propose(self, commits: list[CommitRecord], k: int) -> list[str]: ...

    def merge(self, proposals: list[list[str]], k: int) -> list[str]: ...


class CountingConsolidator:
    """Stand-in: proposes the most frequent heuristic labels."""

    def propose(self, commits: list[CommitRecord], k: int) -> list[str]:
        counts = Counter(classify_heuristic(c).label for c in commits)
        return [name for name, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:k]]

    def merge(self, proposals: list[list[str]], k: int) -> list[str]:
        counts = Counter(label for group in proposals for label in group)
        return [name for name, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:k]]


def discover_categories(commits, consolidator: Consolidator, group_size: int = 100,
                        per_group: int = 20, stages: tuple[int, ...] = (50, 16)) -> list[str]:
    commits = sorted(commits, key=lambda c: c.id)
    if group_size < 1:
        raise ValueError("group_size must be >= 1")
    proposals = [consolidator.propose(commits[i:i + group_size], per_group)
                 for i in range(0, len(commits), group_size)]
    labels: list[str] = []
    for k in stages:
        labels = consolidator.merge(proposals, k)
        proposals = [labels]
    return labels
