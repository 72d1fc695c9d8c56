"""Commit taxonomy: schema, classification, statistics and grading."""

from isamig.taxonomy.aggregate import CategoryStats, TimeSeries, aggregate, category_stats, quantile, time_series
from isamig.taxonomy.categories import CATEGORY_OF_DEFECT, GROUPS, Category
from isamig.taxonomy.classify import (
    HeuristicClassifier,
    SubprocessClassifier,
    batch_classify,
    classify,
    classify_heuristic,
    make_classifier,
)
from isamig.taxonomy.grade import HeuristicGrader, grade_automatability
from isamig.taxonomy.model import CommitRecord, FileDiff, dumps_corpus, load_corpus, loads_corpus, save_corpus


def golden_corpus() -> list[CommitRecord]:
    from importlib.resources import files

    return loads_corpus(files("isamig.taxonomy").joinpath("data/golden_corpus.jsonl").read_text("utf-8"))


__all__ = [
    "CATEGORY_OF_DEFECT", "GROUPS", "Category", "CategoryStats", "CommitRecord", "FileDiff",
    "HeuristicClassifier", "HeuristicGrader", "SubprocessClassifier", "TimeSeries", "aggregate",
    "batch_classify", "category_stats", "classify", "classify_heuristic", "dumps_corpus", "golden_corpus",
    "grade_automatability", "load_corpus", "loads_corpus", "make_classifier", "quantile", "save_corpus",
    "time_series",
]
