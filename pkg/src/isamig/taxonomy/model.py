"""Commit records and the line-delimited JSON corpus format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from isamig.errors import FormatError, IntegrityError
from isamig.taxonomy.categories import Category


@dataclass(frozen=True)
class FileDiff:
    path: str
    lines_added: int
    lines_removed: int
    hunk: str = ""

    def __post_init__(self):
        if not self.path:
            raise IntegrityError("file diff with empty path")
        if self.lines_added < 0 or self.lines_removed < 0:
            raise IntegrityError(f"{self.path}: negative line counts")

    def to_dict(self) -> dict:
        return {"path": self.path, "lines_added": self.lines_added, "lines_removed": self.lines_removed,
                "hunk": self.hunk}


@dataclass(frozen=True)
class CommitRecord:
    id: str
    day: int
    message: str
    file_diffs: tuple[FileDiff, ...] = ()
    automated: bool = False
    category: Category | None = None
    origin: str = ""
    tags: tuple[str, ...] = field(default=("isa-migration",))

    @property
    def loc_delta(self) -> int:
        return sum(d.lines_added + d.lines_removed for d in self.file_diffs)

    @property
    def paths(self) -> tuple[str, ...]:
        return tuple(d.path for d in self.file_diffs)

    def with_category(self, category: Category) -> "CommitRecord":
        return replace(self, category=category)

    def to_dict(self) -> dict:
        return {
            "id": self.id, "day": self.day, "message": self.message,
            "file_diffs": [d.to_dict() for d in self.file_diffs],
            "loc_delta": self.loc_delta, "automated": self.automated,
            "category": None if self.category is None else int(self.category),
            "origin": self.origin, "tags": list(self.tags),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CommitRecord":
        try:
            diffs = tuple(FileDiff(x["path"], int(x["lines_added"]), int(x["lines_removed"]), x.get("hunk", ""))
                          for x in d.get("file_diffs", []))
            cat = d.get("category")
            return cls(str(d["id"]), int(d.get("day", 0)), d.get("message", ""), diffs,
                       bool(d.get("automated", False)), None if cat is None else Category.parse(cat),
                       d.get("origin", ""), tuple(d.get("tags", ("isa-migration",))))
        except KeyError as exc:
            raise FormatError(f"commit record missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise FormatError(f"bad commit record: {exc}") from None


def dumps_corpus(commits) -> str:
    return "".join(json.dumps(c.to_dict(), sort_keys=True, ensure_ascii=False) + "\n" for c in commits)


def loads_corpus(text: str) -> list[CommitRecord]:
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"corpus line {n}: {exc.msg}") from None
        if not isinstance(doc, dict):
            raise FormatError(f"corpus line {n}: not an object")
        try:
            out.append(CommitRecord.from_dict(doc))
        except FormatError as exc:
            raise FormatError(f"corpus line {n}: {exc}") from None
    return out


def save_corpus(commits, path) -> None:
    Path(path).write_text(dumps_corpus(commits), encoding="utf-8")


def load_corpus(path) -> list[CommitRecord]:
    return loads_corpus(Path(path).read_text(encoding="utf-8"))
