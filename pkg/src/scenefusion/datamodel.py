"""Corpus schema: class vocabulary, video entries, manifests, and fold plans.

Manifest file format (UTF-8, one JSON object per line):
  line 1    header  {"name": str, "classes": [str, ...]}
  line 2..  entries {"id": str, "uri": str, "label": str, "split": "train"|"test"}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ManifestParseError, ValidationError

SPLITS = ("train", "test")


@dataclass(frozen=True)
class ClassVocabulary:
    """Ordered class-label list; a label's index is its position."""

    names: tuple[str, ...]

    def __post_init__(self):
        if not self.names:
            raise ValidationError("class vocabulary is empty")
        if any(not n for n in self.names):
            raise ValidationError("class names must be non-empty")
        if len(set(self.names)) != len(self.names):
            raise ValidationError("class names must be unique")

    @property
    def size(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ValidationError(f"unknown class {name!r}") from None


@dataclass(frozen=True)
class VideoEntry:
    id: str
    uri: str
    label: str
    split: str

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValidationError(
                f"entry {self.id!r}: split must be one of {SPLITS}, got {self.split!r}"
            )


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    vocabulary: ClassVocabulary
    entries: tuple[VideoEntry, ...]

    def __post_init__(self):
        if not self.entries:
            raise ValidationError("empty manifest")
        seen: set[str] = set()
        for e in self.entries:
            if e.id in seen:
                raise ValidationError(f"duplicate entry id {e.id!r}")
            seen.add(e.id)
            if e.label not in self.vocabulary.names:
                raise ValidationError(
                    f"entry {e.id!r}: label {e.label!r} not in vocabulary"
                )

    def split_entries(self, split: str) -> tuple[VideoEntry, ...]:
        return tuple(e for e in self.entries if e.split == split)

    def entry_by_id(self, video_id: str) -> VideoEntry:
        for e in self.entries:
            if e.id == video_id:
                return e
        raise KeyError(video_id)


@dataclass(frozen=True)
class FoldPlan:
    """Seeded K-fold assignment over the train split only."""

    k: int
    seed: int
    folds: tuple[tuple[tuple[str, ...], tuple[str, ...]], ...] = field(default=())


def load_manifest(path: str | Path) -> DatasetManifest:
    """Parse and validate a manifest file.

    Raises ManifestParseError (with line number) on malformed input and
    ValidationError on invariant violations.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    lines = [(i + 1, ln) for i, ln in enumerate(lines) if ln.strip()]
    if not lines:
        raise ManifestParseError("manifest file is empty")

    lineno, header_line = lines[0]
    try:
        header = json.loads(header_line)
    except json.JSONDecodeError as exc:
        raise ManifestParseError(f"invalid JSON: {exc}", line=lineno) from exc
    if not isinstance(header, dict) or "name" not in header or "classes" not in header:
        raise ManifestParseError("header must declare 'name' and 'classes'", line=lineno)
    vocab = ClassVocabulary(tuple(header["classes"]))

    entries = []
    for lineno, ln in lines[1:]:
        try:
            rec = json.loads(ln)
        except json.JSONDecodeError as exc:
            raise ManifestParseError(f"invalid JSON: {exc}", line=lineno) from exc
        missing = {"id", "uri", "label", "split"} - set(rec)
        if missing:
            raise ManifestParseError(
                f"entry missing fields {sorted(missing)}", line=lineno
            )
        entries.append(VideoEntry(rec["id"], rec["uri"], rec["label"], rec["split"]))

    return DatasetManifest(header["name"], vocab, tuple(entries))


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"name": manifest.name, "classes": list(manifest.vocabulary.names)}) + "\n")
        for e in manifest.entries:
            fh.write(json.dumps({"id": e.id, "uri": e.uri, "label": e.label, "split": e.split}) + "\n")


def class_distribution(manifest: DatasetManifest) -> dict[str, dict[str, int]]:
    """Per-(class, split) entry counts: {class: {"train": n, "test": m}}."""
    table = {name: {s: 0 for s in SPLITS} for name in manifest.vocabulary.names}
    for e in manifest.entries:
        table[e.label][e.split] += 1
    return table


def make_folds(manifest: DatasetManifest, k: int = 3, seed: int = 0) -> FoldPlan:
    """Build a reproducible K-fold plan over the manifest's train split.

    The sorted train ids are shuffled once with `seed`; fold f's validation
    set is the f-th 20% window of the shuffled order (wrapping), the rest
    is fold-train. Unstratified by design.
    """
    if k < 2:
        raise ValidationError(f"k must be >= 2, got {k}")
    train_ids = sorted(e.id for e in manifest.split_entries("train"))
    n = len(train_ids)
    if n < k:
        raise ValidationError(f"train split has {n} entries, fewer than k={k}")
    rng = np.random.default_rng(seed)
    order = list(rng.permutation(n))
    val_size = max(1, round(0.2 * n))
    folds = []
    for f in range(k):
        val_pos = {order[(f * val_size + j) % n] for j in range(val_size)}
        val = tuple(train_ids[i] for i in sorted(val_pos))
        train = tuple(t for i, t in enumerate(train_ids) if i not in val_pos)
        folds.append((train, val))
    return FoldPlan(k=k, seed=seed, folds=tuple(folds))
