"""Procedural synthetic corpus generation for hermetic end-to-end runs.

Each class gets a distinct constant frame color and a small keyword
vocabulary; every video is a constant-color clip of seeded random duration
with a keyword transcript in a sidecar file (consumed by the stub speech
client). Videos are written losslessly (FFV1) so decoded frames are
byte-identical within a class, which keeps the hash-seeded backbone stub's
descriptors class-consistent.
"""

from __future__ import annotations

import colorsys
import json
from pathlib import Path

import cv2
import numpy as np

from . import cache
from .datamodel import ClassVocabulary, DatasetManifest, VideoEntry, save_manifest

DEFAULT_CLASSES = (
    "cafe", "library", "gym", "kitchen", "office",
    "aquarium", "stadium", "garage", "museum",
)

FILLER_WORDS = ("video", "today", "place", "look", "around", "really")


def class_color(index: int, total: int) -> tuple[int, int, int]:
    """Distinct BGR color per class (evenly spaced hues)."""
    r, g, b = colorsys.hsv_to_rgb(index / max(1, total), 0.85, 0.9)
    return int(b * 255), int(g * 255), int(r * 255)


def class_keywords(name: str) -> tuple[str, ...]:
    return (name,) + tuple(f"{name}word{j}" for j in range(5))


def write_constant_video(path: Path, bgr: tuple[int, int, int], seconds: int,
                         fps: float = 2.0, size: int = 64) -> None:
    writer = cv2.VideoWriter(
        str(path), cv2.VideoWriter_fourcc(*"FFV1"), fps, (size, size)
    )
    if not writer.isOpened():
        raise RuntimeError(f"cannot open video writer for {path}")
    frame = np.full((size, size, 3), bgr, dtype=np.uint8)
    for _ in range(int(round(seconds * fps))):
        writer.write(frame)
    writer.release()


def generate_corpus(
    root: str | Path,
    classes: tuple[str, ...] = DEFAULT_CLASSES,
    per_class: int = 10,
    seed: int = 0,
    train_ratio: float = 0.7,
    fps: float = 2.0,
    name: str = "synthetic",
) -> tuple[Path, Path]:
    """Write videos, a manifest, and a transcript sidecar under `root`.

    Returns (manifest_path, transcripts_path).
    """
    root = Path(root)
    video_dir = root / "videos"
    video_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    entries: list[VideoEntry] = []
    transcripts: dict[str, str] = {}
    n_train = int(round(train_ratio * per_class))

    for ci, cls in enumerate(classes):
        color = class_color(ci, len(classes))
        keywords = class_keywords(cls)
        for vi in range(per_class):
            vid = f"{cls}-{vi:03d}"
            path = video_dir / f"{vid}.avi"
            seconds = int(rng.integers(2, 11))
            write_constant_video(path, color, seconds, fps=fps)

            words = list(rng.choice(keywords, size=12)) + list(rng.choice(FILLER_WORDS, size=3))
            rng.shuffle(words)
            transcripts[vid] = " ".join(words)

            split = "train" if vi < n_train else "test"
            entries.append(VideoEntry(vid, str(path), cls, split))

    manifest = DatasetManifest(name, ClassVocabulary(tuple(classes)), tuple(entries))
    manifest_path = root / f"{name}.manifest"
    save_manifest(manifest, manifest_path)

    transcripts_path = root / "transcripts.json"
    cache.atomic_write_json(transcripts_path, transcripts)
    return manifest_path, transcripts_path


def permute_labels(manifest: DatasetManifest, seed: int) -> DatasetManifest:
    """Shuffle labels across entries (chance-level control experiment)."""
    rng = np.random.default_rng(seed)
    labels = [e.label for e in manifest.entries]
    order = rng.permutation(len(labels))
    entries = tuple(
        VideoEntry(e.id, e.uri, labels[order[i]], e.split)
        for i, e in enumerate(manifest.entries)
    )
    return DatasetManifest(manifest.name + "-permuted", manifest.vocabulary, entries)
