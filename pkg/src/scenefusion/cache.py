"""On-disk artifact cache: raw little-endian float32 tensors with JSON sidecars.

Layout under a cache root:
  ingest/<video_id>/frames.bin + frames.json        sampled frame tensor
  ingest/<video_id>/transcript.txt + transcript.json
  features/<kind>/<video_id>.bin + .json            fold-independent features
  features/count_vect/fold<f>/<video_id>.bin + .json  (+ vocab.json per fold)

All writes go through a temp file and os.replace, so a crash never leaves a
partial entry.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import MissingFeatureError


def atomic_write_bytes(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_json(path: Path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=1) + "\n")


def write_tensor(base: Path, array: np.ndarray, meta: dict) -> None:
    """Write <base>.bin (float32 LE, index order) and <base>.json sidecar."""
    data = np.ascontiguousarray(array, dtype="<f4")
    meta = dict(meta, shape=list(array.shape), dtype="float32")
    atomic_write_bytes(base.with_suffix(".bin"), data.tobytes())
    atomic_write_json(base.with_suffix(".json"), meta)


def read_tensor(base: Path) -> tuple[np.ndarray, dict]:
    json_path = base.with_suffix(".json")
    bin_path = base.with_suffix(".bin")
    if not json_path.exists() or not bin_path.exists():
        raise MissingFeatureError(f"no cached tensor at {base}")
    with json_path.open("r", encoding="utf-8") as fh:
        meta = json.load(fh)
    array = np.frombuffer(bin_path.read_bytes(), dtype="<f4").reshape(meta["shape"])
    return array, meta


class FeatureStore:
    """Read/write view over the `features/` namespace of a cache root."""

    def __init__(self, cache_root: str | Path):
        self.root = Path(cache_root) / "features"

    def _base(self, kind: str, video_id: str, fold: int | None = None) -> Path:
        if fold is None:
            return self.root / kind / video_id
        return self.root / kind / f"fold{fold}" / video_id

    def put(self, kind: str, video_id: str, array: np.ndarray, fold: int | None = None) -> None:
        write_tensor(self._base(kind, video_id, fold), array, {"kind": kind, "video_id": video_id})

    def get(self, kind: str, video_id: str, fold: int | None = None) -> np.ndarray:
        try:
            array, _ = read_tensor(self._base(kind, video_id, fold))
        except MissingFeatureError:
            raise MissingFeatureError(
                f"feature {kind!r} not cached for video {video_id!r}"
                + (f" (fold {fold})" if fold is not None else "")
            ) from None
        return array

    def has(self, kind: str, video_id: str, fold: int | None = None) -> bool:
        return self._base(kind, video_id, fold).with_suffix(".json").exists()

    def fold_dir(self, kind: str, fold: int) -> Path:
        return self.root / kind / f"fold{fold}"
