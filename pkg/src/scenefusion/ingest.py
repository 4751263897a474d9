"""Raw video -> the two modality sources: sampled frames and a transcript.

Frames are sampled at one per second from t=0, truncated at 10, resized to
64x64 RGB in [0,1], and zero-padded to a fixed 10x64x64x3 tensor. Audio is
decoded to 16 kHz mono when an ffmpeg binary is available; otherwise (or when
the container has no audio stream) a silent track is produced with a warning.
Both artifacts are cached per video id; re-ingestion is a byte-identical hit.
"""

from __future__ import annotations

import json
import logging
import math
import os
import shutil
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from . import cache
from .clients import AudioTrack, SpeechToTextClient
from .datamodel import VideoEntry
from .errors import IngestError, ValidationError

log = logging.getLogger(__name__)

NUM_FRAMES = 10
FRAME_SIZE = 64
AUDIO_RATE = 16000


@dataclass(frozen=True)
class FrameSequence:
    """Fixed-length sampled frame tensor with pad bookkeeping."""

    frames: np.ndarray  # (10, 64, 64, 3) float32 in [0, 1]
    real_count: int
    video_id: str

    def __post_init__(self):
        if self.frames.shape != (NUM_FRAMES, FRAME_SIZE, FRAME_SIZE, 3):
            raise ValidationError(f"frame tensor has shape {self.frames.shape}")
        if not (0 <= self.real_count <= NUM_FRAMES):
            raise ValidationError(f"real_count {self.real_count} out of range")
        if self.frames.min() < 0 or self.frames.max() > 1:
            raise ValidationError("frame values must lie in [0, 1]")
        if self.real_count < NUM_FRAMES and np.any(self.frames[self.real_count :]):
            raise ValidationError("padding frames must be all-zero")


@dataclass(frozen=True)
class Transcript:
    video_id: str
    raw_text: str
    language: str = "en"


def sample_frames(uri: str | Path, video_id: str | None = None) -> FrameSequence:
    """Decode a video and sample one frame per second from t=0 (max 10)."""
    video_id = video_id if video_id is not None else Path(uri).stem
    cap = cv2.VideoCapture(str(uri))
    if not cap.isOpened():
        raise IngestError(f"cannot open video {uri}", video_id=video_id)
    try:
        fps = cap.get(cv2.CAP_PROP_FPS)
        if not fps or fps <= 0 or math.isnan(fps):
            fps = 1.0
        raw: list[np.ndarray] = []
        total = 0
        wanted = {int(round(t * fps)) for t in range(NUM_FRAMES)}
        idx = 0
        while len(raw) < NUM_FRAMES:
            ok, frame = cap.read()
            if not ok:
                break
            if idx in wanted:
                raw.append(frame)
            idx += 1
            total += 1
        # drain to count total frames for the duration-based real_count rule
        while True:
            ok = cap.grab()
            if not ok:
                break
            total += 1
    finally:
        cap.release()

    duration = total / fps
    tensor = np.zeros((NUM_FRAMES, FRAME_SIZE, FRAME_SIZE, 3), dtype=np.float32)
    if total == 0:
        log.warning("video %s decoded to zero frames", video_id)
        return FrameSequence(tensor, 0, video_id)

    real_count = min(NUM_FRAMES, max(1, math.floor(duration)))
    for i in range(min(real_count, len(raw))):
        frame = raw[i]
        if frame.shape[:2] != (FRAME_SIZE, FRAME_SIZE):
            frame = cv2.resize(frame, (FRAME_SIZE, FRAME_SIZE), interpolation=cv2.INTER_LINEAR)
        rgb = cv2.cvtColor(frame, cv2.COLOR_BGR2RGB)
        tensor[i] = rgb.astype(np.float32) / 255.0
    return FrameSequence(tensor, real_count, video_id)


def _probe_duration(uri: str | Path) -> float:
    cap = cv2.VideoCapture(str(uri))
    try:
        fps = cap.get(cv2.CAP_PROP_FPS) or 1.0
        count = cap.get(cv2.CAP_PROP_FRAME_COUNT)
        return max(0.0, count / fps) if fps > 0 else 0.0
    finally:
        cap.release()


def extract_audio(uri: str | Path, video_id: str | None = None) -> AudioTrack:
    """Decode the audio stream to 16 kHz mono; silent track if there is none."""
    video_id = video_id if video_id is not None else Path(uri).stem
    ffmpeg = shutil.which("ffmpeg")
    if ffmpeg:
        proc = subprocess.run(
            [ffmpeg, "-v", "error", "-i", str(uri), "-vn", "-ac", "1",
             "-ar", str(AUDIO_RATE), "-f", "f32le", "-"],
            capture_output=True,
        )
        if proc.returncode == 0 and proc.stdout:
            samples = np.frombuffer(proc.stdout, dtype="<f4")
            return AudioTrack(samples, AUDIO_RATE, video_id)
    duration = _probe_duration(uri)
    log.warning("no decodable audio stream in %s; using silent track", video_id)
    samples = np.zeros(int(round(duration * AUDIO_RATE)), dtype=np.float32)
    return AudioTrack(samples, AUDIO_RATE, video_id)


def _ingest_dir(cache_root: str | Path, video_id: str) -> Path:
    return Path(cache_root) / "ingest" / video_id


def is_ingested(cache_root: str | Path, video_id: str) -> bool:
    d = _ingest_dir(cache_root, video_id)
    return (d / "frames.json").exists() and (d / "transcript.json").exists()


def load_frame_sequence(cache_root: str | Path, video_id: str) -> FrameSequence:
    array, meta = cache.read_tensor(_ingest_dir(cache_root, video_id) / "frames")
    return FrameSequence(np.array(array), meta["real_count"], meta["video_id"])


def load_transcript(cache_root: str | Path, video_id: str) -> Transcript:
    d = _ingest_dir(cache_root, video_id)
    with (d / "transcript.json").open("r", encoding="utf-8") as fh:
        meta = json.load(fh)
    text = (d / "transcript.txt").read_text(encoding="utf-8")
    return Transcript(meta["video_id"], text, meta["language"])


def ingest_entry(
    entry: VideoEntry, stt: SpeechToTextClient, cache_root: str | Path
) -> tuple[FrameSequence, Transcript]:
    """Ingest one entry with idempotent caching; partial results are never cached."""
    if is_ingested(cache_root, entry.id):
        return load_frame_sequence(cache_root, entry.id), load_transcript(cache_root, entry.id)

    try:
        seq = sample_frames(entry.uri, video_id=entry.id)
        audio = extract_audio(entry.uri, video_id=entry.id)
        text = stt.transcribe(audio)
    except IngestError:
        raise
    except Exception as exc:
        raise IngestError(str(exc), video_id=entry.id) from exc

    transcript = Transcript(entry.id, text, stt.language)

    final = _ingest_dir(cache_root, entry.id)
    final.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(dir=final.parent, prefix=".tmp-"))
    try:
        cache.write_tensor(tmp / "frames", seq.frames,
                           {"real_count": seq.real_count, "video_id": seq.video_id})
        cache.atomic_write_text(tmp / "transcript.txt", transcript.raw_text)
        cache.atomic_write_json(
            tmp / "transcript.json",
            {"video_id": transcript.video_id, "language": transcript.language},
        )
        os.replace(tmp, final)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return seq, transcript
