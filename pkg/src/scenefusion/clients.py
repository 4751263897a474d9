"""Adapters for external learned resources, each with a deterministic offline stub.

The stubs are pure functions of their input bytes (hash-seeded), so the whole
pipeline can run hermetically: the speech stub answers from a sidecar mapping
keyed by video id, the backbone stub projects a frame hash onto the probability
simplex, the sentence-encoder stub hashes text into a fixed 768-vector, and the
hashed embedding table derives a per-token vector from the token itself.
"""

from __future__ import annotations

import hashlib
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .errors import ClientError, ValidationError

SENTENCE_DIM = 768
WORD_DIM = 100
BACKBONE_DIMS = {"object-1000": 1000, "place-365": 365}


@dataclass
class AudioTrack:
    """Mono audio at a fixed sample rate, tagged with its source video id."""

    samples: np.ndarray  # float32, shape (n,)
    sample_rate: int
    video_id: str

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def is_silent(self) -> bool:
        return len(self.samples) == 0 or not np.any(self.samples)


def _hash_rng(*parts: bytes) -> np.random.Generator:
    digest = hashlib.blake2b(b"\x1f".join(parts), digest_size=16).digest()
    return np.random.default_rng(int.from_bytes(digest, "little"))


# ---------------------------------------------------------------------------
# Speech to text
# ---------------------------------------------------------------------------


class SpeechToTextClient:
    """Interface: turn an audio track into a raw transcript."""

    language = "en"

    def transcribe(self, audio: AudioTrack) -> str:
        raise NotImplementedError


@dataclass
class StubSpeechToText(SpeechToTextClient):
    """Answers from a video-id -> transcript mapping; unknown or silent -> ""."""

    mapping: dict[str, str] = field(default_factory=dict)
    language: str = "en"

    @classmethod
    def from_sidecar(cls, path: str | Path, language: str = "en") -> "StubSpeechToText":
        import json

        with Path(path).open("r", encoding="utf-8") as fh:
            return cls(mapping=json.load(fh), language=language)

    def transcribe(self, audio: AudioTrack) -> str:
        return self.mapping.get(audio.video_id, "")


class RetryingSpeechToText(SpeechToTextClient):
    """Wraps a flaky transcription callable with bounded retries."""

    def __init__(self, call, attempts: int = 3, backoff: float = 0.5, language: str = "en"):
        self._call = call
        self.attempts = attempts
        self.backoff = backoff
        self.language = language

    def transcribe(self, audio: AudioTrack) -> str:
        last: Exception | None = None
        for attempt in range(self.attempts):
            try:
                return self._call(audio)
            except Exception as exc:  # noqa: BLE001 - remote failures are opaque
                last = exc
                if attempt + 1 < self.attempts:
                    time.sleep(self.backoff * (attempt + 1))
        raise ClientError(f"transcription failed after {self.attempts} attempts: {last}") from last


# ---------------------------------------------------------------------------
# Image backbone
# ---------------------------------------------------------------------------


class ImageBackboneClient:
    """Interface: frame -> class-probability vector (softmax output)."""

    taxonomy: str
    output_dim: int

    def classify_frame(self, frame: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class StubImageBackbone(ImageBackboneClient):
    """Hash-seeded probability vector per distinct frame content.

    Frames are resized (bilinear) to the native 64x64 input and quantized to
    uint8 before hashing, so visually identical frames map to identical
    descriptors regardless of float jitter below 1/255.
    """

    native_size = 64

    def __init__(self, taxonomy: str = "object-1000", seed: int = 0):
        if taxonomy not in BACKBONE_DIMS:
            raise ValidationError(f"unknown taxonomy {taxonomy!r}")
        self.taxonomy = taxonomy
        self.output_dim = BACKBONE_DIMS[taxonomy]
        self.seed = seed

    def classify_frame(self, frame: np.ndarray) -> np.ndarray:
        if frame.ndim != 3 or frame.shape[2] != 3:
            raise ValidationError(f"frame must be HxWx3, got shape {frame.shape}")
        if frame.shape[:2] != (self.native_size, self.native_size):
            frame = cv2.resize(
                frame.astype(np.float32),
                (self.native_size, self.native_size),
                interpolation=cv2.INTER_LINEAR,
            )
        quantized = np.clip(np.round(np.asarray(frame) * 255.0), 0, 255).astype(np.uint8)
        rng = _hash_rng(
            quantized.tobytes(), self.taxonomy.encode(), str(self.seed).encode()
        )
        # scale sharpens the softmax so descriptors are strongly patterned
        logits = 4.0 * rng.normal(size=self.output_dim)
        exp = np.exp(logits - logits.max())
        return exp / exp.sum()


class TorchvisionBackbone(ImageBackboneClient):
    """Live VGG16 adapter; requires torchvision weights to be available."""

    def __init__(self, taxonomy: str = "object-1000"):
        if taxonomy != "object-1000":
            raise ClientError(
                "live backbone supports only the object-1000 taxonomy; "
                "place-365 weights are not bundled"
            )
        try:
            import torch
            import torchvision
        except ImportError as exc:  # pragma: no cover - environment dependent
            raise ClientError("torchvision is not installed") from exc
        try:
            self._model = torchvision.models.vgg16(weights="IMAGENET1K_V1").eval()
        except Exception as exc:  # pragma: no cover - needs weight download
            raise ClientError(f"backbone unavailable: {exc}") from exc
        self._torch = torch
        self.taxonomy = taxonomy
        self.output_dim = 1000

    def classify_frame(self, frame: np.ndarray) -> np.ndarray:  # pragma: no cover
        torch = self._torch
        img = cv2.resize(frame.astype(np.float32), (224, 224), interpolation=cv2.INTER_LINEAR)
        mean = np.array([0.485, 0.456, 0.406], np.float32)
        std = np.array([0.229, 0.224, 0.225], np.float32)
        x = torch.from_numpy(((img - mean) / std).transpose(2, 0, 1)).unsqueeze(0)
        with torch.no_grad():
            probs = torch.softmax(self._model(x), dim=1)[0].numpy()
        return probs.astype(np.float64)


# ---------------------------------------------------------------------------
# Sentence encoder
# ---------------------------------------------------------------------------


class SentenceEncoderClient:
    """Interface: text -> fixed 768-vector; empty text -> zero vector."""

    output_dim = SENTENCE_DIM

    def encode(self, text: str) -> np.ndarray:
        raise NotImplementedError


class StubSentenceEncoder(SentenceEncoderClient):
    def __init__(self, seed: int = 0):
        self.seed = seed

    def encode(self, text: str) -> np.ndarray:
        if not text.strip():
            return np.zeros(SENTENCE_DIM)
        rng = _hash_rng(text.encode("utf-8"), str(self.seed).encode())
        return rng.normal(size=SENTENCE_DIM)


class SbertSentenceEncoder(SentenceEncoderClient):  # pragma: no cover - needs model download
    """Live sentence-transformers adapter, model name from SCENEFUSION_SBERT_MODEL."""

    def __init__(self, model_name: str | None = None):
        model_name = model_name or os.environ.get("SCENEFUSION_SBERT_MODEL")
        if not model_name:
            raise ClientError("no sentence encoder configured (set SCENEFUSION_SBERT_MODEL)")
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise ClientError("sentence-transformers is not installed") from exc
        self._model = SentenceTransformer(model_name)

    def encode(self, text: str) -> np.ndarray:
        if not text.strip():
            return np.zeros(SENTENCE_DIM)
        vec = np.asarray(self._model.encode(text), dtype=np.float64)
        if vec.shape != (SENTENCE_DIM,):
            raise ClientError(f"encoder returned shape {vec.shape}, expected ({SENTENCE_DIM},)")
        return vec


# ---------------------------------------------------------------------------
# Word embeddings
# ---------------------------------------------------------------------------


class WordEmbeddingTable:
    """Token -> vector map of fixed dimension; unknown tokens map to zeros."""

    def __init__(self, vectors: dict[str, np.ndarray], dim: int = WORD_DIM):
        self.dim = dim
        for token, vec in vectors.items():
            if vec.shape != (dim,):
                raise ValidationError(
                    f"embedding for {token!r} has shape {vec.shape}, expected ({dim},)"
                )
        self._vectors = vectors

    def __len__(self) -> int:
        return len(self._vectors)

    def __contains__(self, token: str) -> bool:
        return token in self._vectors

    def lookup(self, token: str) -> np.ndarray:
        vec = self._vectors.get(token)
        return np.zeros(self.dim) if vec is None else vec


class HashedEmbeddingTable(WordEmbeddingTable):
    """Stub table: every token gets a deterministic hash-seeded vector."""

    def __init__(self, dim: int = WORD_DIM, seed: int = 0):
        super().__init__({}, dim=dim)
        self.seed = seed

    def __contains__(self, token: str) -> bool:
        return True

    def lookup(self, token: str) -> np.ndarray:
        rng = _hash_rng(token.encode("utf-8"), str(self.seed).encode())
        return rng.normal(size=self.dim)


def load_embedding_table(path: str | Path, dim: int = WORD_DIM) -> WordEmbeddingTable:
    """Read a text embedding file: one token followed by `dim` floats per line."""
    vectors: dict[str, np.ndarray] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != dim + 1:
                raise ValidationError(
                    f"{path}:{lineno}: expected token + {dim} floats, got {len(parts)} fields"
                )
            vectors[parts[0]] = np.array([float(v) for v in parts[1:]])
    return WordEmbeddingTable(vectors, dim=dim)


def save_embedding_table(table: WordEmbeddingTable, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for token, vec in sorted(table._vectors.items()):
            fh.write(token + " " + " ".join(f"{v:.6f}" for v in vec) + "\n")
