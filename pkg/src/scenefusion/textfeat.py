"""Transcript -> the four text feature representations.

Kinds and shapes:
  count_vect  (100,)      vocabulary indices of the first 100 tokens (0 = pad/OOV)
  w2v_pad     (100, 100)  per-token embeddings, zero-padded rows
  w2v_sum     (100,)      element-wise sum of all token embeddings
  sent_bert   (768,)      sentence-encoder output
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .clients import SentenceEncoderClient, WordEmbeddingTable
from .errors import ValidationError
from .ingest import Transcript

MAX_TOKENS = 100
VOCAB_CAP = 20000

TEXT_KINDS = ("count_vect", "w2v_pad", "w2v_sum", "sent_bert")
TEXT_SHAPES = {
    "count_vect": (100,),
    "w2v_pad": (100, 100),
    "w2v_sum": (100,),
    "sent_bert": (768,),
}

_PUNCT = set("!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~")


@dataclass(frozen=True)
class TokenizedDoc:
    video_id: str
    tokens: tuple[str, ...]


@dataclass(frozen=True)
class CountVocab:
    """Frequency-ranked token -> 1-based index map; 0 is reserved for pad/OOV."""

    index: dict[str, int]

    @property
    def size(self) -> int:
        return len(self.index)


@dataclass(frozen=True)
class TextFeature:
    kind: str
    data: np.ndarray
    video_id: str

    def __post_init__(self):
        if self.kind not in TEXT_KINDS:
            raise ValidationError(f"unknown text feature kind {self.kind!r}")
        if self.data.shape != TEXT_SHAPES[self.kind]:
            raise ValidationError(
                f"{self.kind} feature has shape {self.data.shape}, "
                f"expected {TEXT_SHAPES[self.kind]}"
            )


def load_stopwords(path: str | Path | None = None) -> frozenset[str]:
    """Load the stopword list; defaults to the English list shipped in-package."""
    if path is None:
        text = resources.files("scenefusion").joinpath("data/stopwords_en.txt").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


def normalize_and_tokenize(raw: str, stopwords: frozenset[str], video_id: str = "") -> TokenizedDoc:
    """Lowercase, replace punctuation with spaces, split, drop stopwords."""
    lowered = raw.lower()
    cleaned = "".join(" " if c in _PUNCT else c for c in lowered)
    tokens = tuple(t for t in cleaned.split() if t not in stopwords)
    return TokenizedDoc(video_id, tokens)


def build_count_vocab(training_docs: list[TokenizedDoc], cap: int = VOCAB_CAP) -> CountVocab:
    """Rank tokens by corpus frequency (ties lexicographic), truncate to cap."""
    if not training_docs:
        raise ValidationError("cannot build a vocabulary from an empty corpus")
    freq = Counter()
    for doc in training_docs:
        freq.update(doc.tokens)
    ranked = sorted(freq, key=lambda t: (-freq[t], t))[:cap]
    return CountVocab({t: i for i, t in enumerate(ranked, start=1)})


def vectorize_count(doc: TokenizedDoc, vocab: CountVocab) -> TextFeature:
    data = np.zeros(MAX_TOKENS, dtype=np.float32)
    for i, token in enumerate(doc.tokens[:MAX_TOKENS]):
        data[i] = vocab.index.get(token, 0)
    return TextFeature("count_vect", data, doc.video_id)


def embed_w2v_pad(doc: TokenizedDoc, table: WordEmbeddingTable) -> TextFeature:
    if table.dim != MAX_TOKENS:
        raise ValidationError(f"embedding dim must be {MAX_TOKENS}, got {table.dim}")
    data = np.zeros((MAX_TOKENS, MAX_TOKENS), dtype=np.float32)
    for i, token in enumerate(doc.tokens[:MAX_TOKENS]):
        data[i] = table.lookup(token)
    return TextFeature("w2v_pad", data, doc.video_id)


def embed_w2v_sum(doc: TokenizedDoc, table: WordEmbeddingTable) -> TextFeature:
    """Sum embeddings of ALL tokens; only the padded variant truncates at 100."""
    if table.dim != MAX_TOKENS:
        raise ValidationError(f"embedding dim must be {MAX_TOKENS}, got {table.dim}")
    data = np.zeros(MAX_TOKENS, dtype=np.float64)
    for token in doc.tokens:
        data += table.lookup(token)
    return TextFeature("w2v_sum", data.astype(np.float32), doc.video_id)


def encode_sentbert(transcript: Transcript, client: SentenceEncoderClient) -> TextFeature:
    vec = np.asarray(client.encode(transcript.raw_text), dtype=np.float32)
    return TextFeature("sent_bert", vec, transcript.video_id)
