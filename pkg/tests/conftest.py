import json
from pathlib import Path

import numpy as np
import pytest

from scenefusion import ingest
from scenefusion.clients import StubSpeechToText
from scenefusion.datamodel import load_manifest
from scenefusion.synthetic import write_constant_video


@pytest.fixture
def make_video(tmp_path):
    """Write a lossless constant-color test video and return its path."""

    def _make(name="clip.avi", seconds=4, gray=128, fps=2.0):
        path = tmp_path / name
        write_constant_video(path, (gray, gray, gray), seconds, fps=fps)
        return path

    return _make


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """A 9-class x 2-video synthetic corpus, ingested and ready for featurizing."""
    from scenefusion.synthetic import generate_corpus

    root = tmp_path_factory.mktemp("tiny_corpus")
    manifest_path, transcripts_path = generate_corpus(root, per_class=2, seed=11)
    manifest = load_manifest(manifest_path)
    stt = StubSpeechToText(json.loads(Path(transcripts_path).read_text()))
    cache_dir = root / "cache"
    for entry in manifest.entries:
        ingest.ingest_entry(entry, stt, cache_dir)
    return {
        "root": root,
        "manifest_path": manifest_path,
        "transcripts_path": transcripts_path,
        "manifest": manifest,
        "cache_dir": cache_dir,
    }


@pytest.fixture
def random_prob_vector():
    rng = np.random.default_rng(123)

    def _make(n=9):
        v = rng.random(n)
        return v / v.sum()

    return _make
