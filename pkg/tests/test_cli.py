import json
import shutil
from importlib import resources
from pathlib import Path

import pytest
from click.testing import CliRunner

from scenefusion import ingest
from scenefusion.cli import main
from scenefusion.clients import StubSpeechToText
from scenefusion.datamodel import load_manifest
from scenefusion.synthetic import generate_corpus

runner = CliRunner()

ALL_TEXT = ("count_vect", "w2v_pad", "w2v_sum", "sent_bert")
ALL_VISUAL = ("frames", "imgn_feat", "plc_feat")


def shipped_manifest(name):
    return str(resources.files("scenefusion") / "data" / name)


@pytest.fixture(scope="module")
def featurized_corpus(tmp_path_factory):
    """A 9x3 synthetic corpus, ingested and featurized with every kind."""
    root = tmp_path_factory.mktemp("cli_corpus")
    manifest_path, transcripts_path = generate_corpus(root, per_class=3, seed=5)
    manifest = load_manifest(manifest_path)
    stt = StubSpeechToText(json.loads(Path(transcripts_path).read_text()))
    cache_dir = root / "cache"
    for entry in manifest.entries:
        ingest.ingest_entry(entry, stt, cache_dir)
    args = [
        "featurize", str(manifest_path), str(cache_dir),
        "--stub-clients", "--k", "3", "--seed", "0",
    ]
    for kind in ALL_TEXT:
        args += ["--text", kind]
    for kind in ALL_VISUAL:
        args += ["--visual", kind]
    result = runner.invoke(main, args)
    assert result.exit_code == 0, result.output
    return {"manifest_path": manifest_path, "cache_dir": cache_dir, "manifest": manifest}


@pytest.fixture(scope="module")
def train_run(featurized_corpus, tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("run") / "exp"
    config = {
        "manifest": str(featurized_corpus["manifest_path"]),
        "cache_dir": str(featurized_corpus["cache_dir"]),
        "fusion": "early",
        "text_kind": "w2v_sum",
        "visual_kind": "imgn_feat",
        "epochs": 2,
        "k": 3,
        "seed": 0,
        "out_dir": str(out_dir),
    }
    config_path = out_dir.parent / "config.json"
    config_path.write_text(json.dumps(config))
    result = runner.invoke(main, ["train", str(config_path)])
    assert result.exit_code == 0, result.output
    return {"out_dir": out_dir, "config": config, "output": result.output}


class TestValidate:
    def test_shipped_manifest_table(self):
        result = runner.invoke(main, ["validate", shipped_manifest("instaindoor.manifest")])
        assert result.exit_code == 0
        assert "9 classes" in result.output
        assert "3788" in result.output

    def test_malformed_manifest_exit_2(self, tmp_path):
        bad = tmp_path / "bad.manifest"
        bad.write_text("this is not json\n")
        result = runner.invoke(main, ["validate", str(bad)])
        assert result.exit_code == 2
        assert "line 1" in result.output

    def test_missing_file_exit_1(self, tmp_path):
        result = runner.invoke(main, ["validate", str(tmp_path / "absent.manifest")])
        assert result.exit_code == 1


class TestIngest:
    def _corpus(self, tmp_path):
        manifest_path, _ = generate_corpus(tmp_path, per_class=1, seed=2)
        return str(manifest_path), str(tmp_path / "cache")

    def test_fresh_then_cached(self, tmp_path):
        manifest_path, cache_dir = self._corpus(tmp_path)
        result = runner.invoke(main, ["ingest", manifest_path, cache_dir, "--stub-clients"])
        assert result.exit_code == 0, result.output
        assert "9 ingested, 0 cached, 0 failed" in result.output
        rerun = runner.invoke(main, ["ingest", manifest_path, cache_dir, "--stub-clients"])
        assert rerun.exit_code == 0
        assert "0 ingested, 9 cached, 0 failed" in rerun.output

    def test_corrupt_video_partial_failure(self, tmp_path):
        manifest_path, cache_dir = self._corpus(tmp_path)
        manifest = load_manifest(manifest_path)
        victim = manifest.entries[0]
        Path(victim.uri).write_bytes(b"garbage")
        result = runner.invoke(main, ["ingest", manifest_path, cache_dir, "--stub-clients"])
        assert result.exit_code == 3
        assert "8 ingested, 0 cached, 1 failed" in result.output
        assert victim.id in result.output

    def test_requires_stub_clients(self, tmp_path):
        manifest_path, cache_dir = self._corpus(tmp_path)
        result = runner.invoke(main, ["ingest", manifest_path, cache_dir])
        assert result.exit_code == 2


class TestFeaturize:
    def test_all_kinds_cached(self, featurized_corpus):
        cache_dir = featurized_corpus["cache_dir"]
        ids = [e.id for e in featurized_corpus["manifest"].entries]
        for kind in ("w2v_pad", "w2v_sum", "sent_bert", "frames", "imgn_feat", "plc_feat"):
            for vid in ids:
                assert (cache_dir / "features" / kind / f"{vid}.bin").exists(), (kind, vid)

    def test_count_vect_is_per_fold_with_vocab(self, featurized_corpus):
        cache_dir = featurized_corpus["cache_dir"]
        ids = [e.id for e in featurized_corpus["manifest"].entries]
        for fold in range(3):
            fold_dir = cache_dir / "features" / "count_vect" / f"fold{fold}"
            assert (fold_dir / "vocab.json").exists()
            for vid in ids:
                assert (fold_dir / f"{vid}.bin").exists()

    def test_w2v_without_stub_or_embeddings_exit_2(self, featurized_corpus):
        result = runner.invoke(main, [
            "featurize", str(featurized_corpus["manifest_path"]),
            str(featurized_corpus["cache_dir"]), "--text", "w2v_sum",
        ])
        assert result.exit_code == 2
        assert "embeddings" in result.output

    def test_sent_bert_without_stub_exit_2(self, featurized_corpus, tmp_path, monkeypatch):
        monkeypatch.delenv("SCENEFUSION_SBERT_MODEL", raising=False)
        # fresh feature namespace so the cached stub output cannot mask the error
        result = runner.invoke(main, [
            "featurize", str(featurized_corpus["manifest_path"]),
            str(tmp_path / "cache"), "--text", "sent_bert",
        ])
        assert result.exit_code == 2


class TestTrain:
    def test_run_writes_artifacts(self, train_run):
        out_dir = train_run["out_dir"]
        for fold in range(3):
            fold_dir = out_dir / f"fold-{fold}"
            for name in ("checkpoint.pt", "history.json", "report.json", "predictions.json"):
                assert (fold_dir / name).exists(), (fold, name)
        for name in ("metrics.csv", "confusion_counts.json", "confusion.png",
                     "run_manifest.json"):
            assert (out_dir / name).exists(), name
        assert "±" in train_run["output"]

    def test_run_manifest_records_seeds_and_digests(self, train_run):
        data = json.loads((train_run["out_dir"] / "run_manifest.json").read_text())
        assert data["seeds"] == {"base": 0, "folds": [0, 1, 2]}
        assert len(data["config_digest"]) == 64
        assert len(data["input_digests"]["manifest"]) == 64

    def test_rerun_reproduces_metrics(self, train_run, tmp_path):
        config = dict(train_run["config"], out_dir=str(tmp_path / "exp2"))
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(config))
        result = runner.invoke(main, ["train", str(config_path)])
        assert result.exit_code == 0, result.output
        first = (train_run["out_dir"] / "metrics.csv").read_bytes()
        second = (tmp_path / "exp2" / "metrics.csv").read_bytes()
        assert first == second

    def test_early_fusion_with_frames_exit_2(self, featurized_corpus, tmp_path):
        config = {
            "manifest": str(featurized_corpus["manifest_path"]),
            "cache_dir": str(featurized_corpus["cache_dir"]),
            "fusion": "early",
            "text_kind": "w2v_sum",
            "visual_kind": "frames",
            "out_dir": str(tmp_path / "exp"),
        }
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(config))
        result = runner.invoke(main, ["train", str(config_path)])
        assert result.exit_code == 2
        assert "frames" in result.output

    def test_missing_config_exit_1(self, tmp_path):
        result = runner.invoke(main, ["train", str(tmp_path / "none.json")])
        assert result.exit_code == 1

    def test_invalid_config_json_exit_2(self, tmp_path):
        config_path = tmp_path / "config.json"
        config_path.write_text("{not json")
        result = runner.invoke(main, ["train", str(config_path)])
        assert result.exit_code == 2


class TestReport:
    def test_regenerates_from_predictions(self, train_run, tmp_path):
        run_dir = tmp_path / "copy"
        shutil.copytree(train_run["out_dir"], run_dir)
        original = (run_dir / "metrics.csv").read_bytes()
        (run_dir / "metrics.csv").unlink()
        (run_dir / "confusion.png").unlink()
        result = runner.invoke(main, ["report", str(run_dir)])
        assert result.exit_code == 0, result.output
        assert (run_dir / "metrics.csv").read_bytes() == original
        assert (run_dir / "confusion.png").exists()

    def test_empty_dir_exit_1(self, tmp_path):
        result = runner.invoke(main, ["report", str(tmp_path)])
        assert result.exit_code == 1


class TestSynth:
    def test_writes_manifest_and_transcripts(self, tmp_path):
        result = runner.invoke(main, [
            "synth", str(tmp_path / "corpus"), "--per-class", "1", "--seed", "3",
        ])
        assert result.exit_code == 0, result.output
        manifest = load_manifest(tmp_path / "corpus" / "synthetic.manifest")
        assert len(manifest.entries) == 9
        assert (tmp_path / "corpus" / "transcripts.json").exists()
