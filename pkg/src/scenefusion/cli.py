"""Operator-facing command line: validate, ingest, featurize, train, report, synth.

Exit codes: 0 success, 1 I/O error, 2 validation/configuration error,
3 partial per-entry failure (failed ids listed), 4 training divergence.
"""

from __future__ import annotations

import hashlib
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import click
import numpy as np

from . import cache, evaluation, fusion, ingest, textfeat, train, visfeat
from .cache import FeatureStore
from .clients import (
    HashedEmbeddingTable,
    SbertSentenceEncoder,
    StubImageBackbone,
    StubSentenceEncoder,
    StubSpeechToText,
    TorchvisionBackbone,
    load_embedding_table,
)
from .datamodel import class_distribution, load_manifest, make_folds
from .errors import (
    ClientError,
    ConfigError,
    DivergenceError,
    ManifestParseError,
    SceneFusionError,
    ValidationError,
)

EXIT_OK = 0
EXIT_IO = 1
EXIT_INVALID = 2
EXIT_PARTIAL = 3
EXIT_DIVERGED = 4


def _load_manifest_or_exit(path: str):
    try:
        return load_manifest(path)
    except FileNotFoundError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_IO)
    except (ManifestParseError, ValidationError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_INVALID)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@click.group()
def main():
    """Multi-modal video scene classification pipeline."""


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------


@main.command()
@click.argument("manifest_path", type=click.Path())
def validate(manifest_path):
    """Validate a manifest and print its per-class split distribution."""
    manifest = _load_manifest_or_exit(manifest_path)
    table = class_distribution(manifest)
    width = max(len(c) for c in manifest.vocabulary.names) + 2
    click.echo(f"{manifest.name}: {len(manifest.entries)} entries, "
               f"{manifest.vocabulary.size} classes")
    click.echo(f"{'Class':<{width}}{'Train':>8}{'Test':>8}{'Total':>8}")
    totals = {"train": 0, "test": 0}
    for cls in manifest.vocabulary.names:
        tr, te = table[cls]["train"], table[cls]["test"]
        totals["train"] += tr
        totals["test"] += te
        click.echo(f"{cls:<{width}}{tr:>8}{te:>8}{tr + te:>8}")
    click.echo(f"{'Total':<{width}}{totals['train']:>8}{totals['test']:>8}"
               f"{totals['train'] + totals['test']:>8}")


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------


@main.command(name="ingest")
@click.argument("manifest_path", type=click.Path())
@click.argument("cache_dir", type=click.Path())
@click.option("--stub-clients", is_flag=True, help="Use deterministic offline stubs.")
@click.option("--transcripts", type=click.Path(), default=None,
              help="Sidecar JSON mapping video id -> transcript (stub speech).")
@click.option("--workers", type=int, default=1)
def cmd_ingest(manifest_path, cache_dir, stub_clients, transcripts, workers):
    """Populate the frame and transcript caches for every manifest entry."""
    manifest = _load_manifest_or_exit(manifest_path)
    if stub_clients:
        mapping = {}
        sidecar = Path(transcripts) if transcripts else Path(manifest_path).parent / "transcripts.json"
        if sidecar.exists():
            mapping = json.loads(sidecar.read_text("utf-8"))
        stt = StubSpeechToText(mapping)
    else:
        click.echo("error: no live speech client configured; use --stub-clients", err=True)
        sys.exit(EXIT_INVALID)

    hits = ingested = 0
    failures: list[str] = []

    def work(entry):
        if ingest.is_ingested(cache_dir, entry.id):
            return entry.id, "hit", None
        try:
            ingest.ingest_entry(entry, stt, cache_dir)
            return entry.id, "new", None
        except SceneFusionError as exc:
            return entry.id, "fail", str(exc)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        for vid, status, err in pool.map(work, manifest.entries):
            if status == "hit":
                hits += 1
            elif status == "new":
                ingested += 1
            else:
                failures.append(vid)
                click.echo(f"failed: {err}", err=True)

    click.echo(f"{ingested} ingested, {hits} cached, {len(failures)} failed")
    if failures:
        click.echo("failed ids: " + ", ".join(failures), err=True)
        sys.exit(EXIT_PARTIAL)


# ---------------------------------------------------------------------------
# featurize
# ---------------------------------------------------------------------------


def _make_backbone(taxonomy: str, stub: bool):
    if stub:
        return StubImageBackbone(taxonomy)
    return TorchvisionBackbone(taxonomy)


def featurize_manifest(
    manifest,
    cache_dir,
    text_kinds: tuple[str, ...],
    visual_kinds: tuple[str, ...],
    stub_clients: bool = True,
    embeddings_path: str | None = None,
    k: int = 3,
    seed: int = 0,
) -> list[str]:
    """Compute and cache the requested feature kinds; returns failed ids."""
    store = FeatureStore(cache_dir)
    failures: list[str] = []
    stopwords = textfeat.load_stopwords()

    need_w2v = any(kind in text_kinds for kind in ("w2v_pad", "w2v_sum"))
    table = None
    if need_w2v:
        if embeddings_path:
            table = load_embedding_table(embeddings_path)
        elif stub_clients:
            table = HashedEmbeddingTable()
        else:
            raise ConfigError("w2v features need --embeddings or --stub-clients")
    if "sent_bert" in text_kinds:
        encoder = StubSentenceEncoder() if stub_clients else SbertSentenceEncoder()
    backbones = {}
    for kind, taxonomy in (("imgn_feat", "object-1000"), ("plc_feat", "place-365")):
        if kind in visual_kinds:
            backbones[kind] = _make_backbone(taxonomy, stub_clients)

    docs: dict[str, textfeat.TokenizedDoc] = {}

    for entry in manifest.entries:
        try:
            if visual_kinds:
                seq = ingest.load_frame_sequence(cache_dir, entry.id)
                if "frames" in visual_kinds and not store.has("frames", entry.id):
                    store.put("frames", entry.id, visfeat.as_frames(seq).data)
                for kind, backbone in backbones.items():
                    if not store.has(kind, entry.id):
                        store.put(kind, entry.id, visfeat.sum_descriptors(seq, backbone).data)
            if text_kinds:
                transcript = ingest.load_transcript(cache_dir, entry.id)
                doc = textfeat.normalize_and_tokenize(
                    transcript.raw_text, stopwords, video_id=entry.id
                )
                docs[entry.id] = doc
                if "w2v_pad" in text_kinds and not store.has("w2v_pad", entry.id):
                    store.put("w2v_pad", entry.id, textfeat.embed_w2v_pad(doc, table).data)
                if "w2v_sum" in text_kinds and not store.has("w2v_sum", entry.id):
                    store.put("w2v_sum", entry.id, textfeat.embed_w2v_sum(doc, table).data)
                if "sent_bert" in text_kinds and not store.has("sent_bert", entry.id):
                    store.put("sent_bert", entry.id, textfeat.encode_sentbert(transcript, encoder).data)
        except SceneFusionError as exc:
            failures.append(entry.id)
            click.echo(f"failed: {exc}", err=True)

    if "count_vect" in text_kinds and not failures:
        plan = make_folds(manifest, k=k, seed=seed)
        for f, (train_ids, _) in enumerate(plan.folds):
            vocab = textfeat.build_count_vocab([docs[v] for v in train_ids])
            cache.atomic_write_json(
                store.fold_dir("count_vect", f) / "vocab.json", vocab.index
            )
            for entry in manifest.entries:
                store.put(
                    "count_vect", entry.id,
                    textfeat.vectorize_count(docs[entry.id], vocab).data,
                    fold=f,
                )
    return failures


@main.command(name="featurize")
@click.argument("manifest_path", type=click.Path())
@click.argument("cache_dir", type=click.Path())
@click.option("--text", "text_kinds", multiple=True,
              type=click.Choice(textfeat.TEXT_KINDS))
@click.option("--visual", "visual_kinds", multiple=True,
              type=click.Choice(visfeat.VISUAL_KINDS))
@click.option("--stub-clients", is_flag=True)
@click.option("--embeddings", type=click.Path(), default=None,
              help="Word-embedding table file (token + 100 floats per line).")
@click.option("--k", type=int, default=3, help="Fold count for count_vect vocabularies.")
@click.option("--seed", type=int, default=0)
def cmd_featurize(manifest_path, cache_dir, text_kinds, visual_kinds,
                  stub_clients, embeddings, k, seed):
    """Compute and cache the requested feature kinds from the ingest cache."""
    manifest = _load_manifest_or_exit(manifest_path)
    try:
        failures = featurize_manifest(
            manifest, cache_dir, tuple(text_kinds), tuple(visual_kinds),
            stub_clients=stub_clients, embeddings_path=embeddings, k=k, seed=seed,
        )
    except (ClientError, ConfigError, ValidationError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_INVALID)
    if failures:
        click.echo("failed ids: " + ", ".join(failures), err=True)
        sys.exit(EXIT_PARTIAL)
    click.echo(f"featurized {len(manifest.entries)} entries "
               f"(text={list(text_kinds)}, visual={list(visual_kinds)})")


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def run_experiment(config: dict, out_dir: Path) -> train.KFoldResult:
    """Run the K-fold experiment described by an experiment-config dict."""
    manifest = load_manifest(config["manifest"])
    store = FeatureStore(config["cache_dir"])
    model_cfg = fusion.FusionModelConfig(
        fusion=config["fusion"],
        text_kind=config.get("text_kind"),
        visual_kind=config.get("visual_kind"),
        num_classes=manifest.vocabulary.size,
    )
    train_cfg = train.TrainConfig(
        epochs=config.get("epochs", 20),
        batch_size=config.get("batch_size", 16),
        learning_rate=config.get("learning_rate", 0.001),
        beta1=config.get("beta1", 0.9),
        beta2=config.get("beta2", 0.999),
        epsilon=config.get("epsilon", 1e-7),
        patience=config.get("patience", 10),
        seed=config.get("seed", 0),
    )
    plan = make_folds(manifest, k=config.get("k", 3), seed=train_cfg.seed)
    result = train.run_kfold(manifest, store, model_cfg, train_cfg, plan)

    out_dir.mkdir(parents=True, exist_ok=True)
    for fold_result in result.folds:
        fold_dir = out_dir / f"fold-{fold_result.fold}"
        fold_dir.mkdir(parents=True, exist_ok=True)
        fusion.save_checkpoint(fold_result.model, fold_dir / "checkpoint.pt")
        cache.atomic_write_json(fold_dir / "history.json", fold_result.history.as_dict())
        cache.atomic_write_json(fold_dir / "report.json", fold_result.report.as_dict())
        cache.atomic_write_json(
            fold_dir / "predictions.json",
            {
                "test_ids": list(fold_result.test_ids),
                "true": [int(manifest.vocabulary.index(
                    manifest.entry_by_id(v).label)) for v in fold_result.test_ids],
                "predicted": [int(p) for p in fold_result.predictions],
                "classes": list(manifest.vocabulary.names),
            },
        )
    evaluation.emit_report(
        [r.report for r in result.folds], result.total_confusion, out_dir
    )
    cache.atomic_write_json(
        out_dir / "run_manifest.json",
        {
            "command": "train",
            "config": config,
            "config_digest": hashlib.sha256(
                json.dumps(config, sort_keys=True).encode()).hexdigest(),
            "input_digests": {"manifest": _sha256(Path(config["manifest"]))},
            "seeds": {"base": train_cfg.seed,
                      "folds": [train_cfg.seed + f for f in range(plan.k)]},
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
            "artifacts": [f"fold-{r.fold}" for r in result.folds]
            + ["metrics.csv", "confusion_counts.json", "confusion.png"],
        },
    )
    return result


@main.command(name="train")
@click.argument("config_path", type=click.Path())
def cmd_train(config_path):
    """Run a K-fold experiment from a JSON experiment config."""
    try:
        config = json.loads(Path(config_path).read_text("utf-8"))
    except FileNotFoundError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_IO)
    except json.JSONDecodeError as exc:
        click.echo(f"error: invalid config JSON: {exc}", err=True)
        sys.exit(EXIT_INVALID)
    out_dir = Path(config.get("out_dir", "runs/experiment"))
    try:
        result = run_experiment(config, out_dir)
    except DivergenceError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_DIVERGED)
    except (ConfigError, ValidationError, SceneFusionError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_INVALID)
    acc_mean, acc_std = result.aggregate["accuracy"]
    click.echo(evaluation.format_aggregate_row(result.aggregate))
    click.echo(f"accuracy {acc_mean:.2f} ± {acc_std:.2f} over {len(result.folds)} folds "
               f"-> {out_dir}")


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


@main.command(name="report")
@click.argument("run_dir", type=click.Path())
def cmd_report(run_dir):
    """Regenerate the metrics table and confusion heatmap from stored predictions."""
    run_dir = Path(run_dir)
    fold_dirs = sorted(run_dir.glob("fold-*"))
    if not fold_dirs:
        click.echo(f"error: no fold predictions under {run_dir}", err=True)
        sys.exit(EXIT_IO)
    from .datamodel import ClassVocabulary

    reports = []
    total_counts = None
    classes = None
    for fold_dir in fold_dirs:
        pred_file = fold_dir / "predictions.json"
        if not pred_file.exists():
            click.echo(f"error: missing {pred_file}", err=True)
            sys.exit(EXIT_IO)
        data = json.loads(pred_file.read_text("utf-8"))
        classes = tuple(data["classes"])
        cm = evaluation.confusion(
            data["true"], data["predicted"], ClassVocabulary(classes)
        )
        reports.append(evaluation.metrics(cm))
        total_counts = cm.counts if total_counts is None else total_counts + cm.counts
    total = evaluation.ConfusionMatrix(total_counts, classes)
    paths = evaluation.emit_report(reports, total, run_dir)
    click.echo("wrote " + ", ".join(str(p) for p in paths.values()))


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


@main.command(name="synth")
@click.argument("out_dir", type=click.Path())
@click.option("--per-class", type=int, default=10)
@click.option("--seed", type=int, default=0)
def cmd_synth(out_dir, per_class, seed):
    """Generate a synthetic constant-color corpus with keyword transcripts."""
    from .synthetic import generate_corpus

    manifest_path, transcripts_path = generate_corpus(
        out_dir, per_class=per_class, seed=seed
    )
    click.echo(f"wrote {manifest_path} and {transcripts_path}")


if __name__ == "__main__":
    main()
