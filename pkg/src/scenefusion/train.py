"""Training loop, loss, early stopping, and K-fold experiment orchestration.

Protocol: 20 epochs, batch size 16, adaptive-moment gradient descent
(lr 0.001, beta1 0.9, beta2 0.999, eps 1e-7), early stopping on validation
accuracy with patience 10 and best-weights restore. Per-fold model seed is
base seed + fold index; the whole experiment is a pure function of
(features, configs, seeds, fold plan).
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field

import numpy as np
import torch

from . import evaluation, fusion
from .cache import FeatureStore
from .datamodel import DatasetManifest, FoldPlan
from .errors import DivergenceError, ValidationError

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 16
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        for name in ("epochs", "batch_size", "learning_rate", "beta1", "beta2",
                     "epsilon", "patience"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    train_accuracy: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0

    def as_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "train_accuracy": self.train_accuracy,
            "val_accuracy": self.val_accuracy,
            "stopped_epoch": self.stopped_epoch,
            "best_epoch": self.best_epoch,
        }


def cross_entropy(s: np.ndarray, t: np.ndarray) -> float:
    """Categorical cross entropy -sum(t_i log s_i), with s clamped at 1e-12."""
    s = np.clip(np.asarray(s, dtype=np.float64), PROB_FLOOR, 1.0)
    return float(-(np.asarray(t, dtype=np.float64) * np.log(s)).sum())


def _batch_loss(probs: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    clamped = probs.clamp(min=PROB_FLOOR, max=1.0)
    onehot = torch.nn.functional.one_hot(labels, num_classes=probs.shape[1]).to(probs.dtype)
    return -(onehot * clamped.log()).sum(dim=1).mean()


@dataclass
class Dataset:
    """Aligned feature arrays and integer labels for one split."""

    text: np.ndarray | None
    visual: np.ndarray | None
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def take(self, idx: np.ndarray) -> tuple:
        return (
            None if self.text is None else self.text[idx],
            None if self.visual is None else self.visual[idx],
            self.labels[idx],
        )


def train_model(
    model: fusion.TrainedModel,
    train_set: Dataset,
    val_set: Dataset,
    config: TrainConfig,
) -> tuple[fusion.TrainedModel, TrainHistory]:
    """Train in place; early-stop on validation accuracy; restore best weights."""
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValidationError("train and validation sets must be non-empty")

    net = model.net
    opt = torch.optim.Adam(
        net.parameters(),
        lr=config.learning_rate,
        betas=(config.beta1, config.beta2),
        eps=config.epsilon,
    )
    rng = np.random.default_rng(config.seed)
    history = TrainHistory()
    best_acc = -1.0
    best_state = None
    since_improve = 0

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_set))
        epoch_loss = 0.0
        correct = 0
        net.train()
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            text, vis, labels = train_set.take(idx)
            inputs = fusion._net_inputs(model, text, vis)
            label_t = torch.as_tensor(labels, dtype=torch.long)
            if model.config.fusion == "late":
                p_t, p_v = net.branch_probs(*inputs)
                loss = _batch_loss(p_t, label_t) + _batch_loss(p_v, label_t)
                scores = (p_t + p_v).detach()
            else:
                probs = net(*inputs)
                loss = _batch_loss(probs, label_t)
                scores = probs.detach()
            if not torch.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_loss += float(loss.detach()) * len(idx)
            correct += int((scores.argmax(dim=1).numpy() == labels).sum())

        net.eval()
        val_pred = fusion.predict(model, val_set.text, val_set.visual)
        val_acc = float((val_pred == val_set.labels).mean())
        history.train_loss.append(epoch_loss / len(train_set))
        history.train_accuracy.append(correct / len(train_set))
        history.val_accuracy.append(val_acc)
        history.stopped_epoch = epoch

        if val_acc > best_acc:
            best_acc = val_acc
            best_state = copy.deepcopy(net.state_dict())
            history.best_epoch = epoch
            since_improve = 0
        else:
            since_improve += 1
            if since_improve >= config.patience:
                log.info("early stop at epoch %d (best %d)", epoch, history.best_epoch)
                break

    if best_state is not None:
        net.load_state_dict(best_state)
    net.eval()
    return model, history


# ---------------------------------------------------------------------------
# K-fold orchestration
# ---------------------------------------------------------------------------


@dataclass
class FoldResult:
    fold: int
    model: fusion.TrainedModel
    history: TrainHistory
    confusion: evaluation.ConfusionMatrix
    report: evaluation.MetricReport
    test_ids: tuple[str, ...]
    predictions: np.ndarray


@dataclass
class KFoldResult:
    folds: list[FoldResult]
    aggregate: dict[str, tuple[float, float]]
    total_confusion: evaluation.ConfusionMatrix


def _load_split(
    manifest: DatasetManifest,
    store: FeatureStore,
    ids: tuple[str, ...],
    model_cfg: fusion.FusionModelConfig,
    fold: int,
) -> Dataset:
    def load_kind(kind: str | None) -> np.ndarray | None:
        if kind is None:
            return None
        per_fold = fold if kind == "count_vect" else None
        return np.stack([store.get(kind, vid, fold=per_fold) for vid in ids])

    vocab = manifest.vocabulary
    labels = np.array([vocab.index(manifest.entry_by_id(v).label) for v in ids])
    return Dataset(load_kind(model_cfg.text_kind), load_kind(model_cfg.visual_kind), labels)


def run_kfold(
    manifest: DatasetManifest,
    store: FeatureStore,
    model_cfg: fusion.FusionModelConfig,
    train_cfg: TrainConfig,
    plan: FoldPlan,
) -> KFoldResult:
    """Train one model per fold; evaluate each on the manifest's test split."""
    test_ids = tuple(e.id for e in manifest.split_entries("test"))
    vocab = manifest.vocabulary
    results: list[FoldResult] = []

    for f, (train_ids, val_ids) in enumerate(plan.folds):
        train_set = _load_split(manifest, store, train_ids, model_cfg, f)
        val_set = _load_split(manifest, store, val_ids, model_cfg, f)
        test_set = _load_split(manifest, store, test_ids, model_cfg, f)

        model = fusion.build_model(model_cfg, train_cfg.seed + f, vocab.names)
        model, history = train_model(model, train_set, val_set, train_cfg)

        pred = fusion.predict(model, test_set.text, test_set.visual)
        cm = evaluation.confusion(test_set.labels, pred, vocab)
        results.append(
            FoldResult(
                fold=f,
                model=model,
                history=history,
                confusion=cm,
                report=evaluation.metrics(cm),
                test_ids=test_ids,
                predictions=pred,
            )
        )

    agg = evaluation.aggregate([r.report for r in results])
    total = evaluation.ConfusionMatrix(
        sum(r.confusion.counts for r in results), vocab.names
    )
    return KFoldResult(folds=results, aggregate=agg, total_confusion=total)
