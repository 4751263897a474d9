"""Fusion strategies, modality encoders, classification heads, and baselines.

Three multi-modal strategies plus the two single-modality baselines:
  early         interleave the raw 1-D features, classify with the dense head
  joint         encode each modality to a 512 descriptor, interleave, classify
  late          one full classifier per modality; element-wise sum of the two
                probability vectors decides (argmax, lowest index on ties)
  single_text / single_visual
                one encoder followed directly by a 9-way softmax layer

Encoders by feature kind: frames -> convolutional recurrent encoder (512
units, 3x3 kernel); count_vect and w2v_pad -> recurrent encoder (512 units);
all global vectors -> one 512-unit fully connected layer.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import ConfigError, ValidationError
from .textfeat import TEXT_KINDS, TEXT_SHAPES, VOCAB_CAP
from .visfeat import VISUAL_KINDS, VISUAL_SHAPES

FUSION_MODES = ("early", "joint", "late", "single_text", "single_visual")
SEQUENCE_TEXT_KINDS = ("count_vect", "w2v_pad")

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class FusionModelConfig:
    fusion: str
    text_kind: str | None = None
    visual_kind: str | None = None
    num_classes: int = 9
    encoder_units: int = 512
    head_units: tuple[int, int] = (256, 128)
    recurrent_kernel: int = 3
    vocab_cap: int = VOCAB_CAP
    # spatial average-pool factor applied to frames before the convolutional
    # recurrent encoder; keeps the 512-channel recurrence CPU-tractable
    conv_spatial_pool: int = 4

    def __post_init__(self):
        if self.fusion not in FUSION_MODES:
            raise ConfigError(f"unknown fusion mode {self.fusion!r}")
        if self.text_kind is not None and self.text_kind not in TEXT_KINDS:
            raise ConfigError(f"unknown text feature kind {self.text_kind!r}")
        if self.visual_kind is not None and self.visual_kind not in VISUAL_KINDS:
            raise ConfigError(f"unknown visual feature kind {self.visual_kind!r}")
        if self.fusion == "single_text":
            if self.text_kind is None or self.visual_kind is not None:
                raise ConfigError("single_text requires exactly a text feature kind")
        elif self.fusion == "single_visual":
            if self.visual_kind is None or self.text_kind is not None:
                raise ConfigError("single_visual requires exactly a visual feature kind")
        else:
            if self.text_kind is None or self.visual_kind is None:
                raise ConfigError(f"{self.fusion} fusion requires both modality kinds")
        if self.fusion == "early" and self.visual_kind == "frames":
            raise ConfigError(
                "early fusion cannot consume raw frames: the fused input must be "
                "1-D, so frames cannot be used as features"
            )


# ---------------------------------------------------------------------------
# The three fusion operations (pure numpy)
# ---------------------------------------------------------------------------


def early_fuse(t: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Interleave two 1-D features as [t0, v0, t1, v1, ...].

    Multi-axis inputs are flattened; the shorter vector is zero-padded to the
    longer length L, giving an output of length 2L.
    """
    t = np.asarray(t, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    length = max(len(t), len(v))
    out = np.zeros(2 * length)
    out[0 : 2 * len(t) : 2] = t
    out[1 : 2 * len(v) + 1 : 2] = v
    return out


def joint_fuse(g_t: np.ndarray, g_v: np.ndarray) -> np.ndarray:
    """Interleave two equal-length global descriptors."""
    g_t = np.asarray(g_t, dtype=np.float64).ravel()
    g_v = np.asarray(g_v, dtype=np.float64).ravel()
    if len(g_t) != len(g_v):
        raise ValidationError(
            f"descriptor lengths differ: {len(g_t)} vs {len(g_v)}"
        )
    out = np.empty(2 * len(g_t))
    out[0::2] = g_t
    out[1::2] = g_v
    return out


def late_fuse(p_t: np.ndarray, p_v: np.ndarray) -> tuple[np.ndarray, int]:
    """Sum the per-modality probability vectors; argmax (lowest index on ties)
    of the un-renormalized aggregate picks the winning class."""
    aggregate = np.asarray(p_t, dtype=np.float64) + np.asarray(p_v, dtype=np.float64)
    return aggregate, int(np.argmax(aggregate))


# ---------------------------------------------------------------------------
# Torch building blocks
# ---------------------------------------------------------------------------


class DenseEncoder(nn.Module):
    """Single fully connected layer for global-vector features."""

    def __init__(self, in_dim: int, units: int):
        super().__init__()
        self.fc = nn.Linear(in_dim, units)

    def forward(self, x):
        return torch.relu(self.fc(x))


class SeqEncoder(nn.Module):
    """Recurrent encoder over a (B, T, D) sequence; final hidden state out."""

    def __init__(self, in_dim: int, units: int):
        super().__init__()
        self.lstm = nn.LSTM(in_dim, units, batch_first=True)

    def forward(self, x):
        _, (h, _) = self.lstm(x)
        return h[-1]


class ConvLSTMCell(nn.Module):
    def __init__(self, in_channels: int, hidden_channels: int, kernel: int):
        super().__init__()
        self.hidden_channels = hidden_channels
        self.conv = nn.Conv2d(
            in_channels + hidden_channels, 4 * hidden_channels, kernel, padding=kernel // 2
        )

    def forward(self, x, state):
        h, c = state
        gates = self.conv(torch.cat([x, h], dim=1))
        i, f, o, g = torch.chunk(gates, 4, dim=1)
        c = torch.sigmoid(f) * c + torch.sigmoid(i) * torch.tanh(g)
        h = torch.sigmoid(o) * torch.tanh(c)
        return h, c


class ConvLSTMEncoder(nn.Module):
    """Convolutional recurrent encoder over (B, T, C, H, W) frame sequences.

    Frames are spatially average-pooled by `spatial_pool` first; the final
    hidden state is globally average-pooled to a (B, units) descriptor.
    """

    def __init__(self, in_channels: int, units: int, kernel: int, spatial_pool: int = 1):
        super().__init__()
        self.cell = ConvLSTMCell(in_channels, units, kernel)
        self.units = units
        self.spatial_pool = spatial_pool

    def forward(self, x):
        b, t, c, h, w = x.shape
        if self.spatial_pool > 1:
            x = torch.nn.functional.avg_pool2d(
                x.reshape(b * t, c, h, w), self.spatial_pool
            ).reshape(b, t, c, h // self.spatial_pool, w // self.spatial_pool)
        h_t = x.new_zeros(b, self.units, x.shape[3], x.shape[4])
        c_t = x.new_zeros(b, self.units, x.shape[3], x.shape[4])
        for step in range(t):
            h_t, c_t = self.cell(x[:, step], (h_t, c_t))
        return h_t.mean(dim=(2, 3))


class Head(nn.Module):
    """Dense classification head: 256 -> 128 -> softmax over the classes."""

    def __init__(self, in_dim: int, units: tuple[int, int], num_classes: int):
        super().__init__()
        self.fc1 = nn.Linear(in_dim, units[0])
        self.fc2 = nn.Linear(units[0], units[1])
        self.out = nn.Linear(units[1], num_classes)

    def forward(self, x):
        x = torch.relu(self.fc1(x))
        x = torch.relu(self.fc2(x))
        return torch.softmax(self.out(x), dim=-1)


class BranchClassifier(nn.Module):
    """Late-fusion per-modality classifier: encoder -> dense(256) -> softmax(9)."""

    def __init__(self, encoder: nn.Module, units: int, mid: int, num_classes: int):
        super().__init__()
        self.encoder = encoder
        self.fc = nn.Linear(units, mid)
        self.out = nn.Linear(mid, num_classes)

    def forward(self, x):
        x = torch.relu(self.fc(self.encoder(x)))
        return torch.softmax(self.out(x), dim=-1)


def _flat_dim(kind: str, modality: str) -> int:
    shapes = TEXT_SHAPES if modality == "text" else VISUAL_SHAPES
    return int(np.prod(shapes[kind]))


def _make_encoder(kind: str, modality: str, config: FusionModelConfig) -> nn.Module:
    if modality == "visual" and kind == "frames":
        return ConvLSTMEncoder(
            3, config.encoder_units, config.recurrent_kernel, config.conv_spatial_pool
        )
    if modality == "text" and kind == "w2v_pad":
        return SeqEncoder(100, config.encoder_units)
    if modality == "text" and kind == "count_vect":
        return SeqEncoder(1, config.encoder_units)
    return DenseEncoder(_flat_dim(kind, modality), config.encoder_units)


def _interleave(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return torch.stack((a, b), dim=2).reshape(a.shape[0], -1)


# ---------------------------------------------------------------------------
# Full networks per fusion mode
# ---------------------------------------------------------------------------


class EarlyFusionNet(nn.Module):
    def __init__(self, config: FusionModelConfig):
        super().__init__()
        t_dim = _flat_dim(config.text_kind, "text")
        v_dim = _flat_dim(config.visual_kind, "visual")
        self.length = max(t_dim, v_dim)
        self.head = Head(2 * self.length, config.head_units, config.num_classes)

    def forward(self, t, v):
        t = torch.nn.functional.pad(t.flatten(1), (0, self.length - t.flatten(1).shape[1]))
        v = torch.nn.functional.pad(v.flatten(1), (0, self.length - v.flatten(1).shape[1]))
        return self.head(_interleave(t, v))


class JointFusionNet(nn.Module):
    def __init__(self, config: FusionModelConfig):
        super().__init__()
        self.text_encoder = _make_encoder(config.text_kind, "text", config)
        self.visual_encoder = _make_encoder(config.visual_kind, "visual", config)
        self.head = Head(2 * config.encoder_units, config.head_units, config.num_classes)

    def forward(self, t, v):
        return self.head(_interleave(self.text_encoder(t), self.visual_encoder(v)))


class LateFusionNet(nn.Module):
    def __init__(self, config: FusionModelConfig):
        super().__init__()
        mid = config.head_units[0]
        self.text_branch = BranchClassifier(
            _make_encoder(config.text_kind, "text", config),
            config.encoder_units, mid, config.num_classes,
        )
        self.visual_branch = BranchClassifier(
            _make_encoder(config.visual_kind, "visual", config),
            config.encoder_units, mid, config.num_classes,
        )

    def branch_probs(self, t, v):
        return self.text_branch(t), self.visual_branch(v)

    def forward(self, t, v):
        p_t, p_v = self.branch_probs(t, v)
        # aggregate/2 is a valid distribution for loss reporting; prediction
        # uses the raw aggregate
        return (p_t + p_v) / 2.0


class SingleModalityNet(nn.Module):
    """Encoder followed directly by a softmax layer (baseline models)."""

    def __init__(self, config: FusionModelConfig):
        super().__init__()
        if config.fusion == "single_text":
            self.encoder = _make_encoder(config.text_kind, "text", config)
        else:
            self.encoder = _make_encoder(config.visual_kind, "visual", config)
        self.out = nn.Linear(config.encoder_units, config.num_classes)

    def forward(self, x):
        return torch.softmax(self.out(self.encoder(x)), dim=-1)


@dataclass
class TrainedModel:
    config: FusionModelConfig
    net: nn.Module
    classes: tuple[str, ...]
    seed: int


def _seeded_init(net: nn.Module, seed: int) -> None:
    """Uniform fan-in scaled weights, zero biases, in parameter order."""
    gen = torch.Generator().manual_seed(seed)
    for name, p in net.named_parameters():
        with torch.no_grad():
            if p.ndim >= 2:
                fan_in = int(np.prod(p.shape[1:]))
                bound = 1.0 / math.sqrt(fan_in)
                p.uniform_(-bound, bound, generator=gen)
            else:
                p.zero_()


def build_model(config: FusionModelConfig, seed: int, classes: tuple[str, ...]) -> TrainedModel:
    """Construct an untrained model with deterministic, seeded parameters."""
    if len(classes) != config.num_classes:
        raise ConfigError(
            f"config expects {config.num_classes} classes, vocabulary has {len(classes)}"
        )
    builders = {
        "early": EarlyFusionNet,
        "joint": JointFusionNet,
        "late": LateFusionNet,
        "single_text": SingleModalityNet,
        "single_visual": SingleModalityNet,
    }
    net = builders[config.fusion](config)
    _seeded_init(net, seed)
    return TrainedModel(config=config, net=net, classes=tuple(classes), seed=seed)


def parameter_shapes(model: TrainedModel) -> dict[str, tuple[int, ...]]:
    return {name: tuple(p.shape) for name, p in model.net.named_parameters()}


# ---------------------------------------------------------------------------
# Batched feature preparation and inference
# ---------------------------------------------------------------------------


def prep_text(
    kind: str, batch: np.ndarray, vocab_cap: int = VOCAB_CAP,
    dtype: torch.dtype = torch.float32,
) -> torch.Tensor:
    """Convert a (B, ...) text feature batch to the encoder's input layout."""
    x = torch.as_tensor(np.asarray(batch), dtype=dtype)
    if kind == "count_vect":
        return (x / float(vocab_cap)).unsqueeze(-1)  # (B, 100, 1)
    return x


def prep_visual(kind: str, batch: np.ndarray, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    x = torch.as_tensor(np.asarray(batch), dtype=dtype)
    if kind == "frames":
        return x.permute(0, 1, 4, 2, 3)  # (B, T, C, H, W)
    return x


def _net_dtype(net: nn.Module) -> torch.dtype:
    return next(net.parameters()).dtype


def _net_inputs(model: TrainedModel, text_batch, visual_batch) -> tuple:
    cfg = model.config
    dtype = _net_dtype(model.net)
    if cfg.fusion == "single_text":
        return (prep_text(cfg.text_kind, text_batch, cfg.vocab_cap, dtype),)
    if cfg.fusion == "single_visual":
        return (prep_visual(cfg.visual_kind, visual_batch, dtype),)
    return (
        prep_text(cfg.text_kind, text_batch, cfg.vocab_cap, dtype),
        prep_visual(cfg.visual_kind, visual_batch, dtype),
    )


def forward(model: TrainedModel, text_batch=None, visual_batch=None) -> np.ndarray:
    """Per-sample probability vectors for a batch of features.

    For late fusion this is the renormalized aggregate/2 (used for loss
    reporting); `predict` reports winners from the raw aggregate.
    """
    with torch.no_grad():
        probs = model.net(*_net_inputs(model, text_batch, visual_batch))
    return probs.numpy()


def predict(model: TrainedModel, text_batch=None, visual_batch=None) -> np.ndarray:
    """Winning class index per sample (argmax, lowest index on ties)."""
    with torch.no_grad():
        inputs = _net_inputs(model, text_batch, visual_batch)
        if model.config.fusion == "late":
            p_t, p_v = model.net.branch_probs(*inputs)
            scores = (p_t + p_v).numpy()
        else:
            scores = model.net(*inputs).numpy()
    return np.argmax(scores, axis=1)


def encode_modality(model: TrainedModel, modality: str, batch: np.ndarray) -> np.ndarray:
    """Run one modality's encoder, returning (B, units) global descriptors."""
    cfg = model.config
    if cfg.fusion != "joint":
        raise ConfigError("global descriptors are exposed by joint-fusion models only")
    with torch.no_grad():
        if modality == "text":
            out = model.net.text_encoder(prep_text(cfg.text_kind, batch, cfg.vocab_cap))
        elif modality == "visual":
            out = model.net.visual_encoder(prep_visual(cfg.visual_kind, batch))
        else:
            raise ConfigError(f"unknown modality {modality!r}")
    return out.numpy()


def classify_head(head: Head, fused: np.ndarray) -> np.ndarray:
    """Apply a classification head to a (B, in_dim) fused batch."""
    with torch.no_grad():
        x = torch.as_tensor(np.asarray(fused), dtype=_net_dtype(head))
        return head(x).numpy()


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(model: TrainedModel, path: str | Path) -> None:
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": asdict(model.config),
        "seed": model.seed,
        "classes": list(model.classes),
        "state_dict": model.net.state_dict(),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    torch.save(payload, tmp)
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> TrainedModel:
    payload = torch.load(path, weights_only=False)
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ConfigError(
            f"checkpoint format version {version!r} unsupported "
            f"(expected {CHECKPOINT_FORMAT_VERSION})"
        )
    cfg_dict = dict(payload["config"])
    cfg_dict["head_units"] = tuple(cfg_dict["head_units"])
    config = FusionModelConfig(**cfg_dict)
    model = build_model(config, payload["seed"], tuple(payload["classes"]))
    model.net.load_state_dict(payload["state_dict"])
    return model
