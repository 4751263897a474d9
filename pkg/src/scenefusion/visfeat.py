"""Visual representations: raw frame sequences and summed-softmax descriptors.

Kinds and shapes:
  frames     (10, 64, 64, 3)  pass-through sampled frames
  imgn_feat  (1000,)          summed object-taxonomy softmax over real frames
  plc_feat   (365,)           summed place-taxonomy softmax over real frames
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .clients import ImageBackboneClient
from .errors import ValidationError
from .ingest import FrameSequence

log = logging.getLogger(__name__)

VISUAL_KINDS = ("frames", "imgn_feat", "plc_feat")
VISUAL_SHAPES = {
    "frames": (10, 64, 64, 3),
    "imgn_feat": (1000,),
    "plc_feat": (365,),
}
_TAXONOMY_KIND = {"object-1000": "imgn_feat", "place-365": "plc_feat"}


@dataclass(frozen=True)
class VisualFeature:
    kind: str
    data: np.ndarray
    video_id: str

    def __post_init__(self):
        if self.kind not in VISUAL_KINDS:
            raise ValidationError(f"unknown visual feature kind {self.kind!r}")
        if self.data.shape != VISUAL_SHAPES[self.kind]:
            raise ValidationError(
                f"{self.kind} feature has shape {self.data.shape}, "
                f"expected {VISUAL_SHAPES[self.kind]}"
            )
        if self.kind != "frames" and self.data.size and self.data.min() < 0:
            raise ValidationError("summed descriptors must be nonnegative")


def as_frames(seq: FrameSequence) -> VisualFeature:
    """Wrap the sampled frame tensor as a feature (no copy)."""
    return VisualFeature("frames", seq.frames, seq.video_id)


def sum_descriptors(seq: FrameSequence, backbone: ImageBackboneClient) -> VisualFeature:
    """Element-wise sum of backbone softmax vectors over the real frames only.

    Padding frames are excluded: they are not extracted frames, and including
    them would inject the backbone's response to a black image. The sum is not
    normalized, so its magnitude encodes real_count.
    """
    kind = _TAXONOMY_KIND[backbone.taxonomy]
    total = np.zeros(backbone.output_dim, dtype=np.float64)
    if seq.real_count == 0:
        log.warning("video %s has no real frames; descriptor is zero", seq.video_id)
    for i in range(seq.real_count):
        total += np.asarray(backbone.classify_frame(seq.frames[i]))
    return VisualFeature(kind, total.astype(np.float32), seq.video_id)
