"""Run configuration for the extraction commands."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

DEFAULT_TEXT_ENCODER = "bert-base-uncased"
DEFAULT_IMAGE_ENCODER = "google/vit-base-patch16-224-in21k"

IMAGE_KINDS = ("vit", "efficientnet")
POOLINGS = ("first", "mean")


class ExtractorError(RuntimeError):
    """Raised for unreadable datasets, bad options, or encoder failures."""


@dataclass(frozen=True)
class ExtractorConfig:
    """Inputs, encoder choices, and output location for one extraction run.

    ``image_kind`` selects between a vision transformer's pooled output
    and penultimate-layer convolutional features from an EfficientNet-b1.
    """

    dataset: Path
    output: Path
    image_root: Path | None = None
    text_encoder: str = DEFAULT_TEXT_ENCODER
    image_encoder: str = DEFAULT_IMAGE_ENCODER
    image_kind: str = "vit"
    pooling: str = "first"
    max_length: int = 512
    batch_size: int = 16
    device: str = "cpu"
    seed: int = 0

    def __post_init__(self):
        if self.image_kind not in IMAGE_KINDS:
            raise ExtractorError(f"unknown image encoder kind {self.image_kind!r}")
        if self.pooling not in POOLINGS:
            raise ExtractorError(f"unknown pooling {self.pooling!r}")
        if self.max_length < 1:
            raise ExtractorError("max_length must be positive")
        if self.batch_size < 1:
            raise ExtractorError("batch_size must be positive")
