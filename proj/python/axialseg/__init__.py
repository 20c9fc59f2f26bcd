"""Gated axial attention segmentation (C++ core)."""

from ._core import (
    CheckpointError,
    Model,
    ShapeError,
    axial_attention_width,
    bce_loss,
    bench,
    f1_iou,
    full_self_attention,
    generate,
    gradcheck,
    variants,
)

__all__ = [
    "CheckpointError",
    "Model",
    "ShapeError",
    "axial_attention_width",
    "bce_loss",
    "bench",
    "f1_iou",
    "full_self_attention",
    "generate",
    "gradcheck",
    "variants",
]
