"""Left-ventricle segmentation for cine MRI sequences."""

from ._core import (
    LvsegError,
    Model,
    clip_outliers,
    confusion,
    extract_roi,
    generate_phantom,
    label_components,
    otsu_threshold,
    pipeline,
    preprocess,
    roundness,
    scale_unit,
    synth,
    train,
)

__all__ = [
    "LvsegError",
    "Model",
    "clip_outliers",
    "confusion",
    "extract_roi",
    "generate_phantom",
    "label_components",
    "otsu_threshold",
    "pipeline",
    "preprocess",
    "roundness",
    "scale_unit",
    "synth",
    "train",
]
