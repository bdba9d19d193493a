"""Base-pattern estimation from sets of flat-background portrait images.

Two protocols are supported: natural-light captures (box-filter residues,
averaged per half-frame, normalized to unit std) and stage-light-mono
captures (direct subtraction of the constant background 4, divided by the
ISO gain). Both stitch a "top" half estimated from one image set and a
"bottom" half from the other.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import defaults
from .core import _as_matrix, box_filter, sample_std
from .errors import (
    DegenerateInputError,
    DimensionError,
    FlatnessWarning,
    ParameterError,
)

MODE_NATURAL_LIGHT = "NL"
MODE_STAGE_LIGHT_MONO = "SLM"


@dataclass
class BasePattern:
    """An estimated base pattern plus provenance metadata.

    ``normalization`` records how the amplitude was fixed: natural-light
    estimates are divided by their own sample std ("unit_std"), stage-light
    estimates by the ISO gain ("gamma_divided", saturation bias allowed).
    """

    data: np.ndarray
    mode: str
    iso: int = 0
    num_images: int = 0
    normalization: str = "unit_std"
    catalog_id: str | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass
class HalfFrameSet:
    """Capture set for half-frame extraction: images with a uniform upper
    background ("top") and images with a uniform lower background ("bottom"),
    all at the same ISO."""

    top_images: list
    bottom_images: list
    iso: int = 0

    def __post_init__(self):
        if not self.top_images or not self.bottom_images:
            raise DimensionError("both image lists must be non-empty")
        shape = np.asarray(self.top_images[0]).shape
        for img in list(self.top_images) + list(self.bottom_images):
            a = np.asarray(img)
            if a.ndim != 2 or a.shape != shape:
                raise DimensionError("all images in a set must share dimensions")

    @property
    def frame_shape(self) -> tuple[int, int]:
        return np.asarray(self.top_images[0]).shape


def flatness_check(region, k: int = defaults.RESIDUE_KERNEL, threshold: float = 2.0) -> bool:
    """True when the region looks flat: the std of its box-filtered version
    stays below ``threshold`` gray levels. High-frequency patterns survive
    this check because the filter suppresses them by 1/k."""
    arr = _as_matrix(region, "region")
    if arr.shape[0] < 64 or arr.shape[1] < 64:
        raise DimensionError("flatness check needs a region of at least 64x64")
    return sample_std(box_filter(arr, k)) < threshold


def _warn_if_textured(blurred_half: np.ndarray, label: str, threshold: float = 2.0):
    if min(blurred_half.shape) >= 64 and sample_std(blurred_half) >= threshold:
        warnings.warn(
            f"{label} background does not look flat "
            f"(blurred std {sample_std(blurred_half):.2f} >= {threshold})",
            FlatnessWarning,
            stacklevel=3,
        )


def _averaged_residues(images, k: int, half: str, split: int):
    """Mean of box residues over a list of images, fixed accumulation order."""
    acc = None
    for idx, img in enumerate(images):
        arr = _as_matrix(img, f"{half} image {idx}")
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        blurred = box_filter(arr, k)
        rows = slice(0, split) if half == "top" else slice(split, arr.shape[0])
        _warn_if_textured(blurred[rows], f"{half} image {idx}")
        res = arr - blurred
        if acc is None:
            acc = np.zeros(arr.shape, dtype=np.float64)
        acc += res
    return acc / len(images)


def extract_bp_nl(frames: HalfFrameSet, k: int = defaults.RESIDUE_KERNEL) -> BasePattern:
    """Natural-light extraction: average box residues per half, stitch at
    floor(H/2) (the extra row of odd frames goes to the bottom half), and
    normalize the stitched matrix to unit sample std."""
    h, _ = frames.frame_shape
    split = h // 2
    top = _averaged_residues(frames.top_images, k, "top", split)
    bottom = _averaged_residues(frames.bottom_images, k, "bottom", split)
    stitched = np.vstack([top[:split], bottom[split:]])
    norm = sample_std(stitched)
    if norm == 0.0:
        raise DegenerateInputError("averaged residues are constant")
    return BasePattern(
        data=stitched / norm,
        mode=MODE_NATURAL_LIGHT,
        iso=frames.iso,
        num_images=len(frames.top_images) + len(frames.bottom_images),
        normalization="unit_std",
    )


def extract_bp_slm(frames: HalfFrameSet, iso_gain: float) -> BasePattern:
    """Stage-light extraction: per-half average of (image - 4), stitched and
    divided by the ISO gain. No residue filtering is applied because the
    background is known to be the constant 4; saturation at 0 leaves a
    positive mean bias in the estimate."""
    if iso_gain <= 0:
        raise ParameterError("iso_gain must be positive")
    h, _ = frames.frame_shape
    split = h // 2

    def _avg(images):
        acc = np.zeros(frames.frame_shape, dtype=np.float64)
        for img in images:
            acc += np.asarray(img, dtype=np.float64) - defaults.SLM_BACKGROUND
        return acc / len(images)

    top = _avg(frames.top_images)
    bottom = _avg(frames.bottom_images)
    stitched = np.vstack([top[:split], bottom[split:]])
    return BasePattern(
        data=stitched / iso_gain,
        mode=MODE_STAGE_LIGHT_MONO,
        iso=frames.iso,
        num_images=len(frames.top_images) + len(frames.bottom_images),
        normalization="gamma_divided",
    )
