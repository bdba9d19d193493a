"""Sensor-fingerprint extraction and matching, with and without masking of
regions carrying the synthetic bokeh pattern.

The baseline route is the classic maximum-likelihood accumulation of
residue-times-image over squared image, scored with the pixel-count-scaled
signed square of the NCC. The mask-aware route multiplies residues and
images by per-image binary masks that exclude detected pattern regions,
which suppresses the cross-device collisions those regions cause.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import defaults
from .catalog import (
    BinaryMask,
    BpCatalog,
    Orientation,
    best_matching_bp,
    mask_from_map,
    ncc_map,
)
from .core import _as_matrix, box_filter, ncc, residue, signed_square
from .errors import (
    DegenerateCorrelationWarning,
    DegenerateInputError,
    DimensionError,
)

Denoiser = Callable[[np.ndarray], np.ndarray]


@dataclass
class PrnuFingerprint:
    """Estimated multiplicative sensor fingerprint.

    Pixels whose accumulated denominator was zero are set to 0 and counted
    in ``zero_fraction``; an entirely empty support is an error at
    extraction time, never a silently returned all-zero fingerprint.
    """

    data: np.ndarray
    num_images: int
    bp_aware: bool = False
    mask_coverage: float = 1.0
    zero_fraction: float = 0.0

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass
class VerificationScore:
    """Outcome of one fingerprint match."""

    eta: float
    tau: float
    decision: str  # "H1" (same source) or "H0"
    orientation: Orientation
    masked: bool
    best_bp_id: str | None = None
    mask_coverage: float | None = None


def _default_denoiser(k_box: int) -> Denoiser:
    return lambda img: box_filter(img, k_box)


def _check_images(images):
    if not images:
        raise DimensionError("need at least one image")
    arrs = []
    shape = None
    for i, img in enumerate(images):
        a = _as_matrix(img, f"image {i}")
        if not np.issubdtype(a.dtype, np.floating):
            a = a.astype(np.float64)
        if shape is None:
            shape = a.shape
        elif a.shape != shape:
            raise DimensionError("all images must share dimensions")
        arrs.append(a)
    return arrs


def extract_prnu(
    images,
    denoiser: Denoiser | None = None,
    k_box: int = defaults.RESIDUE_KERNEL,
) -> PrnuFingerprint:
    """Maximum-likelihood fingerprint from spatially aligned images: the
    per-pixel ratio of accumulated residue*image to accumulated image^2.
    The residue comes from the configured denoiser (default: box filter)."""
    arrs = _check_images(images)
    den = denoiser or _default_denoiser(k_box)
    num = np.zeros(arrs[0].shape, dtype=np.float64)
    den_acc = np.zeros(arrs[0].shape, dtype=np.float64)
    for y in arrs:
        w = y - den(y)
        num += w * y
        den_acc += y * y
    zero = den_acc == 0.0
    if zero.all():
        raise DegenerateInputError("empty fingerprint support (all pixels zero)")
    data = np.zeros_like(num)
    np.divide(num, den_acc, out=data, where=~zero)
    return PrnuFingerprint(
        data=data,
        num_images=len(arrs),
        bp_aware=False,
        mask_coverage=1.0,
        zero_fraction=float(zero.mean()),
    )


def _mask_array(mask, shape) -> np.ndarray:
    m = np.asarray(getattr(mask, "data", mask))
    if m.shape != shape:
        raise DimensionError("mask shape does not match the images")
    return m.astype(np.float64)


def extract_prnu_bp_aware(
    images,
    masks,
    denoiser: Denoiser | None = None,
    k_box: int = defaults.RESIDUE_KERNEL,
) -> PrnuFingerprint:
    """Masked maximum-likelihood fingerprint: each image contributes only
    its unmasked pixels (mask value 1). All-ones masks reproduce the
    baseline extraction bit for bit."""
    arrs = _check_images(images)
    if len(masks) != len(arrs):
        raise DimensionError("need exactly one mask per image")
    den = denoiser or _default_denoiser(k_box)
    num = np.zeros(arrs[0].shape, dtype=np.float64)
    den_acc = np.zeros(arrs[0].shape, dtype=np.float64)
    coverage = 0.0
    for y, mask in zip(arrs, masks):
        m = _mask_array(mask, y.shape)
        coverage += float(m.mean())
        w_masked = m * (y - den(y))
        z_masked = m * y
        num += w_masked * z_masked
        den_acc += z_masked * z_masked
    zero = den_acc == 0.0
    if zero.all():
        raise DegenerateInputError(
            "masked fingerprint has empty support; masks exclude everything"
        )
    data = np.zeros_like(num)
    np.divide(num, den_acc, out=data, where=~zero)
    return PrnuFingerprint(
        data=data,
        num_images=len(arrs),
        bp_aware=True,
        mask_coverage=coverage / len(arrs),
        zero_fraction=float(zero.mean()),
    )


def similarity(w_t, fingerprint: PrnuFingerprint | np.ndarray, y_t) -> float:
    """Pixel-count-scaled signed square of the NCC between a test residue
    and fingerprint*image. Degenerate correlations score 0 with a warning."""
    w = _as_matrix(w_t, "residue")
    k_hat = np.asarray(getattr(fingerprint, "data", fingerprint))
    y = _as_matrix(y_t, "image")
    if k_hat.shape != w.shape or y.shape != w.shape:
        raise DimensionError("residue, fingerprint and image must share dimensions")
    try:
        rho = ncc(w, k_hat * y)
    except DegenerateInputError:
        warnings.warn(
            "degenerate correlation: similarity forced to 0",
            DegenerateCorrelationWarning,
            stacklevel=2,
        )
        return 0.0
    return w.size * signed_square(rho)


def masked_similarity(
    w_t,
    fingerprint: PrnuFingerprint | np.ndarray,
    z_t,
    mask,
    search_orientations: bool = False,
    tau: float = defaults.MASKED_SIMILARITY_THRESHOLD,
) -> VerificationScore:
    """Mask-aware similarity: residue and test image are zero-filled where
    the mask is 0 before the correlation. The scale factor stays the full
    pixel count, which deflates scores when coverage is low. With
    ``search_orientations`` the fingerprint is tested under all four 90-degree
    rotations and the highest score wins."""
    w = _as_matrix(w_t, "residue")
    z = _as_matrix(z_t, "image")
    k_hat = np.asarray(getattr(fingerprint, "data", fingerprint))
    m = _mask_array(mask, w.shape)
    if z.shape != w.shape:
        raise DimensionError("residue and image must share dimensions")
    w_masked = m * np.asarray(w, dtype=np.float64)
    z_masked = m * np.asarray(z, dtype=np.float64)
    rotations = (0, 90, 180, 270) if search_orientations else (0,)
    best_eta = None
    best_orientation = Orientation()
    degenerate = False
    for rot in rotations:
        k_rot = np.rot90(k_hat, rot // 90)
        if k_rot.shape != w.shape:
            continue
        try:
            rho = ncc(w_masked, k_rot * z_masked)
        except DegenerateInputError:
            degenerate = True
            rho = 0.0
        eta = w.size * signed_square(rho)
        if best_eta is None or eta > best_eta:
            best_eta = eta
            best_orientation = Orientation(rotation=rot)
    if best_eta is None:
        raise DimensionError("no fingerprint rotation matches the image dimensions")
    if degenerate and best_eta == 0.0:
        warnings.warn(
            "degenerate correlation: similarity forced to 0",
            DegenerateCorrelationWarning,
            stacklevel=2,
        )
    return VerificationScore(
        eta=float(best_eta),
        tau=float(tau),
        decision="H1" if best_eta > tau else "H0",
        orientation=best_orientation,
        masked=True,
        mask_coverage=float(m.mean()),
    )


def compute_prnu_mask(
    image,
    catalog: BpCatalog,
    k: int = defaults.RESIDUE_KERNEL,
    alpha: float = defaults.MASK_THRESHOLD,
    block: int = defaults.NCC_BLOCK,
    smooth_k: int = defaults.MAP_SMOOTH_KERNEL,
):
    """Analyst masking step for one image: compute its residue, identify the
    best-matching catalog pattern (threshold-free), build the block NCC map
    against the aligned pattern, and threshold it.

    Returns ``(mask, best_id, orientation, residue)``; the residue is reused
    by callers that score the same image afterwards.
    """
    w = residue(image, k)
    best_id, orientation, _ = best_matching_bp(w, catalog)
    aligned = orientation.apply(catalog.get(best_id).pattern.data)
    corr_map = ncc_map(w, aligned, block=block, smooth_k=smooth_k)
    return mask_from_map(corr_map, alpha), best_id, orientation, w


def verify(
    test_image,
    fingerprint: PrnuFingerprint,
    catalog: BpCatalog,
    alpha: float = defaults.MASK_THRESHOLD,
    tau: float = defaults.MASKED_SIMILARITY_THRESHOLD,
    k: int = defaults.RESIDUE_KERNEL,
    block: int = defaults.NCC_BLOCK,
    smooth_k: int = defaults.MAP_SMOOTH_KERNEL,
    search_orientations: bool = False,
) -> VerificationScore:
    """End-to-end source verification of one test image: residue, pattern
    identification, correlation map, mask, masked similarity, decision."""
    mask, best_id, _, w = compute_prnu_mask(
        test_image, catalog, k=k, alpha=alpha, block=block, smooth_k=smooth_k
    )
    score = masked_similarity(
        w, fingerprint, test_image, mask,
        search_orientations=search_orientations, tau=tau,
    )
    score.best_bp_id = best_id
    return score
