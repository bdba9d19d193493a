"""Synthetic portrait-image generator used as ground-truth oracle.

Scenes follow the generative model of the camera pipeline under study: a
sensor image, an algorithmic background blur, and a content-scaled noise
pattern added inside the blur mask, optionally quantized to 8 bits. All
generators are deterministic for a fixed seed. A ``dtype`` of float32 keeps
full-resolution frames cheap; float64 is the default.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import defaults
from .core import _as_matrix, box_filter, sample_std
from .errors import DimensionError, ParameterError


def default_g_curve(y):
    """Default brightness-dependent gain: a smooth unimodal bump on [0, 255]
    normalized so the gain at the stage-light background level (4) is 1."""
    y = np.asarray(y, dtype=np.float64)
    ref = (4.0 - 96.0) ** 2
    return np.exp((ref - (y - 96.0) ** 2) / (2.0 * 64.0**2))


def quantize_image(a) -> np.ndarray:
    """Round half away from zero, then clip to [0, 255].

    For the values this pipeline produces the two steps reduce to
    ``clip(floor(x + 0.5), 0, 255)``: negatives are clipped to 0 regardless
    of how their halves round.
    """
    arr = np.asarray(a)
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float64)
    return np.clip(np.floor(arr + arr.dtype.type(0.5)), 0, 255)


def bilinear_resize(a, shape: tuple[int, int]) -> np.ndarray:
    """Separable bilinear resample to ``shape`` (half-pixel centers)."""
    arr = _as_matrix(a)
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float64)
    out_h, out_w = int(shape[0]), int(shape[1])
    if out_h < 1 or out_w < 1:
        raise ParameterError(f"invalid target shape {shape}")

    def _axis_coords(n_src: int, n_dst: int):
        pos = (np.arange(n_dst, dtype=np.float64) + 0.5) * (n_src / n_dst) - 0.5
        pos = np.clip(pos, 0.0, n_src - 1.0)
        i0 = np.floor(pos).astype(np.int64)
        i1 = np.minimum(i0 + 1, n_src - 1)
        w = (pos - i0).astype(arr.dtype)
        return i0, i1, w

    r0, r1, wr = _axis_coords(arr.shape[0], out_h)
    rows = arr[r0, :] * (1 - wr)[:, None] + arr[r1, :] * wr[:, None]
    c0, c1, wc = _axis_coords(arr.shape[1], out_w)
    return rows[:, c0] * (1 - wc)[None, :] + rows[:, c1] * wc[None, :]


@dataclass(frozen=True)
class GroundTruthPattern:
    """A known zero-mean, unit-std pattern used to drive the simulator."""

    data: np.ndarray
    seed: int
    coloring_kernel_size: int | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass(frozen=True)
class PrnuGroundTruth:
    """A known multiplicative sensor fingerprint."""

    data: np.ndarray
    strength: float


@dataclass
class SceneSpec:
    """Parameters of one simulated portrait scene."""

    height: int
    width: int
    background_level: float | np.ndarray = 128.0
    blur_mask: np.ndarray | None = None
    iso_gain: float = 5.0
    g_curve: Callable = default_g_curve
    phi_std: float = 0.0
    phi_coloring_kernel: int | None = None
    quantize: bool = True
    iso_label: int = 100
    blur_kernel_size: int = 9
    blur_kernel: str = "box"  # "box" or "disc"

    def __post_init__(self):
        if self.iso_gain <= 0:
            raise ParameterError("iso_gain must be positive")
        if self.phi_std < 0:
            raise ParameterError("phi_std must be non-negative")
        if self.blur_mask is not None:
            m = np.asarray(self.blur_mask)
            if m.shape != (self.height, self.width):
                raise DimensionError("blur_mask shape does not match the scene")
            if not np.all((m == 0) | (m == 1)):
                raise ParameterError("blur_mask must be binary")
        if self.blur_kernel not in ("box", "disc"):
            raise ParameterError(f"unknown blur kernel {self.blur_kernel!r}")


def gen_pattern(
    seed: int,
    height: int,
    width: int,
    coloring_kernel_size: int | None = None,
    dtype=np.float64,
) -> GroundTruthPattern:
    """Generate a seeded Gaussian pattern, optionally box-colored, recentered
    to mean 0 and rescaled to unit sample std."""
    if height < 64 or width < 64:
        raise DimensionError("pattern dimensions must be at least 64x64")
    rng = np.random.default_rng(seed)
    data = rng.standard_normal((height, width), dtype=dtype)
    if coloring_kernel_size is not None:
        data = box_filter(data, int(coloring_kernel_size))
    data = data - data.dtype.type(data.mean(dtype=np.float64))
    data /= data.dtype.type(sample_std(data))
    return GroundTruthPattern(data=data, seed=seed, coloring_kernel_size=coloring_kernel_size)


def gen_prnu(
    seed: int, height: int, width: int, strength: float = 0.02, dtype=np.float64
) -> PrnuGroundTruth:
    """Generate a seeded multiplicative fingerprint with the given std."""
    if not 0.0 < strength <= 0.1:
        raise ParameterError("fingerprint strength must be in (0, 0.1]")
    pattern = gen_pattern(seed, height, width, dtype=dtype)
    data = pattern.data * pattern.data.dtype.type(strength)
    return PrnuGroundTruth(data=data, strength=strength)


def render_sensor(
    x, k_truth: PrnuGroundTruth | None, theta_std: float, seed: int, dtype=np.float64
) -> np.ndarray:
    """Sensor output: (1 + K) o X + Theta, without quantization."""
    arr = np.asarray(x, dtype=dtype)
    if arr.ndim != 2:
        raise DimensionError("sensor input must be a 2-D luminance plane")
    if theta_std < 0:
        raise ParameterError("theta_std must be non-negative")
    if k_truth is not None:
        if k_truth.data.shape != arr.shape:
            raise DimensionError("fingerprint shape does not match the scene")
        out = (1.0 + k_truth.data.astype(dtype, copy=False)) * arr
    else:
        out = arr.copy()
    if theta_std > 0:
        rng = np.random.default_rng(seed)
        out = out + theta_std * rng.standard_normal(arr.shape, dtype=dtype)
    return out


def _blur(a: np.ndarray, spec: SceneSpec) -> np.ndarray:
    if spec.blur_kernel == "box":
        return box_filter(a, spec.blur_kernel_size)
    # Disc kernel for more realistic bokeh; cost O(N k^2), used sparingly.
    from scipy import ndimage

    k = spec.blur_kernel_size
    yy, xx = np.mgrid[-(k // 2): k // 2 + 1, -(k // 2): k // 2 + 1]
    disc = ((yy**2 + xx**2) <= (k / 2) ** 2).astype(a.dtype)
    disc /= disc.sum()
    return ndimage.convolve(a, disc, mode="reflect")


def _gen_phi(spec: SceneSpec, rng: np.random.Generator, dtype) -> np.ndarray | float:
    if spec.phi_std == 0:
        return dtype(0.0)
    phi = rng.standard_normal((spec.height, spec.width), dtype=dtype)
    if spec.phi_coloring_kernel is not None:
        k = int(spec.phi_coloring_kernel)
        # Box coloring shrinks the std by ~1/k; rescale to keep phi_std.
        phi = box_filter(phi, k) * k
    return phi * dtype(spec.phi_std)


def render_portrait(
    spec: SceneSpec,
    pattern: GroundTruthPattern,
    base_image=None,
    seed: int = 0,
) -> np.ndarray:
    """Render one portrait frame.

    Inside the blur mask each pixel is blurred-base + gain * pattern + noise,
    where the gain is the ISO gain times the brightness curve evaluated on a
    local average of the blurred base; outside the mask the base image passes
    through untouched. ``base_image=None`` synthesizes a flat (or per-pixel)
    background from ``spec.background_level``.
    """
    dtype = np.float64
    if base_image is None:
        base = np.broadcast_to(
            np.asarray(spec.background_level, dtype=dtype), (spec.height, spec.width)
        ).copy()
    else:
        base = _as_matrix(base_image, "base_image")
        if np.issubdtype(base.dtype, np.floating):
            dtype = base.dtype.type
        else:
            base = base.astype(dtype)
    if base.shape != (spec.height, spec.width):
        raise DimensionError("base image shape does not match the scene spec")
    if pattern.data.shape != base.shape:
        raise DimensionError("pattern shape does not match the scene")

    mask = spec.blur_mask
    if mask is None:
        mask = np.zeros(base.shape, dtype=bool)
    else:
        mask = np.asarray(mask).astype(bool)

    rng = np.random.default_rng(seed)
    blurred = _blur(base, spec)
    # The gain's local-average operator reuses the same blur; on flat regions
    # both collapse to the same constant, which is all the estimators assume.
    local_luma = _blur(blurred, spec)
    gain = np.asarray(spec.g_curve(local_luma)).astype(base.dtype, copy=False)
    phi = _gen_phi(spec, rng, base.dtype.type)
    inner = blurred + base.dtype.type(spec.iso_gain) * gain * pattern.data.astype(
        base.dtype, copy=False
    )
    inner = inner + phi
    out = np.where(mask, inner, base)
    if spec.quantize:
        out = quantize_image(out)
    return out


def render_slm(
    height: int,
    width: int,
    pattern: GroundTruthPattern | np.ndarray,
    iso_gain: float,
    phi_std: float = 0.0,
    seed: int = 0,
    dtype=np.float64,
) -> np.ndarray:
    """Render a stage-light background region: constant level 4 plus the
    scaled pattern, always quantized to 8 bits (with the zero clip that makes
    these images saturate)."""
    if iso_gain <= 0:
        raise ParameterError("iso_gain must be positive")
    pat = pattern.data if isinstance(pattern, GroundTruthPattern) else np.asarray(pattern)
    if pat.shape != (height, width):
        raise DimensionError(
            f"pattern shape {pat.shape} does not match ({height}, {width})"
        )
    out = defaults.SLM_BACKGROUND + iso_gain * pat.astype(dtype, copy=False)
    if phi_std < 0:
        raise ParameterError("phi_std must be non-negative")
    if phi_std > 0:
        rng = np.random.default_rng(seed)
        out = out + phi_std * rng.standard_normal((height, width), dtype=dtype)
    return quantize_image(out)


def render_flat_patch_image(
    levels: np.ndarray,
    patch_side: int,
    pattern: GroundTruthPattern | np.ndarray,
    iso_gain: float,
    g_curve: Callable = default_g_curve,
    phi_std: float = 0.0,
    seed: int = 0,
    quantize: bool = True,
    dtype=np.float64,
) -> np.ndarray:
    """Render a calibration-board frame: a grid of flat patches at the given
    background levels, each carrying the co-located pattern block scaled by
    ``iso_gain * g_curve(level)``.

    ``levels`` is a (rows, cols) array of background levels; the output frame
    is (rows*patch_side, cols*patch_side). Patch (i, j) occupies rows
    ``i*B:(i+1)*B`` and the matching columns, so patches are exactly flat and
    exactly co-located across frames rendered with different seeds.
    """
    levels = np.atleast_2d(np.asarray(levels, dtype=np.float64))
    rows, cols = levels.shape
    b = int(patch_side)
    pat = pattern.data if isinstance(pattern, GroundTruthPattern) else np.asarray(pattern)
    if pat.shape != (rows * b, cols * b):
        raise DimensionError("pattern shape does not match the patch grid")
    base = np.kron(levels, np.ones((b, b))).astype(dtype)
    gain = np.kron(
        iso_gain * np.asarray(g_curve(levels), dtype=np.float64), np.ones((b, b))
    ).astype(dtype)
    out = base + gain * pat.astype(dtype, copy=False)
    if phi_std > 0:
        rng = np.random.default_rng(seed)
        out = out + dtype(phi_std) * rng.standard_normal(out.shape, dtype=dtype)
    if quantize:
        out = quantize_image(out)
    return out


def degrade(z, scale_factor: float, requantize: bool = False) -> np.ndarray:
    """Bilinear downscale by ``scale_factor`` in (0, 1]; optionally re-round
    and clip to 8 bits. ``scale_factor == 1`` is the identity (modulo the
    optional requantization)."""
    arr = _as_matrix(z)
    if not 0.0 < scale_factor <= 1.0:
        raise ParameterError("scale_factor must be in (0, 1]")
    if scale_factor == 1.0:
        out = arr.astype(arr.dtype, copy=True)
    else:
        new_h = int(round(arr.shape[0] * scale_factor))
        new_w = int(round(arr.shape[1] * scale_factor))
        if new_h < 32 or new_w < 32:
            raise ParameterError(
                f"downscaled output {new_h}x{new_w} is too small (min 32)"
            )
        out = bilinear_resize(arr, (new_h, new_w))
    if requantize:
        out = quantize_image(out)
    return out
