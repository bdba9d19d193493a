"""Deterministic matrix/statistics primitives shared by every other module.

All functions are pure and operate on 2-D numpy arrays ("luma planes").
Statistics are accumulated in float64 regardless of input dtype; filtering
preserves the input float dtype so large frames can stay in float32.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    DataError,
    DegenerateInputError,
    DimensionError,
    ParameterError,
)

# Substituted for empty model bins inside the KLD; keeps grid searches finite
# and preserves the ordering of candidates.
KLD_MODEL_FLOOR = 1e-12


def _as_matrix(a, name: str = "input") -> np.ndarray:
    arr = np.asarray(a)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be a 2-D matrix, got ndim={arr.ndim}")
    if arr.size == 0:
        raise DimensionError(f"{name} must be non-empty")
    return arr


def sample_mean(a) -> float:
    """Arithmetic mean over all entries."""
    arr = _as_matrix(a)
    return float(arr.mean(dtype=np.float64))


def sample_std(a) -> float:
    """Sample standard deviation with the N-1 divisor.

    This is the single normalization used throughout the toolkit; every
    unit-std convention references this function.
    """
    arr = _as_matrix(a)
    n = arr.size
    if n < 2:
        raise DimensionError("sample_std needs at least 2 entries")
    c = arr.astype(np.float64, copy=False) - arr.mean(dtype=np.float64)
    return float(math.sqrt(np.dot(c.ravel(), c.ravel()) / (n - 1)))


def ncc(a, b) -> float:
    """Normalized cross-correlation between two equally shaped matrices.

    Both arguments are centered before the inner product, so the value is
    invariant to affine maps with positive slope on either input. Constant
    inputs have no defined correlation and raise; detection-style callers
    catch that and score 0.
    """
    am = _as_matrix(a, "a")
    bm = _as_matrix(b, "b")
    if am.shape != bm.shape:
        raise DimensionError(f"shape mismatch: {am.shape} vs {bm.shape}")
    ac = am.astype(np.float64, copy=True)
    ac -= ac.mean()
    bc = bm.astype(np.float64, copy=True)
    bc -= bc.mean()
    na = math.sqrt(np.dot(ac.ravel(), ac.ravel()))
    nb = math.sqrt(np.dot(bc.ravel(), bc.ravel()))
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("ncc of a constant matrix is undefined")
    value = np.dot(ac.ravel(), bc.ravel()) / (na * nb)
    return float(min(1.0, max(-1.0, value)))


def signed_square(x: float) -> float:
    """sgn(x) * x**2."""
    x = float(x)
    return math.copysign(x * x, x) if x != 0.0 else 0.0


def _check_kernel(shape: tuple[int, int], k) -> int:
    if not isinstance(k, (int, np.integer)):
        raise ParameterError(f"kernel size must be an integer, got {k!r}")
    k = int(k)
    if k < 3 or k % 2 == 0:
        raise ParameterError(f"kernel size must be odd and >= 3, got {k}")
    if k > min(shape):
        raise ParameterError(f"kernel size {k} exceeds min dimension {min(shape)}")
    return k


def box_filter(a, k: int) -> np.ndarray:
    """Convolution with a normalized k x k box kernel.

    Borders are handled by mirror reflection (edge pixel included), the same
    convention used for padding partial correlation-map blocks. For integer-
    valued images the window sums are exact, so constants are preserved
    exactly.
    """
    arr = _as_matrix(a)
    k = _check_kernel(arr.shape, k)
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float64)
    pad = k // 2
    work = np.pad(arr, pad, mode="symmetric")
    acc = sliding_window_view(work, k, axis=0).sum(axis=-1)
    acc = sliding_window_view(acc, k, axis=1).sum(axis=-1)
    return acc / arr.dtype.type(k * k)


def residue(z, k: int) -> np.ndarray:
    """Noise residual: the image minus its box-filtered version."""
    arr = _as_matrix(z)
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float64)
    return arr - box_filter(arr, k)


def autocorrelation(p, max_lag: int) -> np.ndarray:
    """Normalized autocorrelation on a (2*max_lag+1)^2 lag grid.

    The zero-lag entry is exactly 1 and the matrix equals its point
    reflection. Lags outside the overlap contribute nothing (zero padding).
    """
    arr = _as_matrix(p).astype(np.float64, copy=False)
    if not isinstance(max_lag, (int, np.integer)) or max_lag < 0:
        raise ParameterError(f"max_lag must be a non-negative integer, got {max_lag!r}")
    max_lag = int(max_lag)
    if max_lag > min(arr.shape) // 4:
        raise ParameterError(
            f"max_lag {max_lag} too large for shape {arr.shape} (limit min(H,W)/4)"
        )
    c = arr - arr.mean()
    denom = np.dot(c.ravel(), c.ravel())
    if denom == 0.0:
        raise DegenerateInputError("autocorrelation of a constant matrix is undefined")
    h, w = c.shape
    size = 2 * max_lag + 1
    out = np.empty((size, size), dtype=np.float64)
    for dy in range(-max_lag, max_lag + 1):
        ys = slice(max(0, dy), min(h, h + dy))
        yt = slice(max(0, -dy), min(h, h - dy))
        for dx in range(-max_lag, max_lag + 1):
            xs = slice(max(0, dx), min(w, w + dx))
            xt = slice(max(0, -dx), min(w, w - dx))
            out[dy + max_lag, dx + max_lag] = np.dot(
                c[ys, xs].ravel(), c[yt, xt].ravel()
            )
    return out / denom


def moving_average_curve(
    pairs, window: int
) -> list[tuple[float, float]]:
    """Smooth the y values of (x, y) pairs with a truncated moving average.

    The window is applied in index order and shrinks near the ends; x values
    pass through unchanged. Callers are expected to have grouped duplicate x
    values and sorted beforehand (see scaling.build_curve).
    """
    if not isinstance(window, (int, np.integer)) or window < 1 or window % 2 == 0:
        raise ParameterError(f"window must be odd and >= 1, got {window!r}")
    pts = [(float(x), float(y)) for x, y in pairs]
    if not pts:
        return []
    ys = np.array([y for _, y in pts], dtype=np.float64)
    half = window // 2
    out = []
    for i, (x, _) in enumerate(pts):
        lo = max(0, i - half)
        hi = min(len(pts), i + half + 1)
        out.append((x, float(ys[lo:hi].mean())))
    return out


def pmf(values) -> np.ndarray:
    """Empirical probability mass function over the 8-bit support [0, 255]."""
    arr = _as_matrix(values)
    data = arr.astype(np.float64, copy=False)
    if not np.all(np.isfinite(data)):
        raise DataError("pmf input contains non-finite values")
    if np.any(data != np.floor(data)):
        raise DataError("pmf input must be integer-valued")
    if data.min() < 0 or data.max() > 255:
        raise DataError("pmf input outside the [0, 255] support")
    counts = np.bincount(data.astype(np.int64).ravel(), minlength=256)
    return counts / float(arr.size)


def _validate_pmf(h, name: str) -> np.ndarray:
    arr = np.asarray(h, dtype=np.float64).ravel()
    if arr.size != 256:
        raise DataError(f"{name} must have 256 bins, got {arr.size}")
    if np.any(arr < 0):
        raise DataError(f"{name} has negative mass")
    if abs(arr.sum() - 1.0) > 1e-8:
        raise DataError(f"{name} does not sum to 1")
    return arr


def kld(h_obs, h_model, exclude_zero_bin: bool = False) -> float:
    """Kullback-Leibler divergence between two 256-bin pmfs.

    With ``exclude_zero_bin`` both pmfs are restricted to bins 1..255 and
    renormalized, which removes the saturation spike of clipped data. Model
    bins that are empty where the observation has mass are floored at
    ``KLD_MODEL_FLOOR`` so grid searches stay finite.
    """
    obs = _validate_pmf(h_obs, "h_obs")
    model = _validate_pmf(h_model, "h_model")
    if exclude_zero_bin:
        obs = obs[1:]
        model = model[1:]
        obs_sum = obs.sum()
        model_sum = model.sum()
        if obs_sum <= 0.0:
            raise DegenerateInputError("all observed mass sits in the excluded bin")
        if model_sum <= 0.0:
            raise DegenerateInputError("all model mass sits in the excluded bin")
        obs = obs / obs_sum
        model = model / model_sum
    mask = obs > 0
    value = float(
        np.sum(obs[mask] * np.log(obs[mask] / np.maximum(model[mask], KLD_MODEL_FLOOR)))
    )
    return value if value > 0.0 else 0.0


def chi2_distance(h_obs, h_model, exclude_zero_bin: bool = False) -> float:
    """Chi-square distance between two 256-bin pmfs (alternative objective)."""
    obs = _validate_pmf(h_obs, "h_obs")
    model = _validate_pmf(h_model, "h_model")
    if exclude_zero_bin:
        obs = obs[1:]
        model = model[1:]
        obs_sum = obs.sum()
        model_sum = model.sum()
        if obs_sum <= 0.0 or model_sum <= 0.0:
            raise DegenerateInputError("all mass sits in the excluded bin")
        obs = obs / obs_sum
        model = model / model_sum
    mask = (obs > 0) | (model > 0)
    denom = np.maximum(model[mask], KLD_MODEL_FLOOR)
    diff = obs[mask] - model[mask]
    return float(np.sum(diff * diff / denom))
