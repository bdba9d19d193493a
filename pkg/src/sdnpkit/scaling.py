"""Estimation of the two pattern scaling operators: the ISO-dependent gain
(via clipped-Gaussian histogram fitting) and the brightness-dependent curve
(via Gram-matrix eigendecomposition or least squares).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.special import ndtr

from . import defaults
from .core import (
    _as_matrix,
    chi2_distance,
    kld,
    moving_average_curve,
    pmf,
    residue,
    sample_mean,
    sample_std,
)
from .errors import (
    DataError,
    DegenerateInputError,
    DimensionError,
    FlatnessWarning,
    MonotonicityWarning,
    ParameterError,
)

# Internal seed for the Monte-Carlo model pmf; fixed so the whole estimator
# is deterministic.
_MC_SEED = 0x5D17C0DE


class IsoGainEstimate(NamedTuple):
    gamma: float
    mu_p: float
    kld: float


@dataclass
class IsoGainTable:
    """Per-ISO gain estimates. The gain is expected to be non-decreasing in
    ISO for a single device; violations only warn."""

    entries: dict[int, IsoGainEstimate] = field(default_factory=dict)

    def add(self, iso: int, estimate: IsoGainEstimate):
        if estimate.gamma <= 0:
            raise ParameterError("gain estimates must be positive")
        self.entries[int(iso)] = estimate
        isos = sorted(self.entries)
        gammas = [self.entries[i].gamma for i in isos]
        if any(b < a for a, b in zip(gammas, gammas[1:])):
            warnings.warn(
                "ISO gain table is not non-decreasing in ISO",
                MonotonicityWarning,
                stacklevel=2,
            )

    def __getitem__(self, iso: int) -> IsoGainEstimate:
        return self.entries[int(iso)]


@dataclass
class BrightnessCurve:
    """Sampled estimate of the brightness-dependent gain with interpolating
    lookup (clamped to the nearest sample outside the sampled range)."""

    y: np.ndarray
    g: np.ndarray
    method: str = "ls"
    smoothing_window: int = defaults.SMOOTH_WINDOW

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.float64)
        self.g = np.asarray(self.g, dtype=np.float64)
        if self.y.size == 0 or self.y.size != self.g.size:
            raise DimensionError("curve needs matching non-empty samples")
        if np.any(np.diff(self.y) < 0):
            raise DataError("curve samples must be sorted by luminance")
        if np.any(self.g < 0):
            raise DataError("curve values must be non-negative")

    def lookup(self, y):
        return np.interp(y, self.y, self.g)

    @property
    def samples(self) -> list[tuple[float, float]]:
        return list(zip(self.y.tolist(), self.g.tolist()))


@dataclass
class PatchStack:
    """M x T grid of co-located B x B patches sharing one ISO setting.

    ``patches[m, t]`` is the m-th patch cut from the t-th image; patch m
    occupies identical coordinates in every image and patches do not overlap
    within an image.
    """

    patches: np.ndarray  # (M, T, B, B)
    iso: int = 0
    origins: list[tuple[int, int]] | None = None

    def __post_init__(self):
        self.patches = np.asarray(self.patches)
        if self.patches.ndim != 4 or self.patches.shape[2] != self.patches.shape[3]:
            raise DimensionError("patches must be an (M, T, B, B) array")

    @property
    def num_locations(self) -> int:
        return self.patches.shape[0]

    @property
    def num_images(self) -> int:
        return self.patches.shape[1]

    @property
    def patch_side(self) -> int:
        return self.patches.shape[2]

    def patch_means(self) -> np.ndarray:
        """Per-patch luminance means, shape (M, T)."""
        return self.patches.mean(axis=(2, 3), dtype=np.float64)

    @classmethod
    def from_images(cls, images, origins, patch_side: int, iso: int = 0) -> "PatchStack":
        """Cut co-located, non-overlapping patches out of T full frames."""
        b = int(patch_side)
        imgs = [_as_matrix(img, f"image {i}") for i, img in enumerate(images)]
        if not imgs:
            raise DimensionError("need at least one image")
        shape = imgs[0].shape
        for a in imgs:
            if a.shape != shape:
                raise DimensionError("all images must share dimensions")
        origins = [(int(r), int(c)) for r, c in origins]
        for r, c in origins:
            if r < 0 or c < 0 or r + b > shape[0] or c + b > shape[1]:
                raise DimensionError(f"patch at ({r}, {c}) exceeds the frame")
        for i, (r1, c1) in enumerate(origins):
            for r2, c2 in origins[i + 1:]:
                if abs(r1 - r2) < b and abs(c1 - c2) < b:
                    raise DimensionError("patches overlap within the frame")
        stack = np.empty((len(origins), len(imgs), b, b), dtype=np.float64)
        for m, (r, c) in enumerate(origins):
            for t, a in enumerate(imgs):
                stack[m, t] = a[r:r + b, c:c + b]
        return cls(patches=stack, iso=iso, origins=origins)


@lru_cache(maxsize=4)
def _mc_pool(n: int) -> np.ndarray:
    rng = np.random.default_rng(_MC_SEED)
    return rng.standard_normal(n)


def _model_pmf_mc(mu: float, sigma: float, n_samples: int) -> np.ndarray:
    pool = _mc_pool(n_samples)
    z = np.clip(np.floor(mu + sigma * pool + 0.5), 0, 255)
    return np.bincount(z.astype(np.int64), minlength=256) / float(n_samples)


def _model_pmf_exact(mu: float, sigma: float) -> np.ndarray:
    """Exact pmf of max(0, round(mu + sigma * N(0,1))) clipped to 255."""
    edges = np.arange(256, dtype=np.float64) + 0.5  # upper edge of each bin
    cdf = ndtr((edges - mu) / sigma)
    out = np.empty(256, dtype=np.float64)
    out[0] = cdf[0]
    out[1:] = np.diff(cdf)
    out[255] += 1.0 - cdf[255]
    return out


def estimate_iso_gain(
    background,
    grid_step: float = defaults.GRID_STEP,
    *,
    exclude_zero_bin: bool = True,
    pmf_method: str = "mc",
    mc_samples: int = 1_000_000,
    objective: str = "kld",
    recenter: bool = True,
    max_recenters: int = 25,
) -> IsoGainEstimate:
    """Fit a clipped, rounded Gaussian to a stage-light background region and
    read the ISO gain off the fitted std.

    The search walks a uniform (mean, std) grid spanning +/-1 around the
    region's sample moments at ``grid_step``. When heavy saturation pushes
    the best fit onto the grid boundary, the window is re-centered on the
    current argmin and the search repeats (``recenter=True``), so gains large
    enough to invalidate the raw sample moments are still recovered. The
    model pmf is Monte-Carlo by default (fixed internal seed, ``mc_samples``
    draws); ``pmf_method="exact"`` switches to Gaussian CDF differences and
    is the reference oracle. ``exclude_zero_bin`` drops the saturation spike
    from both pmfs, which is what makes the fit robust on clipped data.

    Returns ``(gamma, mu_p, kld)`` where ``gamma`` is the fitted std (the
    pattern is unit-std by convention) and ``mu_p = (mu_fit - 4) / gamma``.
    """
    arr = _as_matrix(background, "background")
    if arr.shape[0] < 256 or arr.shape[1] < 256:
        raise DimensionError("ISO-gain estimation needs a region of at least 256x256")
    if grid_step <= 0:
        raise ParameterError("grid_step must be positive")
    if pmf_method not in ("mc", "exact"):
        raise ParameterError(f"unknown pmf method {pmf_method!r}")
    if objective not in ("kld", "chi2"):
        raise ParameterError(f"unknown objective {objective!r}")
    if pmf_method == "mc" and mc_samples < 1_000_000:
        raise ParameterError("mc_samples must be at least 1e6")

    h_obs = pmf(arr)  # also validates integer-valued [0, 255] data
    mu0 = sample_mean(arr)
    s0 = sample_std(arr)
    if s0 == 0.0:
        raise DegenerateInputError("constant background region")

    distance = kld if objective == "kld" else chi2_distance

    def model(mu: float, sigma: float) -> np.ndarray:
        if pmf_method == "mc":
            return _model_pmf_mc(mu, sigma, mc_samples)
        return _model_pmf_exact(mu, sigma)

    npts = int(round(2.0 / grid_step)) + 1
    offsets = (np.arange(npts) - (npts - 1) // 2) * grid_step
    cache: dict[tuple[float, float], float] = {}

    def evaluate(mu: float, sigma: float) -> float:
        key = (round(mu, 9), round(sigma, 9))
        if key not in cache:
            cache[key] = distance(h_obs, model(mu, sigma), exclude_zero_bin)
        return cache[key]

    center_mu, center_sigma = mu0, s0
    visited = set()
    for _ in range(max_recenters + 1):
        visited.add((round(center_mu, 9), round(center_sigma, 9)))
        best = None
        best_pos = None
        for i, dmu in enumerate(offsets):
            mu = center_mu + dmu
            for j, dsig in enumerate(offsets):
                sigma = max(center_sigma + dsig, grid_step)
                value = evaluate(mu, sigma)
                # Deterministic tie-break: lowest mean, then lowest std.
                if best is None or value < best[0]:
                    best = (value, mu, sigma)
                    best_pos = (i, j)
        on_boundary = best_pos[0] in (0, npts - 1) or best_pos[1] in (0, npts - 1)
        next_center = (round(best[1], 9), round(best[2], 9))
        if not (recenter and on_boundary) or next_center in visited:
            break
        center_mu, center_sigma = best[1], best[2]

    kld_min, mu_hat, sigma_hat = best
    gamma = sigma_hat
    mu_p = (mu_hat - defaults.SLM_BACKGROUND) / gamma
    return IsoGainEstimate(gamma=float(gamma), mu_p=float(mu_p), kld=float(kld_min))


def build_curve(
    pairs,
    window: int = defaults.SMOOTH_WINDOW,
    method: str = "ls",
) -> BrightnessCurve:
    """Assemble a brightness curve from raw (luminance, gain) pairs: group
    duplicate luminance values by their mean, sort, then smooth with the
    moving average."""
    pts = [(float(x), float(y)) for x, y in pairs]
    if not pts:
        raise ParameterError("cannot build a curve from no pairs")
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    ux, inverse = np.unique(xs, return_inverse=True)
    sums = np.bincount(inverse, weights=ys)
    counts = np.bincount(inverse)
    grouped = list(zip(ux.tolist(), (sums / counts).tolist()))
    smoothed = moving_average_curve(grouped, window)
    return BrightnessCurve(
        y=np.array([p[0] for p in smoothed]),
        g=np.clip([p[1] for p in smoothed], 0.0, None),
        method=method,
        smoothing_window=window,
    )


def residue_attenuation(k: int) -> float:
    """Amplitude factor a k x k box residue applies to a white unit-std
    field: sqrt(1 - 1/k^2)."""
    return math.sqrt(1.0 - 1.0 / (k * k))


def estimate_g_eigen(
    stack: PatchStack,
    iso_gain: float,
    residue_k: int = defaults.RESIDUE_KERNEL,
    window: int = defaults.SMOOTH_WINDOW,
    compensate_residue_gain: bool = True,
) -> BrightnessCurve:
    """Brightness-curve estimation from the dominant eigenpair of each patch
    location's residue Gram matrix.

    Per location the T residues are vectorized into a B^2 x T matrix whose
    T x T Gram matrix is (signal) a rank-one outer product of the gain vector
    plus (noise) a scaled identity; the noise floor is estimated from the
    trailing eigenvalues and subtracted before the dominant eigenvector's
    magnitudes are rescaled into gain estimates. Box residues attenuate a
    white pattern by sqrt(1 - 1/k^2); ``compensate_residue_gain`` divides
    that back out so noise-free recovery is exact.
    """
    if iso_gain <= 0:
        raise ParameterError("iso_gain must be positive")
    t_count = stack.num_images
    if t_count < 2:
        raise ParameterError("eigen estimation needs at least 2 images")
    b = stack.patch_side
    means = stack.patch_means()
    if b >= 64:
        from .extract import flatness_check

        for m in range(stack.num_locations):
            if not flatness_check(stack.patches[m, 0], k=residue_k):
                warnings.warn(
                    f"patch location {m} does not look flat",
                    FlatnessWarning,
                    stacklevel=2,
                )
                break
    pairs: list[tuple[float, float]] = []
    for m in range(stack.num_locations):
        rows = np.empty((t_count, b * b), dtype=np.float64)
        for t in range(t_count):
            rows[t] = residue(stack.patches[m, t], residue_k).ravel()
        gram = rows @ rows.T / float(b * b)
        evals, evecs = np.linalg.eigh(gram)
        lam1 = float(evals[-1])
        if lam1 <= 0.0:
            raise DegenerateInputError(f"all-zero residues at patch location {m}")
        noise_var = float(evals[:-1].sum()) / (t_count - 1)
        strength = max(lam1 - noise_var, 0.0)
        g_vals = math.sqrt(strength) / iso_gain * np.abs(evecs[:, -1])
        if compensate_residue_gain:
            g_vals = g_vals / residue_attenuation(residue_k)
        pairs.extend(zip(means[m].tolist(), g_vals.tolist()))
    return build_curve(pairs, window=window, method="eigen")


def estimate_g_ls(z_patch, p_hat_block, gamma_hat: float) -> tuple[float, float]:
    """Closed-form least-squares gain estimate for one patch given a
    co-located base-pattern block.

    Returns ``(g_hat, y_prime_hat)``. The mean-corrected form stays valid
    for pattern estimates with non-zero mean (saturated stage-light
    estimates); when the block mean is zero it reduces to the plain
    projection and ``y_prime_hat`` equals the patch mean.
    """
    z = _as_matrix(z_patch, "z_patch").astype(np.float64, copy=False)
    p = _as_matrix(p_hat_block, "p_hat_block").astype(np.float64, copy=False)
    if z.shape != p.shape:
        raise DimensionError(f"shape mismatch: {z.shape} vs {p.shape}")
    if gamma_hat <= 0:
        raise ParameterError("gamma_hat must be positive")
    n = z.size
    mu_p = p.mean()
    denom = np.dot(p.ravel(), p.ravel()) - n * mu_p * mu_p
    if denom <= 0.0 or not np.isfinite(denom):
        raise DegenerateInputError("constant pattern block: least squares undefined")
    z_mean = z.mean()
    g_hat = (np.dot(z.ravel(), p.ravel()) - n * z_mean * mu_p) / (gamma_hat * denom)
    y_prime_hat = z_mean - gamma_hat * g_hat * mu_p
    return float(g_hat), float(y_prime_hat)


def estimate_g_ls_curve(
    stack: PatchStack,
    pattern,
    gamma_hat: float,
    window: int = defaults.SMOOTH_WINDOW,
) -> BrightnessCurve:
    """Apply the per-patch least-squares estimate across a whole stack.

    ``pattern`` is either an (M, B, B) array of pre-cut blocks or a full
    frame (2-D array or object with ``.data``) from which blocks are cut at
    the stack's recorded origins.
    """
    b = stack.patch_side
    m_count = stack.num_locations
    raw = getattr(pattern, "data", pattern)
    raw = np.asarray(raw)
    if raw.ndim == 3:
        blocks = raw
        if blocks.shape != (m_count, b, b):
            raise DimensionError("pattern blocks do not match the stack layout")
    elif raw.ndim == 2:
        if stack.origins is None:
            raise ParameterError(
                "full-frame pattern requires a stack with recorded origins"
            )
        blocks = np.stack(
            [raw[r:r + b, c:c + b] for r, c in stack.origins]
        )
    else:
        raise DimensionError("pattern must be 2-D or (M, B, B)")
    pairs = []
    for m in range(m_count):
        for t in range(stack.num_images):
            g_hat, y_hat = estimate_g_ls(stack.patches[m, t], blocks[m], gamma_hat)
            pairs.append((y_hat, g_hat))
    return build_curve(pairs, window=window, method="ls")
