"""Base-pattern detection and identification against a catalog, block-local
correlation maps, and the shipped model/iOS compatibility metadata.

The catalog ships compatibility metadata only; pattern matrices are
registered by the user (extracted or simulated). Detection searches every
catalog entry under all 8 square-symmetry poses (4 rotations x optional
horizontal flip); flipped poses are included because several pattern pairs
in the shipped metadata only correlate after a horizontal flip.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import defaults
from .core import _as_matrix, box_filter, residue, sample_std
from .errors import (
    DataError,
    DegenerateCorrelationWarning,
    DimensionError,
    NotFoundError,
    ParameterError,
)
from .extract import BasePattern
from .simulate import bilinear_resize


@dataclass(frozen=True)
class Orientation:
    """One of the 8 square-symmetry poses: an optional horizontal flip
    applied first, then a counter-clockwise rotation."""

    rotation: int = 0
    hflip: bool = False

    def __post_init__(self):
        if self.rotation not in (0, 90, 180, 270):
            raise ParameterError(f"rotation must be a multiple of 90, got {self.rotation}")

    def apply(self, a: np.ndarray) -> np.ndarray:
        out = np.fliplr(a) if self.hflip else a
        return np.rot90(out, self.rotation // 90)

    @property
    def label(self) -> str:
        return f"r{self.rotation}" + ("f" if self.hflip else "")

    @classmethod
    def parse(cls, label: str) -> "Orientation":
        text = label.strip().lower()
        hflip = text.endswith("f")
        if hflip:
            text = text[:-1]
        if not text.startswith("r"):
            raise ParameterError(f"bad orientation label {label!r}")
        return cls(rotation=int(text[1:]), hflip=hflip)


ORIENTATIONS: tuple[Orientation, ...] = tuple(
    Orientation(rotation=r, hflip=f) for f in (False, True) for r in (0, 90, 180, 270)
)
IDENTITY = ORIENTATIONS[0]


def _composition_table() -> dict[tuple[Orientation, Orientation], Orientation]:
    marker = np.arange(6.0).reshape(2, 3)
    images = {o: o.apply(marker) for o in ORIENTATIONS}
    table = {}
    for a in ORIENTATIONS:
        for b in ORIENTATIONS:
            combined = b.apply(a.apply(marker))
            for c, img in images.items():
                if img.shape == combined.shape and np.array_equal(img, combined):
                    table[(a, b)] = c
                    break
    return table


_COMPOSE = _composition_table()


def compose(first: Orientation, second: Orientation) -> Orientation:
    """Orientation equivalent to applying ``first`` then ``second``."""
    return _COMPOSE[(first, second)]


def inverse(orientation: Orientation) -> Orientation:
    for cand in ORIENTATIONS:
        if compose(orientation, cand) == IDENTITY:
            return cand
    raise AssertionError("unreachable: the 8 poses form a group")


# --------------------------------------------------------------------------
# Shipped compatibility metadata (12MP rear-camera patterns, indices 1..8).
# Pattern 8 is believed to come from editing software rather than the camera
# pipeline; it is a valid catalog id but carries no cross relations.
# --------------------------------------------------------------------------

RELATION_KINDS = ("none", "full", "partial_m", "partial_b", "partial_c", "partial_g")
BUILTIN_IDS = ("1", "2", "3", "4", "5", "6", "7", "8")

_BUILTIN_RELATIONS: dict[tuple[str, str], tuple[str, bool]] = {
    ("2", "3"): ("partial_m", False),
    ("4", "5"): ("partial_b", True),
    ("4", "6"): ("partial_c", True),
    ("4", "7"): ("partial_g", True),
    ("5", "6"): ("partial_b", False),
    ("5", "7"): ("partial_g", False),
    ("6", "7"): ("partial_g", False),
}

# (pattern id, model, first iOS major, last iOS major, pattern is h-flipped)
_MODEL_TABLE: tuple[tuple[str, str, int, int, bool], ...] = (
    ("1", "iPhone 7 Plus", 10, 10, False),
    ("2", "iPhone 7 Plus", 11, 11, False),
    ("3", "iPhone 8 Plus", 11, 11, False),
    ("3", "iPhone X", 11, 11, False),
    ("4", "iPhone X", 12, 13, False),
    ("4", "iPhone XR", 12, 13, False),
    ("4", "iPhone XS", 12, 13, False),
    ("4", "iPhone XS Max", 12, 13, False),
    ("4", "iPhone 11", 13, 13, False),
    ("4", "iPhone 11 Pro", 13, 13, False),
    ("4", "iPhone 11 Pro Max", 13, 13, False),
    ("4", "iPhone SE (2nd)", 13, 13, False),
    ("5", "iPhone 12 Pro Max", 14, 14, False),
    ("5", "iPhone 12", 14, 17, False),
    ("5", "iPhone 12 Pro", 14, 17, False),
    ("5", "iPhone 12 mini", 14, 17, False),
    ("5", "iPhone 13", 15, 15, False),
    ("5", "iPhone 13 mini", 15, 15, False),
    ("5", "iPhone 13 Pro", 15, 15, False),
    ("5", "iPhone 13 Pro Max", 15, 15, False),
    ("5", "iPhone SE (3rd)", 15, 15, False),
    ("5", "iPhone 11", 16, 17, False),
    ("5", "iPhone 11 Pro Max", 16, 17, False),
    ("5", "iPhone 11 Pro", 17, 17, False),
    ("6", "iPhone X", 16, 16, True),
    ("6", "iPhone SE (2nd)", 16, 16, True),
    ("6", "iPhone 13 Pro", 16, 16, False),
    ("6", "iPhone 14 Plus", 16, 16, False),
    ("6", "iPhone 14 Pro", 16, 16, False),
    ("6", "iPhone 13", 16, 17, False),
    ("6", "iPhone 14", 16, 17, False),
    ("6", "iPhone 14 Pro Max", 16, 17, False),
    ("6", "iPhone 13 mini", 17, 17, False),
    ("6", "iPhone 13 Pro Max", 17, 17, False),
    ("6", "iPhone 15 Plus", 17, 17, False),
    ("6", "iPhone 15", 17, 26, False),
    ("7", "iPhone 15 Pro", 17, 17, False),
    ("7", "iPhone 15 Pro Max", 17, 17, False),
    ("7", "iPhone 16", 18, 18, False),
    ("7", "iPhone 16 Plus", 18, 18, False),
    ("7", "iPhone 16e", 18, 18, False),
    ("7", "iPhone 16 Pro", 18, 18, False),
    ("7", "iPhone 16 Pro Max", 18, 18, False),
    ("7", "iPhone 17", 26, 26, False),
    ("7", "iPhone 17 Pro", 26, 26, False),
    ("7", "iPhone 17 Pro Max", 26, 26, False),
    ("7", "iPhone Air", 26, 26, False),
)


def _normalize_model(model: str) -> str:
    text = " ".join(model.strip().split()).lower()
    if not text.startswith("iphone"):
        text = "iphone " + text
    return text


def catalog_lookup(model: str, ios_major: int) -> str:
    """Pattern index for a (model, iOS major) pair from the shipped table.

    Rows whose pattern is the horizontally flipped variant map to the base
    index; the flip is recovered by the detection orientation search.
    """
    wanted = _normalize_model(model)
    for bp_id, name, lo, hi, _flipped in _MODEL_TABLE:
        if _normalize_model(name) == wanted and lo <= int(ios_major) <= hi:
            return bp_id
    raise NotFoundError(f"no pattern known for {model!r} / iOS {ios_major}")


def relation_between(id_a: str, id_b: str) -> tuple[str, bool]:
    """Declared relation between two shipped pattern indices and whether one
    side must be horizontally flipped to reveal it."""
    a, b = str(id_a), str(id_b)
    for x in (a, b):
        if x not in BUILTIN_IDS:
            raise NotFoundError(f"unknown pattern id {x!r}")
    if a == b:
        return ("full", False)
    return _BUILTIN_RELATIONS.get((min(a, b), max(a, b)), ("none", False))


# --------------------------------------------------------------------------
# Catalog container and detection search
# --------------------------------------------------------------------------


@dataclass
class CatalogEntry:
    catalog_id: str
    pattern: BasePattern
    models: list[tuple[str, str]] = field(default_factory=list)
    resolution_class: str = "rear_12MP"
    # Lazy per-orientation cache of contiguous, centered, unit-norm copies.
    _poses: dict = field(default_factory=dict, repr=False, compare=False)

    def oriented_unit(self, orientation: Orientation):
        """Centered, L2-normalized, contiguous copy of the pattern under the
        given pose; None when the pattern is constant (degenerate)."""
        if orientation not in self._poses:
            arr = np.ascontiguousarray(orientation.apply(self.pattern.data))
            if not np.issubdtype(arr.dtype, np.floating):
                arr = arr.astype(np.float64)
            arr = arr - arr.dtype.type(arr.mean(dtype=np.float64))
            norm = float(np.sqrt(np.dot(arr.ravel(), arr.ravel())))
            self._poses[orientation] = arr / arr.dtype.type(norm) if norm > 0 else None
        return self._poses[orientation]


@dataclass
class BpCatalog:
    """Immutable-after-load set of registered patterns plus relations."""

    entries: list[CatalogEntry] = field(default_factory=list)
    relations: dict[tuple[str, str], tuple[str, bool]] = field(default_factory=dict)

    def register(
        self,
        catalog_id: str,
        pattern: BasePattern,
        models: list[tuple[str, str]] | None = None,
        resolution_class: str = "rear_12MP",
    ) -> CatalogEntry:
        if any(e.catalog_id == catalog_id for e in self.entries):
            raise DataError(f"duplicate catalog id {catalog_id!r}")
        entry = CatalogEntry(
            catalog_id=str(catalog_id),
            pattern=pattern,
            models=list(models or []),
            resolution_class=resolution_class,
        )
        self.entries.append(entry)
        return entry

    def get(self, catalog_id: str) -> CatalogEntry:
        for entry in self.entries:
            if entry.catalog_id == str(catalog_id):
                return entry
        raise NotFoundError(f"catalog id {catalog_id!r} not registered")

    def relation(self, id_a: str, id_b: str) -> tuple[str, bool]:
        a, b = str(id_a), str(id_b)
        key = (min(a, b), max(a, b))
        if key in self.relations:
            return self.relations[key]
        if a == b and any(e.catalog_id == a for e in self.entries):
            return ("full", False)
        return relation_between(a, b)


@dataclass
class DetectionResult:
    detected: bool
    best_id: str | None
    best_ncc: float
    orientation: Orientation
    all_scores: dict[tuple[str, Orientation], float]


@dataclass
class NccMap:
    """Block-local correlation field, smoothed on the block grid and resized
    back to the source dimensions."""

    data: np.ndarray
    block: int = defaults.NCC_BLOCK
    smooth_k: int = defaults.MAP_SMOOTH_KERNEL
    degenerate_tiles: int = 0


@dataclass
class BinaryMask:
    """Mask selecting pixels whose map value stayed at or below alpha (the
    regions considered free of the synthetic pattern)."""

    data: np.ndarray
    alpha: float


def _centered_residue(w: np.ndarray):
    arr = _as_matrix(w, "residue")
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float64)
    centered = arr - arr.dtype.type(arr.mean(dtype=np.float64))
    norm = float(np.sqrt(np.dot(centered.ravel(), centered.ravel())))
    return centered, norm


def _search_catalog(w: np.ndarray, catalog: BpCatalog):
    """Score every (entry, pose) whose oriented shape matches the residue.

    Returns (scores, best) with a deterministic argmax tie-break: lowest id
    first, then canonical pose order.
    """
    if not catalog.entries:
        raise ParameterError("catalog has no entries")
    centered, norm = _centered_residue(w)
    if norm == 0.0:
        warnings.warn(
            "constant residue: all detection scores forced to 0",
            DegenerateCorrelationWarning,
            stacklevel=3,
        )
    flat = centered.ravel()
    scores: dict[tuple[str, Orientation], float] = {}
    best = None
    for entry in sorted(catalog.entries, key=lambda e: e.catalog_id):
        for orientation in ORIENTATIONS:
            pose_shape = (
                entry.pattern.shape
                if orientation.rotation in (0, 180)
                else entry.pattern.shape[::-1]
            )
            if pose_shape != centered.shape:
                continue
            unit = entry.oriented_unit(orientation)
            if unit is None or norm == 0.0:
                if unit is None:
                    warnings.warn(
                        f"constant pattern {entry.catalog_id!r}: score forced to 0",
                        DegenerateCorrelationWarning,
                        stacklevel=3,
                    )
                value = 0.0
            else:
                value = float(np.dot(flat, unit.ravel()) / norm)
                value = min(1.0, max(-1.0, value))
            key = (entry.catalog_id, orientation)
            scores[key] = value
            if best is None or value > best[0]:
                best = (value, entry.catalog_id, orientation)
    if best is None:
        raise ParameterError("no catalog entry matches the image dimensions")
    return scores, best


def detect_bp(
    image,
    catalog: BpCatalog,
    beta: float = defaults.DETECT_THRESHOLD,
    k: int = defaults.RESIDUE_KERNEL,
) -> DetectionResult:
    """Detect a catalog pattern in an image: correlate its box residue with
    every entry under all 8 poses and compare the maximum against beta."""
    w = residue(image, k)
    scores, (value, best_id, orientation) = _search_catalog(w, catalog)
    return DetectionResult(
        detected=value > beta,
        best_id=best_id,
        best_ncc=value,
        orientation=orientation,
        all_scores=scores,
    )


def best_matching_bp(w, catalog: BpCatalog):
    """Identify the best-matching entry for an existing residue, returned
    regardless of any detection threshold."""
    _, (value, best_id, orientation) = _search_catalog(_as_matrix(w), catalog)
    return best_id, orientation, value


def rescale_entry(entry: CatalogEntry, shape: tuple[int, int]) -> CatalogEntry:
    """Produce a scale-aligned variant of an entry for a declared resolution
    pair (e.g. the full-resolution pattern is the upscaled 12MP one). The
    resampled pattern is re-normalized to unit std."""
    data = bilinear_resize(entry.pattern.data, shape)
    std = sample_std(data)
    if std == 0.0:
        raise DataError("rescaled pattern is constant")
    pattern = BasePattern(
        data=data / std,
        mode=entry.pattern.mode,
        iso=entry.pattern.iso,
        num_images=entry.pattern.num_images,
        normalization="unit_std",
        catalog_id=entry.catalog_id,
    )
    return CatalogEntry(
        catalog_id=entry.catalog_id,
        pattern=pattern,
        models=list(entry.models),
        resolution_class=f"rescaled_{shape[0]}x{shape[1]}",
    )


def _tile_stats(tiles: np.ndarray):
    """Per-tile mean-centered tiles and norms; tiles shape (bh, bw, B, B)."""
    means = tiles.mean(axis=(2, 3), dtype=np.float64)
    centered = tiles.astype(np.float64, copy=False) - means[..., None, None]
    norms = np.sqrt(np.einsum("abij,abij->ab", centered, centered))
    return centered, norms


def ncc_map(
    w,
    p_hat,
    block: int = defaults.NCC_BLOCK,
    smooth_k: int = defaults.MAP_SMOOTH_KERNEL,
) -> NccMap:
    """Block-local NCC between a residue and a pattern estimate.

    The frame is tiled into non-overlapping ``block`` x ``block`` cells
    (partial edge cells are mirror-padded), each cell scored with the NCC of
    its two co-located tiles; constant tiles score 0 and are counted. The
    cell grid is smoothed with a box filter and upsampled back to the frame
    size with nearest-neighbor interpolation.
    """
    wm = _as_matrix(w, "residue")
    pm = _as_matrix(getattr(p_hat, "data", p_hat), "pattern")
    if wm.shape != pm.shape:
        raise DimensionError(f"shape mismatch: {wm.shape} vs {pm.shape}")
    if block < 2:
        raise ParameterError("block must be at least 2")
    h, w_cols = wm.shape
    bh = -(-h // block)
    bw = -(-w_cols // block)
    pad_h = bh * block - h
    pad_w = bw * block - w_cols

    def _tiles(a):
        padded = np.pad(np.asarray(a, dtype=np.float64), ((0, pad_h), (0, pad_w)), mode="symmetric")
        return (
            padded.reshape(bh, block, bw, block).transpose(0, 2, 1, 3)
        )

    wc, wn = _tile_stats(_tiles(wm))
    pc, pn = _tile_stats(_tiles(pm))
    cov = np.einsum("abij,abij->ab", wc, pc)
    denom = wn * pn
    degenerate = denom == 0.0
    grid = np.zeros((bh, bw), dtype=np.float64)
    np.divide(cov, denom, out=grid, where=~degenerate)
    grid = np.clip(grid, -1.0, 1.0)

    k_eff = min(smooth_k, min(bh, bw))
    if k_eff % 2 == 0:
        k_eff -= 1
    if k_eff >= 3:
        grid = box_filter(grid, k_eff)
    full = np.repeat(np.repeat(grid, block, axis=0), block, axis=1)[:h, :w_cols]
    return NccMap(
        data=full,
        block=block,
        smooth_k=smooth_k,
        degenerate_tiles=int(degenerate.sum()),
    )


def mask_from_map(ncc_map_or_array, alpha: float = defaults.MASK_THRESHOLD) -> BinaryMask:
    """Binary mask with 1 where the map value is <= alpha (inclusive)."""
    data = np.asarray(getattr(ncc_map_or_array, "data", ncc_map_or_array))
    return BinaryMask(data=data <= alpha, alpha=float(alpha))
