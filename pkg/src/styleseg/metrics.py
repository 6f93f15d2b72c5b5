"""Reference metrics on masks: Dice variants, rater agreement, AS2, shape features.

Everything here is a pure function of its inputs. ``soft_dice`` only uses
arithmetic and ``.sum()``, so it accepts numpy arrays and torch tensors alike.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import ndimage

from . import kernels

logger = logging.getLogger(__name__)

#: Douglas-Peucker tolerance (pixels) used to remove raster staircase from contours.
CONTOUR_TOLERANCE = 1.0

_EIGHT = np.ones((3, 3), dtype=bool)


def _as_bool(mask) -> np.ndarray:
    grid = getattr(mask, "grid", mask)
    return np.asarray(grid).astype(bool)


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")


def dice(a, b) -> float:
    """Hard Dice coefficient ``2|a & b| / (|a| + |b|)``; two empty masks score 1."""
    a, b = _as_bool(a), _as_bool(b)
    _check_same_shape(a, b)
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a, b).sum()) / total


def soft_dice(pred, target, smooth: float = 1.0):
    """``(2 sum(pred * target) + smooth) / (sum(pred) + sum(target) + smooth)``."""
    if smooth < 0:
        raise ValueError("smooth must be non-negative")
    if tuple(pred.shape) != tuple(target.shape):
        raise ValueError(f"shapes differ: {tuple(pred.shape)} vs {tuple(target.shape)}")
    inter = (pred * target).sum()
    return (2.0 * inter + smooth) / (pred.sum() + target.sum() + smooth)


def pairwise_dice(masks: Sequence) -> float:
    """Mean Dice over all unordered mask pairs."""
    if len(masks) < 2:
        raise ValueError("pairwise_dice needs at least 2 masks")
    grids = [_as_bool(m) for m in masks]
    values = [dice(a, b) for a, b in itertools.combinations(grids, 2)]
    return sum(values) / len(values)


def fleiss_kappa(masks: Sequence) -> float:
    """Fleiss' kappa with pixels as subjects, masks as raters, two categories.

    When chance agreement is 1 (every rater labels every pixel the same
    single class) the statistic is 0/0; that case is defined as 1.
    """
    n = len(masks)
    if n < 2:
        raise ValueError("fleiss_kappa needs at least 2 masks")
    grids = [_as_bool(m) for m in masks]
    for g in grids[1:]:
        _check_same_shape(grids[0], g)
    fg = np.sum([g.ravel() for g in grids], axis=0).astype(np.float64)
    bg = n - fg
    # per-subject agreement P_i = (sum_j n_ij^2 - n) / (n (n - 1))
    p_i = (fg * fg + bg * bg - n) / (n * (n - 1))
    p_bar = p_i.mean()
    p_fg = fg.sum() / (fg.size * n)
    p_e = p_fg**2 + (1.0 - p_fg) ** 2
    if math.isclose(p_e, 1.0):
        return 1.0
    return float((p_bar - p_e) / (1.0 - p_e))


def as2(q) -> float:
    """Annotator-style alignment strength: ``1 - H(q) / log2(M)``.

    ``q`` is a distribution over M >= 2 styles; ``0 log 0`` counts as 0.
    """
    q = np.asarray(q, dtype=np.float64).ravel()
    m = q.size
    if m < 2:
        raise ValueError("AS2 undefined for a single style")
    if np.any(q < 0) or not math.isclose(q.sum(), 1.0, abs_tol=1e-9):
        raise ValueError(f"q must be a probability vector, got {q.tolist()}")
    if np.all(q == q[0]):
        return 0.0
    nz = q[q > 0]
    entropy = float(-(nz * np.log2(nz)).sum())
    value = 1.0 - entropy / math.log2(m)
    return min(1.0, max(0.0, value))


@dataclass(frozen=True)
class ShapeFeatures:
    area: float
    perimeter: float
    border_irregularity: float
    compactness: float


def outer_contours(mask) -> list[np.ndarray]:
    """Traced outer boundary of every 8-connected component, in raster order."""
    grid = np.ascontiguousarray(_as_bool(mask), dtype=np.uint8)
    labels, count = ndimage.label(grid, structure=_EIGHT)
    if count == 0:
        return []
    flat = labels.ravel()
    values, first = np.unique(flat, return_index=True)
    contours = []
    for idx in first[values > 0]:
        r0, c0 = divmod(int(idx), grid.shape[1])
        contours.append(kernels.trace_boundary(grid, r0, c0))
    return contours


def contour_perimeter(contour: np.ndarray) -> float:
    """Arc length of a traced contour after staircase removal.

    A lone pixel has no polygon; it is given the perimeter of its pixel
    square so that non-empty shapes always have positive perimeter.
    """
    if len(contour) == 1:
        return 4.0
    simplified = kernels.simplify_closed(contour, CONTOUR_TOLERANCE)
    return float(kernels.polygon_length(simplified))


_EDGE_MIDPOINTS = np.array([(-0.5, 0.0), (0.5, 0.0), (0.0, -0.5), (0.0, 0.5)])


def shape_features(mask) -> ShapeFeatures:
    """Area, contour perimeter, border irregularity and convex-hull compactness.

    Perimeter sums the simplified outer contours of all components. The hull
    is taken over the edge midpoints of boundary pixels, so axis-aligned
    rectangles and diamonds score a compactness of about 1.
    """
    grid = _as_bool(mask)
    area = float(grid.sum())
    if area == 0:
        raise ValueError("shape_features of an empty mask")
    contours = outer_contours(grid)
    perimeter = sum(contour_perimeter(c) for c in contours)
    points = np.concatenate([np.concatenate(contours) + off for off in _EDGE_MIDPOINTS])
    hull = kernels.convex_hull_area(points)
    return ShapeFeatures(
        area=area,
        perimeter=perimeter,
        border_irregularity=perimeter**2 / (4.0 * math.pi * area),
        compactness=hull / area,
    )


def normalized_style_shapes(
    per_image_features: Mapping[str, Sequence[ShapeFeatures | None]],
) -> list[tuple[str, int, float, float]]:
    """Per-image area/perimeter ratios against the first style.

    Returns long-form rows ``(image_id, style, area_ratio, perimeter_ratio)``
    with 0-based style indices. ``None`` entries (missing cells) are skipped;
    an image whose first style is missing or degenerate is skipped with a
    warning.
    """
    rows = []
    for image_id, feats in per_image_features.items():
        ref = feats[0] if feats else None
        if ref is None or ref.area == 0 or ref.perimeter == 0:
            logger.warning("skipping %s: first style has no usable shape", image_id)
            continue
        for j, f in enumerate(feats):
            if f is None:
                continue
            rows.append((image_id, j, f.area / ref.area, f.perimeter / ref.perimeter))
    return rows
