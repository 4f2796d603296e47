"""Overlap, surface-distance and centerline metrics on binary regions."""

from __future__ import annotations

import numpy as np
from scipy import ndimage
from skimage.morphology import skeletonize


def _as_bool(region) -> np.ndarray:
    arr = np.asarray(region)
    if arr.ndim not in (2, 3):
        raise ValueError(f"regions must be 2D or 3D, got {arr.ndim}D")
    return arr > 0


def dice(a, b) -> float:
    """2|A n B| / (|A| + |B|); 1.0 when both regions are empty."""
    a, b = _as_bool(a), _as_bool(b)
    if a.shape != b.shape:
        raise ValueError("regions differ in shape")
    na, nb = int(a.sum()), int(b.sum())
    if na + nb == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / (na + nb)


def iou(a, b) -> float:
    """|A n B| / |A u B|; 1.0 when both regions are empty."""
    a, b = _as_bool(a), _as_bool(b)
    if a.shape != b.shape:
        raise ValueError("regions differ in shape")
    union = int((a | b).sum())
    if union == 0:
        return 1.0
    return int((a & b).sum()) / union


def surface_voxels(region: np.ndarray) -> np.ndarray:
    """Foreground voxels with a face-adjacent background or out-of-bounds neighbour."""
    region = _as_bool(region)
    face = ndimage.generate_binary_structure(region.ndim, 1)
    eroded = ndimage.binary_erosion(region, structure=face, border_value=0)
    return region & ~eroded


def assd(a, b, spacing=None) -> float:
    """Average symmetric surface distance in mm (exact Euclidean transform).

    Raises ValueError when either region is empty: the distance between a
    surface and nothing is neither 0 nor infinity.
    """
    a, b = _as_bool(a), _as_bool(b)
    if a.shape != b.shape:
        raise ValueError("regions differ in shape")
    if not a.any() or not b.any():
        raise ValueError("ASSD requires two non-empty regions")
    spacing = tuple(spacing) if spacing is not None else (1.0,) * a.ndim
    if len(spacing) != a.ndim:
        raise ValueError("spacing length must match dimensionality")
    surf_a = surface_voxels(a)
    surf_b = surface_voxels(b)
    dt_to_b = ndimage.distance_transform_edt(~surf_b, sampling=spacing)
    dt_to_a = ndimage.distance_transform_edt(~surf_a, sampling=spacing)
    na, nb = int(surf_a.sum()), int(surf_b.sum())
    total = float(dt_to_b[surf_a].sum()) + float(dt_to_a[surf_b].sum())
    return total / (na + nb)


def skeleton(region: np.ndarray) -> np.ndarray:
    """Topology-preserving thinning (2D or 3D)."""
    return skeletonize(_as_bool(region)) > 0


def cl_dice(pred, ref) -> float | None:
    """Centerline Dice: harmonic mean of skeleton-in-mask precisions.

    Returns None (undefined) when either skeleton degenerates to empty.
    Raises on empty input regions.
    """
    pred, ref = _as_bool(pred), _as_bool(ref)
    if pred.shape != ref.shape:
        raise ValueError("regions differ in shape")
    if not pred.any() or not ref.any():
        raise ValueError("clDice requires two non-empty regions")
    skel_p = skeleton(pred)
    skel_r = skeleton(ref)
    if not skel_p.any() or not skel_r.any():
        return None
    tprec = int((skel_p & ref).sum()) / int(skel_p.sum())
    tsens = int((skel_r & pred).sum()) / int(skel_r.sum())
    if tprec + tsens == 0:
        return 0.0
    return 2.0 * tprec * tsens / (tprec + tsens)
