"""Skull-stripping, Quickshear-style defacing and a fallback brain mask.

The deface plane is built from the 2D convex hull of the brain mask's
mid-sagittal projection: the hull edge facing the anterior-inferior corner
is extended to a 3D plane (invariant along left-right), shifted away from
the brain by a safety buffer, and everything on the face side is zeroed.
By construction no voxel inside the brain mask is ever modified.

The fallback mask estimator is intensity-based (Otsu + largest component +
morphology) and assumes T1-like contrast.  It is a stand-in for proper
brain-extraction tooling and is not suitable for clinical use.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .intensity import otsu_threshold
from .volume import Volume, is_canonical


class EmptyMaskWarning(UserWarning):
    """Masking with an all-zero mask produces an all-zero volume."""


class DefaceError(ValueError):
    """No valid deface plane exists for this mask/volume combination."""


# voxels within this distance (mm) of the plane count as the keep side, so
# hull vertices are never cut by floating-point round-off
_PLANE_EPS = 1e-9


@dataclass(frozen=True)
class DefacePlane:
    """Cutting plane in world mm: voxels with normal . x > offset are zeroed."""

    normal: tuple[float, float, float]
    offset: float
    buffer: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("deface plane normal must be unit length")
        if self.buffer < 0:
            raise ValueError("buffer must be non-negative")


def apply_brain_mask(v: Volume, mask: Volume) -> Volume:
    """Zero voxels outside the brain mask; inside voxels are untouched."""
    if mask.intent != "mask":
        raise ValueError("brain mask must have intent='mask'")
    if mask.dims != v.dims:
        raise ValueError(f"mask dims {mask.dims} != volume dims {v.dims}")
    if not np.any(mask.data):
        warnings.warn("brain mask is empty; output is all zeros", EmptyMaskWarning)
    return Volume(v.data * mask.data, v.affine, v.intent)


def _axis_aligned_spacing(v: Volume) -> np.ndarray:
    """Spacing for near-axis-aligned canonical volumes; rejects oblique grids."""
    direction = v.affine[:3, :3] / np.linalg.norm(v.affine[:3, :3], axis=0, keepdims=True)
    if np.max(np.abs(direction - np.eye(3))) > 1e-3:
        raise DefaceError(
            "defacing requires an axis-aligned canonical grid "
            "(run after reorientation / atlas registration)"
        )
    return np.asarray(v.spacing)


def _convex_hull_2d(points: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain; returns hull vertices in CCW order."""
    pts = np.unique(points, axis=0)
    if len(pts) < 3:
        raise DefaceError("brain mask projection is degenerate (needs >= 3 points)")
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[np.ndarray] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[np.ndarray] = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 3:
        raise DefaceError("brain mask projection is collinear")
    return hull


def quickshear_plane(brain_mask: Volume, buffer: float = 10.0) -> DefacePlane:
    """Derive the shear plane from the mask's mid-sagittal convex hull."""
    if brain_mask.intent != "mask":
        raise ValueError("brain mask must have intent='mask'")
    if not np.any(brain_mask.data):
        raise DefaceError("brain mask is empty")
    if not is_canonical(brain_mask):
        raise DefaceError("brain mask must be in canonical (RAS) orientation")
    spacing = _axis_aligned_spacing(brain_mask)

    # project along left-right, keep (anterior, inferior) = (y, z) plane in mm
    proj = np.any(brain_mask.data > 0, axis=0)
    yz = np.argwhere(proj).astype(np.float64) * spacing[1:]
    hull = _convex_hull_2d(yz)

    dims = brain_mask.dims
    corner = np.array([(dims[1] - 1) * spacing[1], 0.0])  # anterior-inferior
    centroid = yz.mean(axis=0)

    def point_in_hull(p):
        nxt = np.roll(hull, -1, axis=0)
        cross = (nxt[:, 0] - hull[:, 0]) * (p[1] - hull[:, 1]) - (
            nxt[:, 1] - hull[:, 1]
        ) * (p[0] - hull[:, 0])
        return bool(np.all(cross >= 0) or np.all(cross <= 0))

    if point_in_hull(corner):
        raise DefaceError(
            "brain mask reaches the anterior-inferior corner; no shear plane exists"
        )

    # hull edge crossed by the centroid -> corner ray spans the face region
    direction = corner - centroid
    edge = None
    for i in range(len(hull)):
        a, bpt = hull[i], hull[(i + 1) % len(hull)]
        e = bpt - a
        denom = direction[0] * (-e[1]) - direction[1] * (-e[0])
        if abs(denom) < 1e-12:
            continue
        rhs = a - centroid
        t = (rhs[0] * (-e[1]) - rhs[1] * (-e[0])) / denom
        s = (direction[0] * rhs[1] - direction[1] * rhs[0]) / denom
        if t > 0 and -1e-12 <= s <= 1 + 1e-12:
            edge = (a, bpt)
            break
    if edge is None:
        raise DefaceError("could not locate a hull edge facing the face region")

    a, bpt = edge
    e = bpt - a
    n2 = np.array([e[1], -e[0]])
    n2 /= np.linalg.norm(n2)
    if np.dot(n2, centroid - a) > 0:  # make the normal point away from the brain
        n2 = -n2
    offset_local = float(np.dot(n2, a)) + buffer

    # lift into world coordinates (x component zero: invariant along left-right)
    origin_yz = brain_mask.affine[1:3, 3]
    normal = (0.0, float(n2[0]), float(n2[1]))
    offset_world = offset_local + float(np.dot(n2, origin_yz))
    return DefacePlane(normal, offset_world, float(buffer))


def quickshear_deface(v: Volume, brain_mask: Volume, buffer: float = 10.0) -> Volume:
    """Zero all voxels on the face side of the shear plane.

    Postcondition (exact): no voxel with ``brain_mask == 1`` is modified, and
    no voxel gains a new nonzero value.
    """
    if brain_mask.dims != v.dims:
        raise ValueError(f"mask dims {brain_mask.dims} != volume dims {v.dims}")
    plane = quickshear_plane(brain_mask, buffer)
    spacing = _axis_aligned_spacing(v)
    origin_yz = v.affine[1:3, 3]
    ny, nz = plane.normal[1], plane.normal[2]
    ycoord = np.arange(v.dims[1])[:, None] * spacing[1] + origin_yz[0]
    zcoord = np.arange(v.dims[2])[None, :] * spacing[2] + origin_yz[1]
    side = ny * ycoord + nz * zcoord  # (dimy, dimz), invariant along x
    cut = side > plane.offset + _PLANE_EPS
    data = np.where(cut[None, :, :], 0.0, v.data)
    return Volume(data, v.affine, v.intent)


def deface_cut_mask(v: Volume, brain_mask: Volume, buffer: float = 10.0) -> np.ndarray:
    """Boolean grid of voxels that :func:`quickshear_deface` would zero."""
    plane = quickshear_plane(brain_mask, buffer)
    spacing = _axis_aligned_spacing(v)
    origin_yz = v.affine[1:3, 3]
    ycoord = np.arange(v.dims[1])[:, None] * spacing[1] + origin_yz[0]
    zcoord = np.arange(v.dims[2])[None, :] * spacing[2] + origin_yz[1]
    side = plane.normal[1] * ycoord + plane.normal[2] * zcoord
    return np.broadcast_to((side > plane.offset + _PLANE_EPS)[None, :, :], v.dims)


def largest_component(mask: np.ndarray, connectivity: int = 26) -> np.ndarray:
    """Largest connected component of a boolean mask (3D: 6/18/26)."""
    from .evaluation.instances import _structure

    labels, n = ndimage.label(mask, structure=_structure(3, connectivity))
    if n == 0:
        return np.zeros_like(mask, dtype=bool)
    sizes = np.bincount(labels.ravel())[1:]
    return labels == (int(np.argmax(sizes)) + 1)


def estimate_brain_mask_fallback(v: Volume) -> Volume:
    """Non-learned brain mask: Otsu -> largest 26-component -> closing -> fill.

    Assumes T1-like contrast (bright brain on dark background).  Not a
    substitute for validated brain-extraction tools; not for clinical use.
    """
    threshold = otsu_threshold(v)  # raises on constant input
    binary = v.data > threshold
    comp = largest_component(binary, connectivity=26)
    ball = _ball_structure(2)
    closed = ndimage.binary_closing(comp, structure=ball)
    filled = ndimage.binary_fill_holes(closed)
    final = largest_component(filled, connectivity=26)
    return Volume(final.astype(np.float32), v.affine, intent="mask")


def _ball_structure(radius: int) -> np.ndarray:
    r = int(radius)
    grid = np.mgrid[-r : r + 1, -r : r + 1, -r : r + 1]
    return (grid**2).sum(axis=0) <= r * r
