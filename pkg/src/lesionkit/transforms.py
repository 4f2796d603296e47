"""Rigid transforms: 6-parameter rotation+translation with a matrix view.

Angles are intrinsic z-y-x Euler angles in radians; the rotation pivots
about ``center`` (world mm), then ``translation`` is added:

    x' = R (x - c) + c + t
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TRANSFORM_FORMAT_VERSION = 1
_HEADER = f"lesionkit-transform-v{TRANSFORM_FORMAT_VERSION}"


class TransformFormatError(ValueError):
    """Transform file is malformed or carries a different format version."""


def _rotation_zyx(rx: float, ry: float, rz: float) -> np.ndarray:
    """Rotation matrix for intrinsic z-y-x angles: Rz(rz) @ Ry(ry) @ Rx(rx)."""
    cx, sx = math.cos(rx), math.sin(rx)
    cy, sy = math.cos(ry), math.sin(ry)
    cz, sz = math.cos(rz), math.sin(rz)
    Rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    Rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return Rz @ Ry @ Rx


def _angles_from_rotation(R: np.ndarray) -> tuple[float, float, float]:
    """Inverse of :func:`_rotation_zyx` (gimbal-safe fallback at |ry| = 90 deg)."""
    ry = math.asin(max(-1.0, min(1.0, -R[2, 0])))
    if abs(math.cos(ry)) > 1e-9:
        rx = math.atan2(R[2, 1], R[2, 2])
        rz = math.atan2(R[1, 0], R[0, 0])
    else:
        rx = 0.0
        rz = math.atan2(-R[0, 1], R[1, 1])
    return rx, ry, rz


@dataclass(frozen=True)
class RigidTransform:
    """6-DOF rigid motion; ``rotation`` = (rx, ry, rz) intrinsic z-y-x radians."""

    rotation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        for name in ("rotation", "translation", "center"):
            val = tuple(float(x) for x in getattr(self, name))
            if len(val) != 3 or not all(math.isfinite(x) for x in val):
                raise ValueError(f"{name} must be 3 finite reals, got {val}")
            object.__setattr__(self, name, val)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_matrix(cls, matrix, center=(0.0, 0.0, 0.0), tol: float = 1e-6) -> "RigidTransform":
        """Re-parameterize a 4x4 rigid matrix; rejects non-rigid blocks."""
        m = np.asarray(matrix, dtype=np.float64)
        if m.shape != (4, 4) or not np.allclose(m[3], [0, 0, 0, 1], atol=tol):
            raise ValueError(f"not a homogeneous rigid matrix:\n{m}")
        R = m[:3, :3]
        if np.max(np.abs(R.T @ R - np.eye(3))) > tol:
            raise ValueError("rotation block is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > tol:
            raise ValueError("rotation block determinant is not +1")
        c = np.asarray(center, dtype=np.float64)
        t = m[:3, 3] - c + R @ c
        return cls(_angles_from_rotation(R), tuple(t), tuple(c))

    @property
    def rotation_matrix(self) -> np.ndarray:
        return _rotation_zyx(*self.rotation)

    @property
    def matrix(self) -> np.ndarray:
        R = self.rotation_matrix
        c = np.asarray(self.center)
        m = np.eye(4)
        m[:3, :3] = R
        m[:3, 3] = np.asarray(self.translation) + c - R @ c
        return m

    def apply(self, points) -> np.ndarray:
        """Transform world points; accepts (3,) or (N, 3)."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        R = self.rotation_matrix
        c = np.asarray(self.center)
        out = (pts - c) @ R.T + c + np.asarray(self.translation)
        return out[0] if np.ndim(points) == 1 else out

    def with_center(self, center) -> "RigidTransform":
        """Same motion, re-parameterized about a different rotation center."""
        return RigidTransform.from_matrix(self.matrix, center=center)

    def is_identity(self, tol: float = 1e-9) -> bool:
        return bool(np.max(np.abs(self.matrix - np.eye(4))) < tol)


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Transform applying ``b`` first, then ``a``: matrix(a) @ matrix(b)."""
    return RigidTransform.from_matrix(a.matrix @ b.matrix, center=a.center)


def invert(t: RigidTransform) -> RigidTransform:
    """Exact rigid inverse: transposed rotation, negated rotated translation."""
    R = t.rotation_matrix
    t_inv = -(R.T @ np.asarray(t.translation))
    return RigidTransform(
        _angles_from_rotation(R.T), tuple(t_inv), t.center
    )


def save_transform(t: RigidTransform, path) -> None:
    """Plain-text format: version header, 4x4 matrix row-major, then center."""
    lines = [_HEADER]
    for row in t.matrix:
        lines.append(" ".join(repr(float(x)) for x in row))
    lines.append("center " + " ".join(repr(float(x)) for x in t.center))
    Path(path).write_text("\n".join(lines) + "\n")


def load_transform(path) -> RigidTransform:
    text = Path(path).read_text()
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise TransformFormatError(f"{path}: empty transform file")
    if lines[0] != _HEADER:
        if lines[0].startswith("lesionkit-transform-v"):
            raise TransformFormatError(
                f"{path}: version mismatch ({lines[0]!r}, expected {_HEADER!r})"
            )
        raise TransformFormatError(f"{path}: unrecognized header {lines[0]!r}")
    if len(lines) != 6 or not lines[5].startswith("center "):
        raise TransformFormatError(f"{path}: expected 4 matrix rows plus a center line")
    try:
        rows = [[float(x) for x in lines[i + 1].split()] for i in range(4)]
        center = [float(x) for x in lines[5].split()[1:]]
    except ValueError as e:
        raise TransformFormatError(f"{path}: non-numeric entry ({e})") from e
    if any(len(r) != 4 for r in rows) or len(center) != 3:
        raise TransformFormatError(f"{path}: malformed matrix or center line")
    try:
        return RigidTransform.from_matrix(np.array(rows), center=tuple(center))
    except ValueError as e:
        raise TransformFormatError(f"{path}: {e}") from e
