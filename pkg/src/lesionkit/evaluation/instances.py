"""Instance extraction from semantic masks (2D and 3D)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..volume import Volume

_CONNECTIVITY_RANK = {
    2: {4: 1, 8: 2},
    3: {6: 1, 18: 2, 26: 3},
}
DEFAULT_CONNECTIVITY = {2: 8, 3: 26}


def _structure(ndim: int, connectivity: int) -> np.ndarray:
    try:
        rank = _CONNECTIVITY_RANK[ndim][connectivity]
    except KeyError:
        valid = sorted(_CONNECTIVITY_RANK.get(ndim, {}))
        raise ValueError(
            f"connectivity {connectivity} is invalid for {ndim}D grids "
            f"(valid: {valid})"
        ) from None
    return ndimage.generate_binary_structure(ndim, rank)


@dataclass(frozen=True)
class InstanceMap:
    """Integer-labelled instance grid: 0 = background, 1..N = instances.

    Labels produced by :func:`connected_components` are contiguous and
    numbered in order of first-encountered voxel (row-major scan).
    Externally supplied maps may have gaps and are flagged ``pre_labeled``.
    """

    labels: np.ndarray
    n_instances: int
    spacing: tuple[float, ...]
    connectivity: int
    pre_labeled: bool = False

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels, dtype=np.int32)
        if labels.ndim not in (2, 3):
            raise ValueError(f"instance maps must be 2D or 3D, got {labels.ndim}D")
        if labels.min() < 0:
            raise ValueError("instance labels must be non-negative")
        if len(self.spacing) != labels.ndim:
            raise ValueError("spacing length must match dimensionality")
        present = np.unique(labels)
        present = present[present > 0]
        if not self.pre_labeled:
            if len(present) != self.n_instances or (
                len(present) and present[-1] != self.n_instances
            ):
                raise ValueError(
                    f"labels must be exactly 1..{self.n_instances} with no gaps"
                )
        elif len(present) != self.n_instances:
            raise ValueError("n_instances does not match the distinct labels present")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))

    @classmethod
    def from_labels(cls, labels, spacing=None, connectivity: int | None = None) -> "InstanceMap":
        """Wrap an externally produced instance labelling (gaps allowed)."""
        arr = np.asarray(labels)
        spacing = tuple(spacing) if spacing is not None else (1.0,) * arr.ndim
        conn = connectivity or DEFAULT_CONNECTIVITY[arr.ndim]
        n = int(len(np.unique(arr[arr > 0])))
        return cls(arr, n, spacing, conn, pre_labeled=True)

    @property
    def label_values(self) -> np.ndarray:
        vals = np.unique(self.labels)
        return vals[vals > 0]


def connected_components(
    mask: Volume | np.ndarray,
    connectivity: int | None = None,
    spacing=None,
) -> InstanceMap:
    """Label connected foreground components, deterministically.

    Instances are numbered 1..N in order of their first voxel in a row-major
    scan.  Default connectivity is 26 for 3D grids and 8 for 2D grids.
    """
    if isinstance(mask, Volume):
        if mask.intent != "mask":
            raise ValueError("connected_components expects a mask volume")
        arr = mask.data > 0
        spacing = mask.spacing
    else:
        arr = np.asarray(mask) > 0
        spacing = tuple(spacing) if spacing is not None else (1.0,) * arr.ndim
    if arr.ndim not in (2, 3):
        raise ValueError(f"mask must be 2D or 3D, got {arr.ndim}D")
    conn = connectivity if connectivity is not None else DEFAULT_CONNECTIVITY[arr.ndim]
    structure = _structure(arr.ndim, conn)

    raw, n = ndimage.label(arr, structure=structure)
    if n > 0:
        raw = _renumber_by_first_voxel(raw, n)
    return InstanceMap(raw, int(n), spacing, conn)


def _renumber_by_first_voxel(labels: np.ndarray, n: int) -> np.ndarray:
    flat = labels.ravel()
    values, first_index = np.unique(flat, return_index=True)
    nz = values > 0
    order = np.argsort(first_index[nz], kind="stable")
    lut = np.zeros(n + 1, dtype=np.int32)
    lut[values[nz][order]] = np.arange(1, len(order) + 1, dtype=np.int32)
    return lut[labels]
