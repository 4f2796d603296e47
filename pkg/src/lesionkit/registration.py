"""Rigid registration by mutual-information maximization.

The optimizer is a derivative-free coordinate search: each of the six rigid
parameters in turn gets a golden-section line search over a shrinking step
radius, over a coarse-to-fine Gaussian pyramid.  Only improving steps are
accepted, so the sequence of accepted MI values within each level is
non-decreasing.

A returned transform maps fixed-volume world coordinates into moving-volume
world coordinates (the pull-back convention of :func:`lesionkit.volume.resample`),
so ``resample(moving, fixed.grid, result.transform)`` aligns the moving image
onto the fixed grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .transforms import RigidTransform
from .volume import Volume, is_canonical, sample_trilinear

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional accelerator
    _HAVE_NUMBA = False

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_MIN_MI_GAIN = 1e-12  # steps changing MI by less than this are rejected


class InsufficientOverlapError(RuntimeError):
    """Fixed and moving volumes share too few voxels under the transform."""


@dataclass(frozen=True)
class RegistrationOptions:
    pyramid_factors: tuple[int, ...] = (4, 2, 1)
    bins: int = 32
    max_iterations: int = 200
    rotation_step: float = math.radians(2.0)
    translation_step: float = 2.0  # mm
    rotation_tol: float = math.radians(0.01)
    translation_tol: float = 0.01  # mm
    clamp_percentiles: tuple[float, float] = (0.5, 99.5)
    sample_cap: int = 1 << 20
    golden_iterations: int = 8


@dataclass(frozen=True)
class LevelRecord:
    factor: int
    iterations: int
    mi_before: float
    mi_after: float


@dataclass(frozen=True)
class RegistrationResult:
    transform: RigidTransform
    final_mi: float
    levels: tuple[LevelRecord, ...]
    converged: bool


# ---------------------------------------------------------------------------
# MI estimation


def _clamp_bounds(data: np.ndarray, percentiles) -> tuple[float, float]:
    lo, hi = np.percentile(data, percentiles)
    return float(lo), float(hi)


def _bin_indices(values: np.ndarray, lo: float, hi: float, bins: int) -> np.ndarray:
    if hi - lo <= 0:
        return np.zeros(values.shape, dtype=np.int64)
    scaled = (values - lo) * (bins / (hi - lo))
    idx = np.floor(scaled).astype(np.int64)
    return np.clip(idx, 0, bins - 1)


def _entropy_sum(counts: np.ndarray, n: float) -> float:
    nz = counts[counts > 0].astype(np.float64)
    p = nz / n
    return float(-np.sum(p * np.log(p)))


def _joint_histogram_numpy(moving, M, xi, yi, zi, fixed_bins, bins, mlo, mhi, joint):
    from .volume import _snap_near_integers

    coords = M[:3, :3] @ np.stack([xi, yi, zi]) + M[:3, 3:4]
    coords = _snap_near_integers(coords)
    nx, ny, nz = moving.shape
    inb = (
        (coords[0] >= 0) & (coords[0] <= nx - 1)
        & (coords[1] >= 0) & (coords[1] <= ny - 1)
        & (coords[2] >= 0) & (coords[2] <= nz - 1)
    )
    n_overlap = int(np.count_nonzero(inb))
    if n_overlap == 0:
        return 0
    vals = sample_trilinear(moving, coords[:, inb])
    mbins = _bin_indices(vals, mlo, mhi, bins)
    joint[:] = np.bincount(fixed_bins[inb] * bins + mbins, minlength=bins * bins)
    return n_overlap


if _HAVE_NUMBA:

    @njit(cache=True)
    def _joint_histogram_fast(moving, M, xi, yi, zi, fixed_bins, bins, mlo, mhi, joint):
        nx, ny, nz = moving.shape
        m00, m01, m02, m03 = M[0, 0], M[0, 1], M[0, 2], M[0, 3]
        m10, m11, m12, m13 = M[1, 0], M[1, 1], M[1, 2], M[1, 3]
        m20, m21, m22, m23 = M[2, 0], M[2, 1], M[2, 2], M[2, 3]
        scale = bins / (mhi - mlo) if mhi > mlo else 0.0
        joint[:] = 0
        count = 0
        for s in range(xi.size):
            a, b, c = xi[s], yi[s], zi[s]
            x = m00 * a + m01 * b + m02 * c + m03
            y = m10 * a + m11 * b + m12 * c + m13
            z = m20 * a + m21 * b + m22 * c + m23
            # snap near-integer coordinates (keeps exact alignment exact)
            if abs(x - round(x)) < 1e-9:
                x = round(x)
            if abs(y - round(y)) < 1e-9:
                y = round(y)
            if abs(z - round(z)) < 1e-9:
                z = round(z)
            if x < 0 or x > nx - 1 or y < 0 or y > ny - 1 or z < 0 or z > nz - 1:
                continue
            x0 = int(math.floor(x))
            y0 = int(math.floor(y))
            z0 = int(math.floor(z))
            fx = x - x0
            fy = y - y0
            fz = z - z0
            x1 = min(x0 + 1, nx - 1)
            y1 = min(y0 + 1, ny - 1)
            z1 = min(z0 + 1, nz - 1)
            gx = 1.0 - fx
            gy = 1.0 - fy
            gz = 1.0 - fz
            val = (
                moving[x0, y0, z0] * gx * gy * gz
                + moving[x1, y0, z0] * fx * gy * gz
                + moving[x0, y1, z0] * gx * fy * gz
                + moving[x0, y0, z1] * gx * gy * fz
                + moving[x1, y1, z0] * fx * fy * gz
                + moving[x1, y0, z1] * fx * gy * fz
                + moving[x0, y1, z1] * gx * fy * fz
                + moving[x1, y1, z1] * fx * fy * fz
            )
            if scale > 0.0:
                mb = int(math.floor((val - mlo) * scale))
                if mb < 0:
                    mb = 0
                elif mb >= bins:
                    mb = bins - 1
            else:
                mb = 0
            joint[fixed_bins[s] * bins + mb] += 1
            count += 1
        return count

else:  # pragma: no cover
    _joint_histogram_fast = _joint_histogram_numpy


class _MIMetric:
    """Joint-histogram MI between a fixed sample set and a moving volume.

    Fixed-volume intensities are binned once; each evaluation pulls the
    sample coordinates through a candidate transform, interpolates the
    moving volume and accumulates one joint histogram (fixed reduction
    order, so results are bit-reproducible).
    """

    def __init__(self, fixed: Volume, moving: Volume, bins: int,
                 clamp_percentiles=(0.5, 99.5), stride: int = 1):
        self.bins = bins
        fdata = fixed.data
        idx = np.mgrid[
            0 : fixed.dims[0] : stride, 0 : fixed.dims[1] : stride, 0 : fixed.dims[2] : stride
        ]
        samples = fdata[:: stride, :: stride, :: stride].ravel()
        self.n_samples = samples.size
        flo, fhi = _clamp_bounds(fdata, clamp_percentiles)
        self.fixed_bins = _bin_indices(samples, flo, fhi, bins)
        coords = idx.reshape(3, -1).astype(np.float64)
        self.xi, self.yi, self.zi = np.ascontiguousarray(coords)
        self.fixed_affine = fixed.affine
        self.inv_moving_affine = np.linalg.inv(moving.affine)
        self.moving_data = np.ascontiguousarray(moving.data)
        self.mlo, self.mhi = _clamp_bounds(moving.data, clamp_percentiles)
        self.min_overlap = min(1000, self.n_samples)
        self._joint = np.zeros(bins * bins, dtype=np.int64)

    def evaluate(self, matrix: np.ndarray, min_overlap: int | None = None) -> float | None:
        """MI in nats, or None when the overlap is below the threshold."""
        M = np.ascontiguousarray(self.inv_moving_affine @ matrix @ self.fixed_affine)
        n_overlap = _joint_histogram_fast(
            self.moving_data, M, self.xi, self.yi, self.zi,
            self.fixed_bins, self.bins, self.mlo, self.mhi, self._joint,
        )
        threshold = self.min_overlap if min_overlap is None else min_overlap
        if n_overlap < threshold:
            return None
        joint = self._joint.reshape(self.bins, self.bins)
        n = float(n_overlap)
        h_f = _entropy_sum(joint.sum(axis=1), n)
        h_m = _entropy_sum(joint.sum(axis=0), n)
        h_j = _entropy_sum(joint.ravel(), n)
        return h_f + h_m - h_j


def mutual_information(
    fixed: Volume, moving: Volume, transform: RigidTransform | None = None, bins: int = 32
) -> float:
    """MI (nats) between ``fixed`` and ``moving`` resampled under ``transform``.

    Computed on the overlap domain from a ``bins`` x ``bins`` joint histogram
    of percentile-clamped intensities.  Degenerate single-bin distributions
    yield 0.  Raises :class:`InsufficientOverlapError` when fewer than
    min(1000, n_voxels) samples overlap.
    """
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    t = transform if transform is not None else RigidTransform.identity()
    metric = _MIMetric(fixed, moving, bins)
    mi = metric.evaluate(t.matrix)
    if mi is None:
        raise InsufficientOverlapError(
            f"fewer than {metric.min_overlap} overlapping samples under the transform"
        )
    return mi


# ---------------------------------------------------------------------------
# Pyramid


def _downsample(v: Volume, factor: int) -> Volume:
    if factor == 1:
        return v
    smoothed = gaussian_filter(v.data.astype(np.float32), sigma=0.5 * factor)
    data = smoothed[::factor, ::factor, ::factor]
    affine = v.affine.copy()
    affine[:3, :3] *= factor
    return Volume(np.ascontiguousarray(data), affine, v.intent)


def _level_stride(dims, cap: int) -> int:
    stride = 1
    while True:
        n = math.prod((d + stride - 1) // stride for d in dims)
        if n <= cap:
            return stride
        stride += 1


def _centroid_world(v: Volume) -> np.ndarray:
    w = v.data.astype(np.float64) - float(v.data.min())
    total = w.sum()
    if total <= 0:
        com = (np.asarray(v.dims, dtype=np.float64) - 1) / 2.0
    else:
        com = np.array(
            [
                (w.sum(axis=(1, 2)) * np.arange(v.dims[0])).sum(),
                (w.sum(axis=(0, 2)) * np.arange(v.dims[1])).sum(),
                (w.sum(axis=(0, 1)) * np.arange(v.dims[2])).sum(),
            ]
        ) / total
    return v.affine[:3, :3] @ com + v.affine[:3, 3]


def _params_to_matrix(params: np.ndarray, center: np.ndarray) -> np.ndarray:
    t = RigidTransform(tuple(params[:3]), tuple(params[3:6]), tuple(center))
    return t.matrix


def _golden_search(fun, radius: float, f0: float, iterations: int):
    """Maximize fun(alpha) over [-radius, radius]; returns (alpha, value).

    ``f0`` is fun(0); the returned value never falls below it.
    """
    a, b = -radius, radius
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    best_alpha, best_val = 0.0, f0
    for alpha, val in ((c, fc), (d, fd)):
        if val is not None and val > best_val:
            best_alpha, best_val = alpha, val
    for _ in range(iterations):
        # treat insufficient-overlap evaluations as -inf
        vc = fc if fc is not None else -math.inf
        vd = fd if fd is not None else -math.inf
        if vc >= vd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = fun(c)
            if fc is not None and fc > best_val:
                best_alpha, best_val = c, fc
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = fun(d)
            if fd is not None and fd > best_val:
                best_alpha, best_val = d, fd
    return best_alpha, best_val


def register_rigid(
    fixed: Volume, moving: Volume, opts: RegistrationOptions | None = None
) -> RegistrationResult:
    """Estimate the rigid transform maximizing MI(fixed, moving o T).

    Both volumes must be in canonical (RAS-closest) orientation.  The initial
    transform aligns intensity centroids; optimization proceeds coarse to
    fine over ``opts.pyramid_factors``.  The result's ``final_mi`` is always
    >= the MI of the centroid initialization at full resolution.
    """
    opts = opts or RegistrationOptions()
    for name, v in (("fixed", fixed), ("moving", moving)):
        if not is_canonical(v):
            raise ValueError(
                f"{name} volume is not in canonical orientation; "
                "apply reorient_to_canonical first"
            )

    center = _centroid_world(fixed)
    init_translation = _centroid_world(moving) - center
    init_params = np.concatenate([np.zeros(3), init_translation])

    # Skip pyramid levels that would shrink the smaller volume below 8 voxels
    # per axis; always keep full resolution.
    min_dim = min(min(fixed.dims), min(moving.dims))
    factors = [f for f in opts.pyramid_factors if f == 1 or min_dim // f >= 8]
    if not factors:
        factors = [1]

    steps0 = np.array(
        [opts.rotation_step] * 3 + [opts.translation_step] * 3, dtype=np.float64
    )
    tols = np.array(
        [opts.rotation_tol] * 3 + [opts.translation_tol] * 3, dtype=np.float64
    )

    params = init_params.copy()
    levels: list[LevelRecord] = []
    converged_all = True
    final_mi = -math.inf

    for li, factor in enumerate(factors):
        f_level = _downsample(fixed, factor)
        m_level = _downsample(moving, factor)
        # all overlap voxels at the two coarsest levels; stride-capped finer
        cap = None if li < 2 and factor != 1 else opts.sample_cap
        stride = 1 if cap is None else _level_stride(f_level.dims, cap)
        metric = _MIMetric(
            f_level, m_level, opts.bins, opts.clamp_percentiles, stride=stride
        )
        min_overlap = max(16, metric.n_samples // 4)

        current = metric.evaluate(_params_to_matrix(params, center), min_overlap)
        if factor == factors[-1]:
            # the finest level must end at least as good as the centroid init
            init_mi = metric.evaluate(_params_to_matrix(init_params, center), min_overlap)
            if init_mi is not None and (current is None or init_mi > current):
                params = init_params.copy()
                current = init_mi
        if current is None:
            if li == 0:
                raise InsufficientOverlapError(
                    "volumes do not overlap at the centroid initialization"
                )
            current = -math.inf
        mi_before = current

        steps = steps0.copy()
        iterations = 0
        level_converged = False
        for _ in range(opts.max_iterations):
            iterations += 1
            improved = False
            for d in range(6):
                def fun(alpha, _d=d):
                    trial = params.copy()
                    trial[_d] += alpha
                    return metric.evaluate(_params_to_matrix(trial, center), min_overlap)

                alpha, val = _golden_search(
                    fun, steps[d], current, opts.golden_iterations
                )
                if alpha != 0.0 and val > current + _MIN_MI_GAIN:
                    params[d] += alpha
                    current = val
                    improved = True
            if not improved:
                steps *= 0.5
                if np.all(steps < tols):
                    level_converged = True
                    break
        if not level_converged:
            converged_all = False
        mi_after = current if current != -math.inf else mi_before
        levels.append(LevelRecord(factor, iterations, float(mi_before), float(mi_after)))
        final_mi = mi_after

    transform = RigidTransform(tuple(params[:3]), tuple(params[3:6]), tuple(center))
    return RegistrationResult(transform, float(final_mi), tuple(levels), converged_all)
