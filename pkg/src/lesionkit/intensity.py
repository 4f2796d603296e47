"""Bias-field correction, intensity normalization and threshold utilities.

The bias corrector follows the standard iterative log-domain scheme: per
iteration the masked log-intensity histogram is sharpened by Wiener
deconvolution against a Gaussian, the difference between observed and
expected log intensities forms a residual bias estimate, and a cubic
B-spline fit smooths that residual into a field update.  Updates accumulate
over a hierarchy of spline resolutions; the final multiplicative field has
mean 1 over the mask so global brightness is preserved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .volume import Volume


class EmptyMaskError(ValueError):
    """The estimation mask contains no usable voxels."""


# ---------------------------------------------------------------------------
# Cubic B-spline scattered-data fitting (uniform grid, index domain)


def _bspline_weights(t: np.ndarray) -> tuple[np.ndarray, ...]:
    """Uniform cubic B-spline basis values for local parameter t in [0, 1)."""
    t2 = t * t
    t3 = t2 * t
    b0 = (1 - t) ** 3 / 6.0
    b1 = (3 * t3 - 6 * t2 + 4) / 6.0
    b2 = (-3 * t3 + 3 * t2 + 3 * t + 1) / 6.0
    b3 = t3 / 6.0
    return b0, b1, b2, b3


class _BSplineGrid:
    """Uniform cubic B-spline over a volume's index domain.

    ``intervals`` counts mesh elements per axis; the control grid has
    ``intervals + 3`` points per axis.  Fitting uses the classic multilevel
    scattered-data approximation (per-point weight distribution, no global
    solve), which degrades gracefully where the mask has no support.
    """

    def __init__(self, dims, intervals):
        self.dims = tuple(dims)
        self.intervals = tuple(int(n) for n in intervals)
        self.ncp = tuple(n + 3 for n in self.intervals)
        self.scale = tuple(
            n / (d - 1) if d > 1 else 1.0 for n, d in zip(self.intervals, self.dims)
        )

    def _axis_basis(self, positions, axis):
        s = np.asarray(positions, dtype=np.float64) * self.scale[axis]
        i = np.minimum(np.floor(s).astype(np.int64), self.intervals[axis] - 1)
        i = np.maximum(i, 0)
        return i, _bspline_weights(s - i)

    def _fit_once(self, basis, values: np.ndarray) -> np.ndarray:
        (ix, bx), (iy, by), (iz, bz), wsum2 = basis
        ncy, ncz = self.ncp[1], self.ncp[2]
        size = self.ncp[0] * ncy * ncz
        numer = np.zeros(size)
        denom = np.zeros(size)
        for a in range(4):
            for b in range(4):
                for c in range(4):
                    w = bx[a] * by[b] * bz[c]
                    w2 = w * w
                    flat = ((ix + a) * ncy + (iy + b)) * ncz + (iz + c)
                    numer += np.bincount(flat, weights=w2 * (w * values) / wsum2, minlength=size)
                    denom += np.bincount(flat, weights=w2, minlength=size)
        coef = np.zeros(size)
        nz = denom > 1e-12
        coef[nz] = numer[nz] / denom[nz]
        return coef.reshape(self.ncp)

    def _point_basis(self, points: np.ndarray):
        ix, bx = self._axis_basis(points[:, 0], 0)
        iy, by = self._axis_basis(points[:, 1], 1)
        iz, bz = self._axis_basis(points[:, 2], 2)
        wsum2 = np.zeros(len(points))
        for a in range(4):
            for b in range(4):
                for c in range(4):
                    w = bx[a] * by[b] * bz[c]
                    wsum2 += w * w
        return (ix, bx), (iy, by), (iz, bz), np.maximum(wsum2, 1e-30)

    def fit(self, points: np.ndarray, values: np.ndarray, refinements: int = 3) -> np.ndarray:
        """Approximate scattered (point, value) samples; returns coefficients.

        The base approximation attenuates smooth fields, so the residual of
        the fit is refit on the same grid ``refinements`` times.
        """
        basis = self._point_basis(points)
        coef = self._fit_once(basis, values)
        residual = values - self.evaluate_points(coef, points)
        for _ in range(refinements):
            extra = self._fit_once(basis, residual)
            coef = coef + extra
            residual = residual - self.evaluate_points(extra, points)
        return coef

    def evaluate_points(self, coef: np.ndarray, points: np.ndarray) -> np.ndarray:
        ix, bx = self._axis_basis(points[:, 0], 0)
        iy, by = self._axis_basis(points[:, 1], 1)
        iz, bz = self._axis_basis(points[:, 2], 2)
        ncy, ncz = self.ncp[1], self.ncp[2]
        flatc = coef.ravel()
        out = np.zeros(len(points))
        for a in range(4):
            for b in range(4):
                for c in range(4):
                    w = bx[a] * by[b] * bz[c]
                    out += w * flatc[((ix + a) * ncy + (iy + b)) * ncz + (iz + c)]
        return out

    def evaluate_grid(self, coef: np.ndarray) -> np.ndarray:
        axes = [self._axis_basis(np.arange(d), ax) for ax, d in enumerate(self.dims)]
        (ix, bx), (iy, by), (iz, bz) = axes
        out = np.zeros(self.dims)
        for a in range(4):
            for b in range(4):
                for c in range(4):
                    sub = coef[np.ix_(ix + a, iy + b, iz + c)]
                    w = (
                        bx[a][:, None, None]
                        * by[b][None, :, None]
                        * bz[c][None, None, :]
                    )
                    out += w * sub
        return out


# ---------------------------------------------------------------------------
# Bias correction


@dataclass(frozen=True)
class N4Options:
    levels: int = 4
    max_iterations: int = 50  # per level
    convergence_threshold: float = 1e-3  # CV of the field update
    histogram_bins: int = 200
    sharpen_fwhm: float = 0.15  # in log-intensity units
    wiener_noise: float = 0.01
    initial_mesh: int = 1  # mesh elements per axis at the coarsest level


@dataclass(frozen=True)
class BiasField:
    """Smooth, strictly positive multiplicative field plus its spline summary."""

    field: Volume
    log_spline_coefficients: np.ndarray
    control_spacing_mm: tuple[float, float, float]
    no_op: bool = False

    def __post_init__(self):
        if self.field.data.min() <= 0:
            raise ValueError("bias field must be strictly positive")


def _sharpen_expectation(u: np.ndarray, bins: int, fwhm: float, noise: float):
    """Map observed log intensities to their sharpened-distribution expectation."""
    lo, hi = float(u.min()), float(u.max())
    if hi - lo < 1e-9:
        return None
    # pad so the circular FFT convolution cannot wrap mass around
    pad = bins // 2
    total = bins + 2 * pad
    width = (hi - lo) / bins
    hist, _ = np.histogram(u, bins=bins, range=(lo, hi))
    h = np.zeros(total)
    h[pad : pad + bins] = hist
    centers = lo + (np.arange(total) - pad + 0.5) * width

    sigma_bins = fwhm / (2.0 * math.sqrt(2.0 * math.log(2.0))) / width
    offsets = np.arange(total, dtype=np.float64)
    offsets = np.minimum(offsets, total - offsets)  # circular distance
    g = np.exp(-0.5 * (offsets / max(sigma_bins, 1e-6)) ** 2)
    g /= g.sum()

    F = np.fft.fft(g)
    H = np.fft.fft(h)
    wiener = np.conj(F) / (np.abs(F) ** 2 + noise)
    sharpened = np.maximum(np.fft.ifft(H * wiener).real, 0.0)

    num = np.fft.ifft(np.fft.fft(sharpened * centers) * F).real
    den = np.fft.ifft(np.fft.fft(sharpened) * F).real
    mapping = np.where(den > 1e-30, num / np.maximum(den, 1e-30), centers)
    return np.interp(u, centers, mapping)


def n4_correct(
    v: Volume, mask: Volume, opts: N4Options | None = None
) -> tuple[Volume, BiasField]:
    """Estimate and remove a smooth multiplicative bias field.

    Estimation uses masked voxels with strictly positive intensity; voxels
    <= 0 inside the mask are left untouched in the output.  The field is
    extrapolated to the full grid by the spline, so it stays defined outside
    the mask.  All-constant input returns a unit field flagged ``no_op``.
    """
    opts = opts or N4Options()
    if mask.intent != "mask":
        raise ValueError("estimation mask must have intent='mask'")
    if mask.dims != v.dims:
        raise ValueError(f"mask dims {mask.dims} != volume dims {v.dims}")
    valid = (mask.data > 0) & (v.data > 0)
    n_valid = int(np.count_nonzero(valid))
    if n_valid == 0:
        raise EmptyMaskError("mask contains no positive-intensity voxels")

    data = v.data.astype(np.float64)
    points = np.argwhere(valid).astype(np.float64)
    u_obs = np.log(data[valid])

    unit_field = Volume(np.ones(v.dims, dtype=np.float32), v.affine)
    finest_mesh = opts.initial_mesh * 2 ** (opts.levels - 1)
    spacing_mm = tuple(
        s * (d - 1) / finest_mesh if d > 1 else float(s)
        for s, d in zip(v.spacing, v.dims)
    )
    if u_obs.max() - u_obs.min() < 1e-9:
        return v, BiasField(unit_field, np.zeros((4, 4, 4)), spacing_mm, no_op=True)

    total_at_points = np.zeros(n_valid)
    level_grids: list[_BSplineGrid] = []
    level_coefs: list[np.ndarray] = []

    for level in range(opts.levels):
        mesh = opts.initial_mesh * 2**level
        grid = _BSplineGrid(v.dims, (mesh, mesh, mesh))
        coef_total = np.zeros(grid.ncp)
        for _ in range(opts.max_iterations):
            u_hat = u_obs - total_at_points
            expected = _sharpen_expectation(
                u_hat, opts.histogram_bins, opts.sharpen_fwhm, opts.wiener_noise
            )
            if expected is None:
                break
            residual = u_hat - expected
            coef = grid.fit(points, residual)
            update = grid.evaluate_points(coef, points)
            coef_total += coef
            total_at_points += update
            ratio = np.exp(update)
            cv = float(ratio.std() / max(ratio.mean(), 1e-30))
            if cv < opts.convergence_threshold:
                break
        level_grids.append(grid)
        level_coefs.append(coef_total)

    log_field = np.zeros(v.dims)
    for grid, coef in zip(level_grids, level_coefs):
        log_field += grid.evaluate_grid(coef)

    # normalize so the multiplicative field has mean 1 over the mask
    log_field -= math.log(float(np.exp(log_field[mask.data > 0]).mean()))
    field = np.exp(log_field)

    corrected = data / field
    corrected[~(data > 0)] = data[~(data > 0)]  # non-positive voxels pass through
    out = Volume(corrected, v.affine, v.intent)

    summary_grid = level_grids[-1]
    summary_coef = summary_grid.fit(points, total_at_points)
    bias = BiasField(
        Volume(field, v.affine), summary_coef, spacing_mm, no_op=False
    )
    return out, bias


# ---------------------------------------------------------------------------
# Normalization


NORMALIZE_METHODS = ("zscore", "minmax", "percentile_clamp")


@dataclass(frozen=True)
class NormalizationSpec:
    method: str = "zscore"
    mask: Volume | None = None
    percentiles: tuple[float, float] = (0.5, 99.5)

    def __post_init__(self):
        if self.method not in NORMALIZE_METHODS:
            raise ValueError(f"method must be one of {NORMALIZE_METHODS}")
        lo, hi = self.percentiles
        if not (0 <= lo < hi < 100):
            raise ValueError(f"percentiles must satisfy 0 <= low < high < 100, got {self.percentiles}")
        if self.mask is not None and self.mask.intent != "mask":
            raise ValueError("normalization mask must have intent='mask'")


def normalization_stats(v: Volume, spec: NormalizationSpec) -> dict:
    """Masked statistics used by :func:`normalize` (recorded in provenance)."""
    if spec.mask is not None:
        if spec.mask.dims != v.dims:
            raise ValueError("mask dims do not match volume dims")
        sel = v.data[spec.mask.data > 0].astype(np.float64)
        if sel.size == 0:
            raise EmptyMaskError("normalization mask is empty")
    else:
        sel = v.data.ravel().astype(np.float64)
    stats = {"mean": float(sel.mean()), "std": float(sel.std()),
             "min": float(sel.min()), "max": float(sel.max())}
    if spec.method == "percentile_clamp":
        lo, hi = np.percentile(sel, spec.percentiles)
        stats["clamp_low"], stats["clamp_high"] = float(lo), float(hi)
    return stats


def normalize(v: Volume, spec: NormalizationSpec) -> Volume:
    """Normalize intensities inside the mask; voxels outside are set to 0."""
    stats = normalization_stats(v, spec)
    data = v.data.astype(np.float64)
    if spec.method == "zscore":
        if stats["std"] <= 1e-12:
            raise ValueError("constant input: z-score normalization undefined")
        out = (data - stats["mean"]) / stats["std"]
    elif spec.method == "minmax":
        rng = stats["max"] - stats["min"]
        if rng <= 1e-12:
            raise ValueError("constant input: min-max normalization undefined")
        out = (data - stats["min"]) / rng
    else:  # percentile_clamp
        lo, hi = stats["clamp_low"], stats["clamp_high"]
        if hi - lo <= 1e-12:
            raise ValueError("degenerate percentile range")
        out = (np.clip(data, lo, hi) - lo) / (hi - lo)
    if spec.mask is not None:
        out = np.where(spec.mask.data > 0, out, 0.0)
    return Volume(out, v.affine, v.intent)


# ---------------------------------------------------------------------------
# Otsu threshold


def otsu_threshold(v: Volume | np.ndarray) -> float:
    """Threshold maximizing between-class variance over a 256-bin histogram."""
    data = v.data if isinstance(v, Volume) else np.asarray(v)
    vals = data.ravel().astype(np.float64)
    lo, hi = float(vals.min()), float(vals.max())
    if hi - lo <= 0:
        raise ValueError("constant input: no threshold separates a single value")
    nbins = 256
    hist, edges = np.histogram(vals, bins=nbins, range=(lo, hi))
    centers = (edges[:-1] + edges[1:]) / 2.0
    w = hist.astype(np.float64)
    total = w.sum()
    cum_w = np.cumsum(w)
    cum_m = np.cumsum(w * centers)

    best_t, best_var = 1, -1.0
    for t in range(1, nbins):
        w0 = cum_w[t - 1]
        w1 = total - w0
        if w0 == 0 or w1 == 0:
            continue
        m0 = cum_m[t - 1] / w0
        m1 = (cum_m[-1] - cum_m[t - 1]) / w1
        var = w0 * w1 * (m0 - m1) ** 2
        if var > best_var:
            best_var, best_t = var, t
    return float(edges[best_t])
