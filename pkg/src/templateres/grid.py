"""Scalar intensity fields on regular pixel grids.

Conventions used throughout the package: pixel centers sit at integer
coordinates with spacing 1 (so bandwidths and displacements are in pixel
units), images are extended by zero outside the grid, and all in-memory
arithmetic is double precision. Supported dimensions are 1, 2 and 3.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

__all__ = [
    "ImageGrid",
    "ImageStack",
    "sample_linear",
    "sample_linear_many",
    "quantile_pair",
    "pixelwise_quantile_range",
]

_SUPPORTED_DIMS = (1, 2, 3)


def _locked_float_array(values, min_ndim=1, max_ndim=3) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, order="C", copy=True)
    if not min_ndim <= arr.ndim <= max_ndim:
        raise InvalidInputError(
            f"expected an array with {min_ndim}..{max_ndim} axes, got {arr.ndim}"
        )
    if arr.size == 0:
        raise InvalidInputError("empty arrays are not valid image data")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("image data contains non-finite values")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ImageGrid:
    """An n-dimensional scalar field sampled on a regular pixel grid.

    The wrapped array is copied on construction and locked read-only, so a
    grid can be shared freely between threads.
    """

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _locked_float_array(self.data))

    @property
    def dim(self) -> int:
        return self.data.ndim

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def value_range(self) -> tuple[float, float]:
        return float(self.data.min()), float(self.data.max())


@dataclass(frozen=True, eq=False)
class ImageStack:
    """An ordered, non-empty collection of same-shape images.

    Stored as one array of shape ``(n, *image_shape)`` so that pixelwise
    reductions across the stack are single vectorized operations.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = _locked_float_array(self.data, min_ndim=2, max_ndim=4)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_grids(cls, grids) -> "ImageStack":
        grids = list(grids)
        if not grids:
            raise InvalidInputError("an image stack must contain at least one image")
        shape = grids[0].shape
        for g in grids:
            if g.shape != shape:
                raise InvalidInputError(
                    f"all stack members must share one shape, got {g.shape} vs {shape}"
                )
        return cls(np.stack([g.data for g in grids], axis=0))

    def __len__(self) -> int:
        return self.data.shape[0]

    def __getitem__(self, index: int) -> ImageGrid:
        return ImageGrid(self.data[index])

    def grids(self) -> list[ImageGrid]:
        return [self[i] for i in range(len(self))]

    @property
    def dim(self) -> int:
        return self.data.ndim - 1

    @property
    def image_shape(self) -> tuple[int, ...]:
        return self.data.shape[1:]


def _axis_interp_indices(coord: np.ndarray, size: int):
    """Per-axis lower/upper node indices and fraction for one coordinate array.

    Clipping keeps indices legal for points at or past the edge; those
    contributions are killed by the caller's inside mask (or carry zero
    fractional weight at the exact upper boundary).
    """
    lowf = np.floor(coord)
    frac = coord - lowf
    low = lowf.astype(np.intp)
    np.clip(low, 0, size - 1, out=low)
    high = np.minimum(low + 1, size - 1)
    return low, high, frac


def _interpolate_zero_outside(data: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Raw-array multilinear interpolation core; ``pts`` must be (m, ndim) float.

    Unrolled per dimension since this sits inside the registration's
    innermost loop.
    """
    flat = data.ravel()
    if data.ndim == 1:
        (n,) = data.shape
        x = pts[:, 0]
        inside = (x >= 0.0) & (x <= n - 1.0)
        i0, i1, f = _axis_interp_indices(x, n)
        out = (1.0 - f) * flat[i0] + f * flat[i1]
        out[~inside] = 0.0
        return out
    if data.ndim == 2:
        h, w = data.shape
        x, y = pts[:, 0], pts[:, 1]
        inside = (x >= 0.0) & (x <= h - 1.0) & (y >= 0.0) & (y <= w - 1.0)
        i0, i1, fx = _axis_interp_indices(x, h)
        j0, j1, fy = _axis_interp_indices(y, w)
        r0 = i0 * w
        r1 = i1 * w
        gx = 1.0 - fx
        gy = 1.0 - fy
        out = gx * (gy * flat[r0 + j0] + fy * flat[r0 + j1]) + fx * (
            gy * flat[r1 + j0] + fy * flat[r1 + j1]
        )
        out[~inside] = 0.0
        return out
    d0, d1, d2 = data.shape
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    inside = (
        (x >= 0.0) & (x <= d0 - 1.0)
        & (y >= 0.0) & (y <= d1 - 1.0)
        & (z >= 0.0) & (z <= d2 - 1.0)
    )
    i0, i1, fx = _axis_interp_indices(x, d0)
    j0, j1, fy = _axis_interp_indices(y, d1)
    k0, k1, fz = _axis_interp_indices(z, d2)
    s0 = d1 * d2
    a0 = i0 * s0
    a1 = i1 * s0
    b0 = j0 * d2
    b1 = j1 * d2
    gx = 1.0 - fx
    gy = 1.0 - fy
    gz = 1.0 - fz
    out = gx * (
        gy * (gz * flat[a0 + b0 + k0] + fz * flat[a0 + b0 + k1])
        + fy * (gz * flat[a0 + b1 + k0] + fz * flat[a0 + b1 + k1])
    ) + fx * (
        gy * (gz * flat[a1 + b0 + k0] + fz * flat[a1 + b0 + k1])
        + fy * (gz * flat[a1 + b1 + k0] + fz * flat[a1 + b1 + k1])
    )
    out[~inside] = 0.0
    return out


def sample_linear_many(grid: ImageGrid, points) -> np.ndarray:
    """Multilinear interpolation at many points, zero outside the grid.

    ``points`` is an array-like of shape ``(m, dim)`` in pixel coordinates.
    Any point with a coordinate outside the closed extent ``[0, n_k - 1]``
    of its axis evaluates to exactly 0.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.ndim != 2 or pts.shape[1] != grid.dim:
        raise InvalidInputError(
            f"points must have shape (m, {grid.dim}), got {pts.shape}"
        )
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("sample coordinates must be finite")
    return _interpolate_zero_outside(grid.data, pts)


def sample_linear(grid: ImageGrid, point) -> float:
    """Multilinearly interpolated intensity at one point (pixel coordinates).

    Returns 0 whenever any coordinate lies outside the closed grid extent.
    """
    pt = np.asarray(point, dtype=np.float64).reshape(-1)
    if pt.shape[0] != grid.dim:
        raise InvalidInputError(
            f"point must have {grid.dim} coordinates, got {pt.shape[0]}"
        )
    return float(sample_linear_many(grid, pt[None, :])[0])


def _interp_order_statistics(sorted_values: np.ndarray, p: float) -> np.ndarray:
    """Quantile of pre-sorted data (axis 0) at position ``h = p * (n - 1)``."""
    n = sorted_values.shape[0]
    h = p * (n - 1)
    lo = int(np.floor(h))
    hi = int(np.ceil(h))
    g = h - lo
    if hi == lo:
        return sorted_values[lo]
    return (1.0 - g) * sorted_values[lo] + g * sorted_values[hi]


def _check_probabilities(p0: float, p1: float) -> None:
    if not (0.0 < p0 < p1 < 1.0):
        raise InvalidInputError(
            f"probabilities must satisfy 0 < p0 < p1 < 1, got ({p0}, {p1})"
        )


def quantile_pair(values, p0: float, p1: float) -> tuple[float, float]:
    """Empirical (p0, p1)-quantiles via linear interpolation of order statistics.

    Uses the estimator with plotting position ``h = p * (n - 1)``,
    interpolating linearly between the order statistics at ``floor(h)`` and
    ``ceil(h)``; this is continuous in p and exact on the examples used in
    the tests.
    """
    _check_probabilities(p0, p1)
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise InvalidInputError("cannot take quantiles of an empty collection")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("quantile input contains non-finite values")
    srt = np.sort(arr)
    return (
        float(_interp_order_statistics(srt, p0)),
        float(_interp_order_statistics(srt, p1)),
    )


def quantile_range_array(values: np.ndarray, p0: float, p1: float) -> np.ndarray:
    """q1 - q0 along axis 0 of ``values``; same estimator as quantile_pair."""
    _check_probabilities(p0, p1)
    srt = np.sort(values, axis=0)
    return _interp_order_statistics(srt, p1) - _interp_order_statistics(srt, p0)


def pixelwise_quantile_range(stack: ImageStack, p0: float, p1: float) -> ImageGrid:
    """Per-pixel quantile range of intensities across a stack.

    The result has the stack's image shape and is everywhere >= 0; it is 0
    wherever all stack members agree exactly.
    """
    rng = quantile_range_array(stack.data, p0, p1)
    return ImageGrid(np.atleast_1d(rng))
