"""Closed-form 1D misalignment theory and synthetic edge samplers.

Two stylized images drive the analysis: a sharp unit edge and a point
mass, each shifted horizontally. Smoothing both with a Gaussian of
bandwidth ``sigma`` shrinks their maximal pointwise difference, and the
closed forms below say by how much. They double as independent oracles
for the iterative resolution measure, which should report a bandwidth
close to the shift scale ``tau`` when run on sampled edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .grid import ImageStack

__all__ = [
    "EdgeSampleSpec",
    "std_normal_cdf",
    "edge_max_diff",
    "point_mass_max_diff_approx",
    "point_mass_max_diff_exact",
    "sample_edge_shifts",
    "sample_edges",
    "smoothed_edge_value_at_zero",
]

_INV_SQRT_2PI_E = 1.0 / math.sqrt(2.0 * math.pi * math.e)
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def std_normal_cdf(x: float) -> float:
    """Standard normal distribution function, accurate to double precision."""
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def _check_sigma(sigma: float) -> None:
    if not np.isfinite(sigma) or sigma <= 0:
        raise InvalidInputError(f"bandwidth sigma must be > 0, got {sigma}")


def edge_max_diff(tau: float, sigma: float) -> float:
    """Peak difference of two unit edges shifted by ``tau``, smoothed at ``sigma``.

    Equals ``|2 Phi(tau / (2 sigma)) - 1|``: the difference profile is
    symmetric about the midpoint between the two edge locations and peaks
    there. Depends on tau and sigma only through their ratio.
    """
    _check_sigma(sigma)
    return abs(2.0 * std_normal_cdf(0.5 * tau / sigma) - 1.0)


def point_mass_max_diff_approx(tau: float, sigma: float) -> float:
    """Linearized peak difference of two smoothed, sigma-rescaled point masses.

    Returns ``|tau / sigma| / sqrt(2 pi e)``, the first-order value of the
    rescaled difference, valid when sigma is large relative to tau.
    """
    _check_sigma(sigma)
    return abs(tau / sigma) * _INV_SQRT_2PI_E


def _unit_gaussian(x: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def point_mass_max_diff_exact(tau: float, sigma: float) -> float:
    """Numerically maximized rescaled difference of two smoothed point masses.

    Maximizes ``sigma * |K_sigma(x) - K_sigma(x - tau)|`` over x by dense
    evaluation at step ``sigma / 1000`` followed by golden-section
    refinement around the best sample. Serves as the oracle for the
    linearized formula.
    """
    _check_sigma(sigma)
    if tau == 0:
        return 0.0

    def rescaled_diff(x):
        return np.abs(_unit_gaussian(x / sigma) - _unit_gaussian((x - tau) / sigma))

    lo = -abs(tau) / 2.0 - 6.0 * sigma
    hi = abs(tau) / 2.0 + 6.0 * sigma
    step = sigma / 1000.0
    xs = np.arange(lo, hi + step, step)
    values = rescaled_diff(xs)
    best = int(np.argmax(values))

    # Golden-section refinement of the maximizer within one dense step.
    a = xs[max(best - 1, 0)]
    b = xs[min(best + 1, len(xs) - 1)]
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc = float(rescaled_diff(np.array(c)))
    fd = float(rescaled_diff(np.array(d)))
    while b - a > 1e-12 * sigma:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = float(rescaled_diff(np.array(c)))
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = float(rescaled_diff(np.array(d)))
    return max(float(values[best]), fc, fd)


@dataclass(frozen=True)
class EdgeSampleSpec:
    """Parameters for a synthetic sample of randomly shifted 1D edges."""

    n: int
    tau: float
    extent: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise InvalidInputError(f"sample count must be >= 1, got {self.n}")
        if not np.isfinite(self.tau) or self.tau < 0:
            raise InvalidInputError(f"tau must be >= 0, got {self.tau}")
        if self.extent < 2:
            raise InvalidInputError(f"grid extent must be >= 2, got {self.extent}")


def _standard_normal_draws(n: int, seed: int) -> np.ndarray:
    """Reproducible N(0,1) draws: Box-Muller on a Philox counter-based PRNG."""
    rng = np.random.Generator(np.random.Philox(seed))
    m = (n + 1) // 2
    u1 = rng.random(m)
    u2 = rng.random(m)
    radius = np.sqrt(-2.0 * np.log1p(-u1))  # 1 - u1 in (0, 1], log is finite
    angle = 2.0 * math.pi * u2
    draws = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])
    return draws[:n]


def sample_edge_shifts(spec: EdgeSampleSpec) -> np.ndarray:
    """The N(0, tau^2) shift realizations used by :func:`sample_edges`."""
    return spec.tau * _standard_normal_draws(spec.n, spec.seed)


def sample_edges(spec: EdgeSampleSpec) -> ImageStack:
    """Discretized random unit edges on a 1D grid, reproducible by seed.

    Edge i is the indicator of ``(-inf, s_i]`` sampled at pixel centers,
    where the coordinate origin is the central pixel ``extent // 2``; a
    pixel lying exactly on the shift takes value 1.
    """
    shifts = sample_edge_shifts(spec)
    coords = np.arange(spec.extent, dtype=np.float64) - spec.extent // 2
    data = (coords[None, :] <= shifts[:, None]).astype(np.float64)
    return ImageStack(data)


def smoothed_edge_value_at_zero(shift: float, tau: float) -> float:
    """Intensity at the origin of a unit edge at ``shift`` smoothed with ``tau``.

    Equals ``Phi(shift / tau)``; over random Gaussian shifts with standard
    deviation tau this value is uniformly distributed on [0, 1], which is
    what makes quantile ranges of matched-bandwidth smoothing predictable.
    """
    if not np.isfinite(tau) or tau <= 0:
        raise InvalidInputError(f"tau must be > 0, got {tau}")
    return std_normal_cdf(shift / tau)
