import math

import numpy as np
import pytest
from scipy.special import ndtr

from templateres import (
    ImageGrid,
    InvalidInputError,
    gaussian_derivative,
    gaussian_kernel_1d,
    gaussian_smooth,
)


def dense_convolve_zero_pad(signal: np.ndarray, sigma: float) -> np.ndarray:
    """Independent oracle: direct double-loop convolution with explicitly
    sampled, renormalized Gaussian weights and zero extension."""
    radius = math.ceil(4.0 * sigma)
    taps = [math.exp(-0.5 * (k / sigma) ** 2) for k in range(-radius, radius + 1)]
    total = sum(taps)
    taps = [t / total for t in taps]
    out = np.zeros_like(signal)
    n = len(signal)
    for x in range(n):
        acc = 0.0
        for offset, tap in zip(range(-radius, radius + 1), taps):
            src = x - offset
            if 0 <= src < n:
                acc += tap * signal[src]
        out[x] = acc
    return out


class TestKernel:
    def test_zero_sigma_is_identity_filter(self):
        assert list(gaussian_kernel_1d(0.0)) == [1.0]

    @pytest.mark.parametrize("sigma", [0.3, 1.0, 2.5, 7.0])
    def test_normalized_and_symmetric(self, sigma):
        w = gaussian_kernel_1d(sigma)
        assert abs(w.sum() - 1.0) < 1e-12
        assert np.allclose(w, w[::-1], atol=0)
        assert len(w) == 2 * math.ceil(4 * sigma) + 1

    def test_unit_sigma_neighbor_ratio(self):
        w = gaussian_kernel_1d(1.0)
        mid = len(w) // 2
        assert w[mid + 1] / w[mid] == pytest.approx(math.exp(-0.5), abs=1e-12)

    def test_negative_sigma_rejected(self):
        with pytest.raises(InvalidInputError):
            gaussian_kernel_1d(-0.1)


class TestGaussianSmooth:
    def test_zero_sigma_returns_identical_values(self):
        img = ImageGrid(np.random.default_rng(0).random((5, 6)))
        out = gaussian_smooth(img, 0.0)
        assert np.array_equal(out.data, img.data)

    def test_impulse_reproduces_kernel(self):
        signal = np.zeros(41)
        signal[20] = 1.0
        out = gaussian_smooth(ImageGrid(signal), 2.0)
        kernel = gaussian_kernel_1d(2.0)
        assert np.allclose(out.data[20 - 8 : 20 + 9], kernel, atol=1e-12)
        assert np.all(out.data[:3] == 0.0)

    def test_matches_dense_oracle_1d(self):
        rng = np.random.default_rng(1)
        signal = rng.random(30)
        out = gaussian_smooth(ImageGrid(signal), 1.5)
        assert np.allclose(out.data, dense_convolve_zero_pad(signal, 1.5), atol=1e-12)

    def test_matches_dense_oracle_2d(self):
        rng = np.random.default_rng(2)
        img = rng.random((9, 11))
        sigma = 1.0
        rows = np.stack([dense_convolve_zero_pad(img[i], sigma) for i in range(9)])
        ref = np.stack(
            [dense_convolve_zero_pad(rows[:, j], sigma) for j in range(11)], axis=1
        )
        out = gaussian_smooth(ImageGrid(img), sigma)
        assert np.allclose(out.data, ref, atol=1e-12)

    def test_matches_dense_oracle_3d(self):
        rng = np.random.default_rng(3)
        vol = rng.random((5, 6, 4))
        sigma = 0.8
        ref = vol.copy()
        for axis in range(3):
            ref = np.apply_along_axis(dense_convolve_zero_pad, axis, ref, sigma)
        out = gaussian_smooth(ImageGrid(vol), sigma)
        assert np.allclose(out.data, ref, atol=1e-12)

    def test_discrete_edge_matches_normal_cdf(self):
        n = 256
        edge_at = 127.5  # between two pixel centers
        sigma = 3.0
        coords = np.arange(n, dtype=float)
        signal = (coords <= edge_at).astype(float)
        out = gaussian_smooth(ImageGrid(signal), sigma).data
        analytic = 1.0 - ndtr((coords - edge_at) / sigma)
        margin = math.ceil(4 * sigma)
        interior = slice(margin, n - margin)
        assert np.max(np.abs(out[interior] - analytic[interior])) < 0.01

    def test_negative_sigma_rejected(self):
        with pytest.raises(InvalidInputError):
            gaussian_smooth(ImageGrid(np.ones(4)), -1.0)


class TestGaussianDerivative:
    def test_constant_image_maps_to_zero(self):
        # Zero extension turns the grid boundary into a step, so "derivative
        # of a constant is zero" holds beyond the kernel radius (4 sigma).
        out = gaussian_derivative(ImageGrid(np.full((12, 12), 3.3)), 1.0, axis=0)
        assert np.allclose(out.data[4:-4, 4:-4], 0.0, atol=1e-12)
        assert np.allclose(out.data[4:-4, :], 0.0, atol=1e-12)

    def test_ramp_slope_recovered(self):
        signal = np.arange(40, dtype=float)
        out = gaussian_derivative(ImageGrid(signal), 1.5, axis=0)
        assert np.allclose(out.data[10:30], 1.0, atol=1e-9)

    def test_orthogonal_axis_sees_nothing(self):
        img = np.tile(np.linspace(0, 1, 16)[:, None], (1, 12))
        out = gaussian_derivative(ImageGrid(img), 1.0, axis=1)
        assert np.allclose(out.data[5:-5, 5:-5], 0.0, atol=1e-12)

    def test_invalid_arguments(self):
        img = ImageGrid(np.ones((4, 4)))
        with pytest.raises(InvalidInputError):
            gaussian_derivative(img, 0.0, axis=0)
        with pytest.raises(InvalidInputError):
            gaussian_derivative(img, -2.0, axis=0)
        with pytest.raises(InvalidInputError):
            gaussian_derivative(img, 1.0, axis=2)


class TestSmoothingProperties:
    @pytest.mark.parametrize("a,b", [(1.0, 1.0), (1.0, 2.0), (2.0, 2.0)])
    def test_semigroup_composition(self, a, b):
        rng = np.random.default_rng(4)
        signal = rng.random(96)
        twice = gaussian_smooth(gaussian_smooth(ImageGrid(signal), a), b).data
        once = gaussian_smooth(ImageGrid(signal), math.hypot(a, b)).data
        margin = math.ceil(4 * (a + b))
        interior = slice(margin, len(signal) - margin)
        assert np.max(np.abs(twice[interior] - once[interior])) < 1e-3

    def test_mass_never_created(self):
        rng = np.random.default_rng(5)
        img = rng.random((12, 12))
        for sigma in (0.5, 2.0, 6.0):
            out = gaussian_smooth(ImageGrid(img), sigma)
            assert out.data.sum() <= img.sum() + 1e-9

    def test_bounded_by_input_range(self):
        rng = np.random.default_rng(6)
        img = rng.random((10, 10)) - 0.4  # straddles zero
        out = gaussian_smooth(ImageGrid(img), 1.7).data
        assert out.min() >= img.min() - 1e-12
        assert out.max() <= img.max() + 1e-12
        nonneg = rng.random((10, 10))
        out = gaussian_smooth(ImageGrid(nonneg), 1.7).data
        assert out.min() >= 0.0
        assert out.max() <= nonneg.max() + 1e-12

    def test_everything_vanishes_for_huge_bandwidth(self):
        coords = np.arange(64, dtype=float)
        edge = (coords <= 31.5).astype(float)
        out = gaussian_smooth(ImageGrid(edge), 10.0 * 64)
        assert np.max(np.abs(out.data)) < 0.05
        blob = np.zeros((24, 24))
        blob[12, 12] = 1.0
        out2 = gaussian_smooth(ImageGrid(blob), 10.0 * 24)
        assert np.max(np.abs(out2.data)) < 1e-4
