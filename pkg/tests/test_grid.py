import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from templateres import (
    ImageGrid,
    ImageStack,
    InvalidInputError,
    pixelwise_quantile_range,
    quantile_pair,
    sample_linear,
)


class TestImageGrid:
    def test_wraps_and_locks_data(self):
        arr = np.ones((3, 4))
        g = ImageGrid(arr)
        assert g.dim == 2 and g.shape == (3, 4)
        assert not g.data.flags.writeable
        arr[0, 0] = 99.0  # caller's array stays independent
        assert g.data[0, 0] == 1.0

    def test_rejects_bad_data(self):
        with pytest.raises(InvalidInputError):
            ImageGrid(np.array([np.nan, 1.0]))
        with pytest.raises(InvalidInputError):
            ImageGrid(np.array([np.inf]))
        with pytest.raises(InvalidInputError):
            ImageGrid(np.zeros((2, 2, 2, 2)))
        with pytest.raises(InvalidInputError):
            ImageGrid(np.zeros((0,)))

    def test_stack_members_share_shape(self):
        g1 = ImageGrid(np.zeros((2, 2)))
        g2 = ImageGrid(np.zeros((2, 3)))
        with pytest.raises(InvalidInputError):
            ImageStack.from_grids([g1, g2])
        with pytest.raises(InvalidInputError):
            ImageStack.from_grids([])
        stack = ImageStack.from_grids([g1, g1, g1])
        assert len(stack) == 3 and stack.image_shape == (2, 2) and stack.dim == 2


class TestSampleLinear:
    def test_identity_at_grid_nodes(self):
        rng = np.random.default_rng(7)
        g = ImageGrid(rng.random((4, 5)))
        for i in range(4):
            for j in range(5):
                assert sample_linear(g, (i, j)) == g.data[i, j]

    def test_zero_outside_extent(self):
        g = ImageGrid(np.ones((4, 4)))
        assert sample_linear(g, (-5.0, -5.0)) == 0.0
        assert sample_linear(g, (1.0, 3.0001)) == 0.0
        assert sample_linear(g, (-1e-9, 1.0)) == 0.0

    def test_1d_midpoint(self):
        g = ImageGrid(np.array([0.0, 1.0]))
        assert sample_linear(g, (0.5,)) == 0.5

    def test_trilinear_midcell(self):
        g = ImageGrid(np.arange(8, dtype=float).reshape(2, 2, 2))
        assert sample_linear(g, (0.5, 0.5, 0.5)) == pytest.approx(3.5)

    def test_rejects_bad_points(self):
        g = ImageGrid(np.ones((4, 4)))
        with pytest.raises(InvalidInputError):
            sample_linear(g, (np.nan, 1.0))
        with pytest.raises(InvalidInputError):
            sample_linear(g, (1.0,))

    def test_continuous_across_cell_boundaries(self):
        rng = np.random.default_rng(3)
        g = ImageGrid(rng.random((6, 6)))
        for boundary in (1.0, 2.0, 4.0):
            for other in (0.3, 2.7, 4.9):
                left = sample_linear(g, (boundary - 1e-9, other))
                right = sample_linear(g, (boundary + 1e-9, other))
                assert abs(left - right) < 1e-6
                up = sample_linear(g, (other, boundary - 1e-9))
                down = sample_linear(g, (other, boundary + 1e-9))
                assert abs(up - down) < 1e-6


class TestQuantilePair:
    def test_constant_sample(self):
        assert quantile_pair([4.2] * 9, 0.2, 0.7) == (4.2, 4.2)

    def test_eleven_integers(self):
        assert quantile_pair(np.arange(11.0), 0.1, 0.9) == (1.0, 9.0)

    def test_two_values_interpolated(self):
        assert quantile_pair([3.0, 7.0], 0.25, 0.75) == (4.0, 6.0)

    def test_rejects_bad_input(self):
        with pytest.raises(InvalidInputError):
            quantile_pair([], 0.1, 0.9)
        with pytest.raises(InvalidInputError):
            quantile_pair([1.0], 0.9, 0.1)
        with pytest.raises(InvalidInputError):
            quantile_pair([1.0], 0.5, 0.5)
        with pytest.raises(InvalidInputError):
            quantile_pair([1.0, np.nan], 0.1, 0.9)

    @given(
        values=st.lists(
            st.floats(min_value=-1e6, max_value=1e6, allow_nan=False),
            min_size=1,
            max_size=40,
        ),
        seed=st.integers(0, 2**31),
    )
    @settings(max_examples=60, deadline=None)
    def test_permutation_invariant(self, values, seed):
        shuffled = list(values)
        np.random.default_rng(seed).shuffle(shuffled)
        assert quantile_pair(values, 0.1, 0.9) == quantile_pair(shuffled, 0.1, 0.9)

    @given(
        values=st.lists(
            st.floats(min_value=-1e3, max_value=1e3, allow_nan=False),
            min_size=2,
            max_size=25,
        ),
        factor=st.floats(min_value=1e-3, max_value=1e3),
    )
    @settings(max_examples=60, deadline=None)
    def test_positive_homogeneity(self, values, factor):
        q0, q1 = quantile_pair(values, 0.25, 0.75)
        s0, s1 = quantile_pair([factor * v for v in values], 0.25, 0.75)
        assert s0 == pytest.approx(factor * q0, rel=1e-9, abs=1e-9)
        assert s1 == pytest.approx(factor * q1, rel=1e-9, abs=1e-9)

    def test_ordering(self):
        rng = np.random.default_rng(11)
        values = rng.normal(size=101)
        q0, q1 = quantile_pair(values, 0.05, 0.95)
        assert q0 <= q1


class TestPixelwiseQuantileRange:
    def test_identical_images_give_zero_field(self):
        img = np.random.default_rng(0).random((5, 7))
        stack = ImageStack(np.stack([img] * 6))
        out = pixelwise_quantile_range(stack, 0.1, 0.9)
        assert out.shape == (5, 7)
        assert np.all(out.data == 0.0)

    def test_binary_pair(self):
        stack = ImageStack(np.stack([np.zeros((3, 3)), np.ones((3, 3))]))
        out = pixelwise_quantile_range(stack, 0.1, 0.9)
        assert np.allclose(out.data, 0.8)

    def test_singleton_stack(self):
        stack = ImageStack(np.random.default_rng(1).random((1, 4, 4)))
        out = pixelwise_quantile_range(stack, 0.1, 0.9)
        assert np.all(out.data == 0.0)

    def test_nonnegative_and_zero_where_agreeing(self):
        rng = np.random.default_rng(2)
        a = rng.random((6, 6))
        b = rng.random((6, 6))
        b[:3, :] = a[:3, :]  # agree on the top half
        out = pixelwise_quantile_range(ImageStack(np.stack([a, b, a])), 0.2, 0.8)
        assert np.all(out.data >= 0.0)
        assert np.all(out.data[:3, :] == 0.0)
