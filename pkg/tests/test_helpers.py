"""
Tests for the numeric and runtime utilities
"""

import time

import numpy as np
import pytest

from utils.exceptions import DimensionMismatch, ValidationError
from utils.helpers import LinearAlgebra, RandomStreams, ordered_map
from utils.validators import ArrayValidator


class TestLinearAlgebra:
    """Test cases for the least-squares helpers"""

    def test_ols_matches_numpy(self, rng):
        """Test the pivoted QR solution against numpy lstsq"""
        x = rng.normal(size=(30, 3))
        y = rng.normal(size=30)
        beta0, beta, rank = LinearAlgebra.ols(x, y)
        expected = np.linalg.lstsq(LinearAlgebra.design(x), y, rcond=None)[0]
        assert rank == 4
        assert beta0 == pytest.approx(expected[0])
        np.testing.assert_allclose(beta, expected[1:])

    def test_rank_deficient_design(self):
        """Test the reported rank of a duplicated column"""
        x = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [4.0, 4.0]])
        _, _, rank = LinearAlgebra.ols(x, np.arange(4.0))
        assert rank == 2
        assert LinearAlgebra.rank(np.zeros((3, 2))) == 0

    def test_weighted_least_squares(self, rng):
        """Test that zero weights drop rows"""
        x = rng.normal(size=(20, 1))
        y = 1.0 + 2.0 * x[:, 0]
        y[:5] += 100.0
        weights = np.ones(20)
        weights[:5] = 0.0
        beta0, beta = LinearAlgebra.wls(x, y, weights)
        assert beta0 == pytest.approx(1.0)
        assert beta[0] == pytest.approx(2.0)


class TestRandomStreams:
    """Test cases for seeded streams"""

    def test_same_key_same_sequence(self):
        """Test that a stream is a function of its key"""
        a = RandomStreams.stream(7, 1, 2).normal(size=5)
        b = RandomStreams.stream(7, 1, 2).normal(size=5)
        np.testing.assert_array_equal(a, b)

    def test_different_keys(self):
        """Test that sibling keys give different sequences"""
        a = RandomStreams.stream(7, 1).normal(size=5)
        b = RandomStreams.stream(7, 2).normal(size=5)
        assert not np.array_equal(a, b)

    def test_child_seed(self):
        """Test the integer seed range"""
        seed = RandomStreams.child_seed(RandomStreams.stream(0))
        assert 0 <= seed < 2**31 - 1


class TestOrderedMap:
    """Test cases for ordered thread fan-out"""

    def test_order_is_kept(self):
        """Test that slower early items still come first"""

        def work(i):
            time.sleep(0.01 * (5 - i))
            return i * i

        results = ordered_map(work, range(5), n_jobs=4)
        assert results == [0, 1, 4, 9, 16]

    def test_sequential(self):
        """Test the single-thread path"""
        assert ordered_map(str, [1, 2], n_jobs=1) == ["1", "2"]
        assert ordered_map(str, [], n_jobs=3) == []


class TestArrayValidator:
    """Test cases for array coercion and checks"""

    def test_matrix(self):
        """Test vector promotion and width checks"""
        assert ArrayValidator.matrix([1.0, 2.0]).shape == (2, 1)
        with pytest.raises(DimensionMismatch):
            ArrayValidator.matrix(np.zeros((2, 3)), n_cols=2)
        with pytest.raises(ValidationError):
            ArrayValidator.matrix([[np.nan]])

    def test_vector(self):
        """Test column flattening and length checks"""
        assert ArrayValidator.vector(np.ones((3, 1))).shape == (3,)
        with pytest.raises(DimensionMismatch):
            ArrayValidator.vector([1.0, 2.0], length=3)

    def test_stochastic_checks(self):
        """Test probability vector and column-stochastic checks"""
        assert ArrayValidator.is_probability_vector([0.25, 0.75])
        assert not ArrayValidator.is_probability_vector([0.5, 0.6])
        assert ArrayValidator.is_column_stochastic([[0.9, 0.2], [0.1, 0.8]])
        assert not ArrayValidator.is_column_stochastic([[0.9, 0.2], [0.2, 0.8]])
        assert not ArrayValidator.is_column_stochastic([[1.0, 0.0, 0.0]])
