"""Tests for the dense helpers and the small-side truncated SVD."""

import numpy as np
import pytest

from deepkm.core.exceptions import ContractViolation
from deepkm.linalg import (
    as_matrix,
    as_tensor4,
    frobenius_sq,
    gram_small_side,
    matmul,
    truncated_svd,
)


class TestConstructors:
    def test_as_matrix_rejects_wrong_rank(self):
        with pytest.raises(ContractViolation, match="2-D"):
            as_matrix(np.zeros(3))

    def test_as_matrix_rejects_nan(self):
        with pytest.raises(ContractViolation, match="non-finite"):
            as_matrix([[1.0, np.nan]])

    def test_as_tensor4_converts_ints(self):
        t = as_tensor4(np.ones((3, 3, 2, 4), dtype=np.int32))
        assert t.dtype == np.float64
        assert t.shape == (3, 3, 2, 4)

    def test_matmul_dimension_mismatch(self):
        with pytest.raises(ContractViolation, match="cannot multiply"):
            matmul(np.zeros((2, 3)), np.zeros((2, 3)))

    def test_gram_is_symmetric(self, rng):
        w = rng.normal(size=(5, 40))
        g = gram_small_side(w)
        np.testing.assert_array_equal(g, g.T)
        np.testing.assert_allclose(g, w @ w.T, rtol=1e-12)

    def test_gram_rejects_tall(self):
        with pytest.raises(ContractViolation):
            gram_small_side(np.zeros((4, 2)))

    def test_frobenius_sq(self):
        assert frobenius_sq(np.array([[3.0, 4.0]])) == 25.0


class TestTruncatedSvd:
    @pytest.mark.parametrize("shape", [(1, 7), (3, 9), (5, 64), (5, 480)])
    def test_singular_values_match_lapack(self, rng, shape):
        w = rng.normal(size=shape)
        result = truncated_svd(w, shape[0])
        expected = np.linalg.svd(w, compute_uv=False)
        np.testing.assert_allclose(result.singular_values, expected, rtol=1e-9)

    def test_right_vectors_are_orthonormal(self, rng):
        w = rng.normal(size=(5, 120))
        v = truncated_svd(w, 3).right_vectors
        assert v.shape == (120, 3)
        np.testing.assert_allclose(v.T @ v, np.eye(3), atol=1e-10)

    def test_right_vectors_span_top_subspace(self, rng):
        w = rng.normal(size=(4, 30))
        v = truncated_svd(w, 2).right_vectors
        _, _, vt = np.linalg.svd(w, full_matrices=False)
        top = vt[:2].T
        # equal projectors, independent of signs
        np.testing.assert_allclose(v @ v.T, top @ top.T, atol=1e-9)

    def test_rank_deficient_returns_fewer_vectors(self, rng):
        u = rng.normal(size=(5, 1))
        w = u @ rng.normal(size=(1, 20))
        result = truncated_svd(w, 4)
        assert result.rank == 1
        assert result.right_vectors.shape == (20, 1)

    def test_zero_matrix_is_empty(self):
        result = truncated_svd(np.zeros((3, 10)), 2)
        assert result.rank == 0
        assert result.right_vectors.shape == (10, 0)

    def test_k_larger_than_s_is_capped(self, rng):
        w = rng.normal(size=(3, 15))
        assert truncated_svd(w, 10).rank == 3

    def test_tall_matrix(self, rng):
        w = rng.normal(size=(6, 3))
        result = truncated_svd(w, 2)
        expected = np.linalg.svd(w, compute_uv=False)[:2]
        np.testing.assert_allclose(result.singular_values, expected, rtol=1e-9)

    def test_k_must_be_positive(self, rng):
        with pytest.raises(ContractViolation):
            truncated_svd(rng.normal(size=(2, 4)), 0)
