import itertools

import numpy as np
import pytest

from latcount_core.errors import (
    BudgetError,
    DimensionMismatchError,
    DomainError,
    InsufficientDataError,
)
from latcount_estimation.acvf import (
    BlockAcvf,
    block_toeplitz,
    sample_block_acvf,
    sparse_norm,
    theoretical_count_acvf,
)
from latcount_model.marginals import MarginalSpec
from latcount_model.var_model import LatentAcvf, standardize


def brute_sparse_norm(A, s):
    dim = A.shape[0]
    best = 0.0
    for k in range(1, min(2 * s, dim) + 1):
        for support in itertools.combinations(range(dim), k):
            idx = np.array(support)
            best = max(best, np.max(np.abs(np.linalg.eigvalsh(A[np.ix_(idx, idx)]))))
    return best


def random_symmetric(rng, dim):
    A = rng.standard_normal((dim, dim))
    return 0.5 * (A + A.T)


class TestSampleBlockAcvf:
    def test_hand_computed(self):
        acvf = sample_block_acvf(np.array([1.0, 2.0, 3.0, 4.0]), 1)
        assert acvf.big[0, 0] == pytest.approx(2.75 / 3.0, rel=1e-14)
        assert acvf.gamma_vec[0, 0] == pytest.approx(1.25 / 3.0, rel=1e-14)

    def test_constant_series(self):
        acvf = sample_block_acvf(np.full((20, 2), 3.0), 2)
        np.testing.assert_array_equal(acvf.big, 0.0)
        np.testing.assert_array_equal(acvf.gamma_vec, 0.0)

    def test_shapes_and_symmetry(self, rng):
        acvf = sample_block_acvf(rng.poisson(2.0, size=(300, 3)), 2)
        assert acvf.big.shape == (6, 6)
        assert acvf.gamma_vec.shape == (6, 3)
        np.testing.assert_array_equal(acvf.big, acvf.big.T)
        np.testing.assert_array_equal(acvf.block(1, 2), acvf.block(2, 1).T)

    def test_white_noise(self, rng):
        X = rng.poisson(3.0, size=(100000, 1)).astype(float)
        acvf = sample_block_acvf(X, 2)
        assert acvf.big[0, 0] == pytest.approx(np.var(X), rel=0.05)
        bound = 4.0 * np.var(X) / np.sqrt(len(X))
        assert abs(acvf.gamma_vec[0, 0]) < bound
        assert abs(acvf.big[0, 1]) < bound

    def test_insufficient_data(self):
        with pytest.raises(InsufficientDataError):
            sample_block_acvf(np.ones((2, 1)), 2)
        with pytest.raises(DomainError):
            sample_block_acvf(np.ones((5, 1)), 0)


class TestBlockForms:
    def test_block_toeplitz(self):
        lags = np.array([[[1.0, 0.2], [0.2, 1.0]], [[0.5, 0.1], [0.3, 0.4]]])
        big = block_toeplitz(lags, 2)
        np.testing.assert_array_equal(big[0:2, 2:4], lags[1])
        np.testing.assert_array_equal(big[2:4, 0:2], lags[1].T)
        with pytest.raises(DimensionMismatchError):
            block_toeplitz(lags, 3)

    def test_from_lags_round_trip(self):
        lags = np.array([[[1.0, 0.2], [0.2, 1.0]], [[0.5, 0.1], [0.3, 0.4]]])
        acvf = BlockAcvf.from_lags(lags, 1)
        np.testing.assert_array_equal(acvf.lag_blocks(), lags)

    def test_frame_matrix_matches_population_block(self, cross_lag_model):
        truth = standardize(cross_lag_model, 2).acvf
        acvf = BlockAcvf.from_lags(truth.lags, 2)
        np.testing.assert_allclose(acvf.frame_matrix(), truth.to_block(3), atol=1e-15)


class TestTheoreticalCountAcvf:
    def test_bernoulli_half(self, bern_half):
        lags = np.zeros((2, 2, 2))
        lags[0] = np.eye(2)
        lags[1, 0, 1] = 0.5
        acvf = theoretical_count_acvf(LatentAcvf(lags=lags, standardized=True), [bern_half] * 2)
        got = acvf.lag_blocks()
        np.testing.assert_allclose(got[0], 0.25 * np.eye(2), atol=1e-12)
        assert got[1, 0, 1] == pytest.approx(1.0 / 12.0, abs=1e-10)
        assert got[1, 1, 0] == 0.0

    def test_requires_standardized(self, bern_half):
        lags = np.stack([np.eye(1), 0.5 * np.eye(1)])
        with pytest.raises(DomainError):
            theoretical_count_acvf(LatentAcvf(lags=lags), [bern_half])

    def test_marginal_count(self, bern_half):
        lags = np.stack([np.eye(2), np.zeros((2, 2))])
        with pytest.raises(DimensionMismatchError):
            theoretical_count_acvf(LatentAcvf(lags=lags, standardized=True), [bern_half])

    def test_sample_converges(self, cross_lag_model, bern_half):
        from latcount_model.var_model import simulate, transform_counts

        std = standardize(cross_lag_model, 1)
        theory = theoretical_count_acvf(std.acvf, [bern_half] * 2)
        X = transform_counts(simulate(std.model, 100000, seed=5), [bern_half] * 2)
        sample = sample_block_acvf(X, 1)
        assert theory.lag_blocks()[1, 0, 1] == pytest.approx(1.0 / 12.0, abs=1e-8)
        assert sample.lag_blocks()[1, 0, 1] == pytest.approx(1.0 / 12.0, abs=0.005)
        np.testing.assert_allclose(sample.lag_blocks(), theory.lag_blocks(), atol=0.01)


class TestSparseNorm:
    def test_diagonal(self):
        assert sparse_norm(np.diag([1.0, -2.0, 3.0]), 1).value == pytest.approx(3.0)

    def test_full_support_is_spectral_norm(self, rng):
        A = random_symmetric(rng, 4)
        expected = np.max(np.abs(np.linalg.eigvalsh(A)))
        assert sparse_norm(A, 2).value == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("s", [1, 2])
    def test_matches_brute_force(self, rng, s):
        for _ in range(200):
            A = random_symmetric(rng, 8)
            result = sparse_norm(A, s, mode="exact")
            assert not result.lower_bound
            assert result.value == pytest.approx(brute_sparse_norm(A, s), abs=1e-10)
            assert sparse_norm(A, s, mode="heuristic").value <= result.value + 1e-12

    @pytest.mark.parametrize("s", [1, 2])
    def test_unit_diagonal_hadamard_product(self, rng, s):
        for _ in range(50):
            G = rng.standard_normal((8, 8))
            S = G @ G.T
            scale = 1.0 / np.sqrt(np.diag(S))
            A = S * np.outer(scale, scale)
            B = random_symmetric(rng, 8)
            lhs = sparse_norm(A * B, s, mode="exact").value
            rhs = np.max(np.abs(np.diag(A))) * sparse_norm(B, s, mode="exact").value
            assert lhs <= rhs + 1e-12

    def test_heuristic_is_lower_bound(self, rng):
        A = random_symmetric(rng, 10)
        exact = sparse_norm(A, 2, mode="exact").value
        heuristic = sparse_norm(A, 2, mode="heuristic")
        assert heuristic.lower_bound
        assert heuristic.value <= exact + 1e-12
        assert heuristic.value >= np.max(np.abs(np.diag(A))) - 1e-12

    def test_monotone_in_s(self, rng):
        A = random_symmetric(rng, 7)
        values = [sparse_norm(A, s).value for s in (1, 2, 3)]
        assert values[0] <= values[1] + 1e-12
        assert values[1] <= values[2] + 1e-12

    def test_bounded_by_max_entry(self, rng):
        A = random_symmetric(rng, 6)
        for s in (1, 2):
            assert sparse_norm(A, s).value <= 2 * s * np.max(np.abs(A)) + 1e-12

    def test_budget(self, rng):
        with pytest.raises(BudgetError):
            sparse_norm(random_symmetric(rng, 10), 2, mode="exact", budget=10)
        assert sparse_norm(random_symmetric(rng, 10), 2, mode="auto", budget=10).lower_bound

    def test_complex_hermitian(self):
        A = np.array([[1.0, 1j], [-1j, 1.0]])
        assert sparse_norm(A, 1).value == pytest.approx(2.0)
        with pytest.raises(DomainError):
            sparse_norm(A, 1, mode="heuristic")

    def test_bad_input(self):
        with pytest.raises(DimensionMismatchError):
            sparse_norm(np.ones((2, 3)), 1)
        with pytest.raises(DomainError):
            sparse_norm(np.eye(3), 0)
