import logging

import numpy as np
import pytest

from latcount_core.errors import DegenerateMarginalError, DimensionMismatchError
from latcount_estimation.acvf import BlockAcvf
from latcount_estimation.latent_estimator import (
    DiagMode,
    LatentEstimate,
    estimate_latent_acvf,
    recovery_error,
)
from latcount_model.link import link_context, link_invert
from latcount_model.var_model import simulate, standardize, transform_counts


@pytest.fixture(scope="module")
def bernoulli_counts():
    from latcount_model.marginals import MarginalSpec
    from latcount_model.var_model import VarModel

    model = VarModel(
        coeffs=np.array([[[0.0, 0.5], [0.0, 0.0]]]), noise_cov=np.diag([0.75, 1.0])
    )
    spec = MarginalSpec.bernoulli(0.5)
    X = transform_counts(simulate(model, 100000, seed=21), [spec, spec])
    return X, [spec, spec]


def _estimate_from_truth(truth, L):
    acvf = BlockAcvf.from_lags(truth.lags, L)
    return LatentEstimate(
        acvf_hat=acvf,
        theta_hats=[],
        diag_mode=DiagMode.FORCE_ONE,
        clamp_hits=0,
        diag_clamp_hits=0,
        acvf_x=acvf,
        clipped=[],
    )


class TestEstimateLatentAcvf:
    def test_recovers_cross_lag(self, bernoulli_counts):
        X, _ = bernoulli_counts
        est = estimate_latent_acvf(X, 1, families=["bernoulli", "bernoulli"])
        lags = est.acvf_hat.lag_blocks()
        assert lags[1, 0, 1] == pytest.approx(0.5, abs=0.05)
        assert abs(lags[1, 1, 0]) < 0.05
        assert abs(lags[0, 0, 1]) < 0.05

    def test_force_one_diagonal(self, bernoulli_counts):
        X, _ = bernoulli_counts
        est = estimate_latent_acvf(X, 2, families=["bernoulli"] * 2, diag_mode="force_one")
        np.testing.assert_array_equal(np.diag(est.acvf_hat.big), 1.0)
        assert est.diag_mode is DiagMode.FORCE_ONE
        assert est.diag_clamp_hits == 0

    def test_entries_within_clamp(self, bernoulli_counts):
        X, _ = bernoulli_counts
        est = estimate_latent_acvf(X[:500], 2, families=["bernoulli"] * 2)
        big = est.acvf_hat.big
        off = big[~np.eye(len(big), dtype=bool)]
        assert np.all(np.abs(off) <= 1.0 - 1e-6)
        assert np.all((np.diag(big) >= 0.0) & (np.diag(big) <= 1.0))
        np.testing.assert_array_equal(big, big.T)

    def test_sign_preserved(self, bernoulli_counts):
        X, _ = bernoulli_counts
        est = estimate_latent_acvf(X[:2000], 1, families=["bernoulli"] * 2)
        x_vals = est.acvf_x.gamma_vec
        z_vals = est.acvf_hat.gamma_vec
        mask = x_vals != 0.0
        np.testing.assert_array_equal(np.sign(z_vals[mask]), np.sign(x_vals[mask]))

    def test_plug_in_specs(self, bernoulli_counts):
        X, specs = bernoulli_counts
        est = estimate_latent_acvf(X[:3000], 1, specs=specs)
        ctx = link_context(specs[0], specs[1])
        expected = link_invert(ctx, float(est.acvf_x.gamma_vec[1, 0]))
        assert est.acvf_hat.gamma_vec[1, 0] == pytest.approx(expected, abs=1e-14)
        assert est.theta_hats == specs

    def test_saturated_diagonal_logs_at_debug(self, bernoulli_counts, caplog):
        from latcount_model.marginals import MarginalSpec

        X, _ = bernoulli_counts
        # sample variance near 0.25 exceeds the Bernoulli(0.2) variance, so every
        # lag-0 diagonal entry lands on the unit boundary
        specs = [MarginalSpec.bernoulli(0.2)] * 2
        with caplog.at_level(logging.DEBUG, logger="latcount_estimation.latent_estimator"):
            est = estimate_latent_acvf(X[:2000], 2, specs=specs)
        assert est.diag_clamp_hits == 4
        assert est.clamp_hits == 0
        np.testing.assert_array_equal(np.diag(est.acvf_hat.big), 1.0)
        assert not [r for r in caplog.records if r.levelno >= logging.WARNING]
        assert any("unit boundary" in r.getMessage() for r in caplog.records)

    def test_fitted_parameters(self, bernoulli_counts):
        X, _ = bernoulli_counts
        est = estimate_latent_acvf(X, 1, families=["bernoulli"] * 2)
        for spec in est.theta_hats:
            assert spec.p == pytest.approx(0.5, abs=0.01)
        assert est.clipped == [False, False]

    def test_threads_do_not_change_result(self, bernoulli_counts):
        X, _ = bernoulli_counts
        one = estimate_latent_acvf(X[:1000], 2, families=["bernoulli"] * 2)
        many = estimate_latent_acvf(X[:1000], 2, families=["bernoulli"] * 2, max_workers=4)
        np.testing.assert_array_equal(one.acvf_hat.big, many.acvf_hat.big)
        np.testing.assert_array_equal(one.acvf_hat.gamma_vec, many.acvf_hat.gamma_vec)

    def test_constant_column(self):
        X = np.column_stack([np.zeros(50, dtype=int), np.arange(50) % 3])
        with pytest.raises(DegenerateMarginalError):
            estimate_latent_acvf(X, 1, families=["poisson", "poisson"])

    def test_family_count(self, bernoulli_counts):
        X, _ = bernoulli_counts
        with pytest.raises(DimensionMismatchError):
            estimate_latent_acvf(X[:100], 1, families=["bernoulli"])


class TestRecoveryError:
    def test_zero_for_truth(self, cross_lag_model):
        truth = standardize(cross_lag_model, 2).acvf
        err = recovery_error(_estimate_from_truth(truth, 2), truth, s=1)
        assert err.max_norm == pytest.approx(0.0, abs=1e-15)
        assert err.frobenius == pytest.approx(0.0, abs=1e-15)
        assert err.sparse_exact

    def test_single_perturbation(self, cross_lag_model):
        truth = standardize(cross_lag_model, 1).acvf
        est = _estimate_from_truth(truth, 1)
        est.acvf_hat.gamma_vec[0, 1] += 0.01
        err = recovery_error(est, truth, s=1)
        assert err.max_norm == pytest.approx(0.01, rel=1e-10)
        assert err.sparse_norm_err == pytest.approx(0.01, rel=1e-10)
        assert err.frobenius == pytest.approx(0.01 * np.sqrt(2.0), rel=1e-10)

    def test_too_few_true_lags(self, cross_lag_model):
        truth = standardize(cross_lag_model, 1).acvf
        est = _estimate_from_truth(standardize(cross_lag_model, 2).acvf, 2)
        with pytest.raises(DimensionMismatchError):
            recovery_error(est, truth, s=1)
