import json

import numpy as np
import pytest

from latcount_model import MarginalSpec, VarModel, link_context


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


@pytest.fixture
def random_spec(rng):
    """Draws marginals from all six families with means (lambda, Np) at most 5."""

    def draw(family=None):
        family = family or rng.choice(
            ["bernoulli", "binomial", "poisson", "negbinomial", "mixture_poisson", "cmp"]
        )
        if family == "bernoulli":
            return MarginalSpec.bernoulli(rng.uniform(0.1, 0.9))
        if family == "binomial":
            n_trials = int(rng.integers(1, 7))
            return MarginalSpec.binomial(n_trials, rng.uniform(0.1, min(0.9, 5.0 / n_trials)))
        if family == "poisson":
            return MarginalSpec.poisson(rng.uniform(0.3, 5.0))
        if family == "negbinomial":
            return MarginalSpec.negbinomial(int(rng.integers(1, 5)), rng.uniform(0.5, 0.9))
        if family == "mixture_poisson":
            w = rng.uniform(0.2, 0.8)
            return MarginalSpec.mixture_poisson([w, 1.0 - w], rng.uniform(0.3, 5.0, size=2))
        return MarginalSpec.cmp(rng.uniform(0.5, 3.0), rng.uniform(0.8, 2.0))

    return draw


@pytest.fixture
def bern_half():
    return MarginalSpec.bernoulli(0.5)


@pytest.fixture
def bern_pair(bern_half):
    return link_context(bern_half, bern_half)


@pytest.fixture
def cross_lag_model():
    """Z1_t = 0.5 Z2_{t-1} + e1, Z2 white: unit variances and Gamma_12(1) = 0.5."""
    coeffs = np.array([[[0.0, 0.5], [0.0, 0.0]]])
    return VarModel(coeffs=coeffs, noise_cov=np.diag([0.75, 1.0]))


@pytest.fixture
def small_config_dict():
    return {
        "model": {"d": 2, "p": 1, "pattern": "diagonal", "magnitude": 0.4},
        "marginals": [{"family": "bernoulli", "p": 0.5}],
        "n_grid": [200, 400],
        "replicates": 2,
        "master_seed": 7,
        "lambda_grid": [0.0, 0.05],
    }


@pytest.fixture
def config_file(tmp_path, small_config_dict):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(small_config_dict), encoding="utf-8")
    return path
