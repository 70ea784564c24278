import math

import numpy as np
import pytest

from latcount_core.errors import ConfigError, DomainError, RateFitError
from latcount_harness import csv_io
from latcount_harness.experiment import (
    ExperimentRunner,
    build_model,
    fit_log_log,
    rate_fit,
    replay_cell,
    run_experiment,
    summarize,
)
from latcount_harness.schemas import parse_config, parse_marginal
from latcount_model.marginals import Family, MarginalSpec


class TestConfig:
    def test_defaults(self, small_config_dict):
        config = parse_config(small_config_dict)
        assert config.lags == 1
        assert config.specs == [MarginalSpec.bernoulli(0.5)] * 2
        assert config.families == [Family.BERNOULLI, Family.BERNOULLI]

    @pytest.mark.parametrize(
        "update",
        [
            {"n_grid": [400, 200]},
            {"n_grid": [200, 200]},
            {"marginals": [{"family": "poisson", "lambda": 1.0}] * 3},
            {"L": 0},
            {"lambda_grid": []},
            {"lambda_grid": [-0.1]},
            {"norm_mode": "fast"},
            {"marginals": [{"family": "cmp", "lambda": 2.0, "nu": 1.5}]},
            {"model": {"d": 2, "p": 1, "pattern": "sparse_random", "sparsity": 5}},
            {"model": {"d": 2, "p": 1, "pattern": "explicit"}},
        ],
    )
    def test_rejected(self, small_config_dict, update):
        with pytest.raises(ConfigError):
            parse_config({**small_config_dict, **update})

    def test_unfittable_with_plug_in(self, small_config_dict):
        raw = {
            **small_config_dict,
            "marginals": [{"family": "cmp", "lambda": 2.0, "nu": 1.5}],
            "plug_in_truth": True,
        }
        assert parse_config(raw).plug_in_truth

    def test_hash_ignores_threads_and_outputs(self, small_config_dict):
        base = parse_config(small_config_dict).config_hash()
        other = parse_config(
            {**small_config_dict, "threads": 8, "output": {"results": "x.csv"}}
        ).config_hash()
        changed = parse_config({**small_config_dict, "master_seed": 8}).config_hash()
        assert base == other
        assert base != changed
        assert len(base) == 16

    def test_parse_marginal(self):
        assert parse_marginal("poisson:lambda=2") == MarginalSpec.poisson(2.0)
        assert parse_marginal("binomial:n_trials=5,p=0.3") == MarginalSpec.binomial(5, 0.3)
        mixture = parse_marginal("mixture_poisson:weights=0.3|0.7,lambdas=1|4")
        assert mixture == MarginalSpec.mixture_poisson([0.3, 0.7], [1.0, 4.0])
        with pytest.raises(ConfigError):
            parse_marginal("poisson:lambda")
        with pytest.raises(ConfigError):
            parse_marginal("poisson:lambda=-1")


class TestBuildModel:
    def test_sparse_random(self, small_config_dict):
        raw = {
            **small_config_dict,
            "model": {"d": 3, "p": 2, "pattern": "sparse_random", "sparsity": 4, "magnitude": 0.2},
        }
        config = parse_config(raw)
        model = build_model(config.model, config.master_seed)
        assert np.count_nonzero(model.coeffs) == 4
        np.testing.assert_allclose(np.abs(model.coeffs[model.coeffs != 0]), 0.2)
        again = build_model(config.model, config.master_seed)
        np.testing.assert_array_equal(model.coeffs, again.coeffs)

    def test_non_causal(self, small_config_dict):
        raw = {**small_config_dict, "model": {"d": 2, "p": 1, "magnitude": 1.2}}
        config = parse_config(raw)
        with pytest.raises(ConfigError):
            build_model(config.model, config.master_seed)


class TestRateFit:
    def test_root_n(self):
        ns = [500, 1000, 2000, 4000, 8000]
        assert fit_log_log(ns, [3.0 / math.sqrt(n) for n in ns]).slope == pytest.approx(-0.5, abs=1e-12)
        assert fit_log_log(ns, [3.0 / n for n in ns]).slope == pytest.approx(-1.0, abs=1e-12)

    def test_errors(self):
        with pytest.raises(RateFitError):
            fit_log_log([100, 200], [0.1, 0.05])
        with pytest.raises(RateFitError):
            fit_log_log([100, 200, 400], [0.1, 0.0, 0.05])


class TestExperiment:
    def test_row_count_and_columns(self, small_config_dict):
        result = run_experiment(parse_config(small_config_dict), threads=1)
        assert len(result.rows) == 2 * 2 * 2
        assert not result.failures
        assert set(result.rows[0]) <= set(csv_io.RESULT_COLUMNS)
        keys = [(r["n"], r["replicate"], r["lambda_index"]) for r in result.rows]
        assert keys == sorted(keys)
        assert all(r["T"] == r["n"] + 1 for r in result.rows)

    def test_thread_count_does_not_change_output(self, small_config_dict):
        config = parse_config(small_config_dict)
        one = run_experiment(config, threads=1)
        four = run_experiment(config, threads=4)
        assert csv_io.rows_to_text(csv_io.RESULT_COLUMNS, one.rows) == csv_io.rows_to_text(
            csv_io.RESULT_COLUMNS, four.rows
        )

    def test_replay_matches_full_run(self, small_config_dict):
        config = parse_config(small_config_dict)
        full = run_experiment(config, threads=2)
        cell = replay_cell(config, 400, 1)
        expected = [r for r in full.rows if r["n"] == 400 and r["replicate"] == 1]
        assert csv_io.rows_to_text(csv_io.RESULT_COLUMNS, cell) == csv_io.rows_to_text(
            csv_io.RESULT_COLUMNS, expected
        )
        with pytest.raises(DomainError):
            replay_cell(config, 300, 0)

    def test_failed_cells_are_recorded(self, small_config_dict):
        raw = {
            **small_config_dict,
            "marginals": [{"family": "bernoulli", "p": 1e-6}],
            "n_grid": [10],
        }
        result = run_experiment(parse_config(raw), threads=1)
        assert len(result.rows) == 2 * 2
        assert len(result.failures) == 2
        assert all("DegenerateMarginalError" in r["error"] for r in result.rows)
        assert all(math.isnan(r["latent_max_err"]) for r in result.rows)

    def test_summary(self, small_config_dict):
        result = run_experiment(parse_config(small_config_dict), threads=1)
        rows = [s for s in result.summary if s["metric"] == "latent_max_err"]
        assert len(rows) == 2 * 2
        assert all(s["count"] == 2 for s in rows)
        assert all(s["q25"] <= s["median"] <= s["q75"] for s in rows)
        assert summarize(result.rows) == result.summary

    def test_constants(self, small_config_dict):
        raw = {**small_config_dict, "constants": {"enabled": True}}
        runner = ExperimentRunner(parse_config(raw), threads=1)
        rows = runner.constants()
        assert [r["n"] for r in rows] == [200, 400]
        assert rows[0]["q_const"] == rows[1]["q_const"]
        assert rows[0]["lambda_threshold"] > rows[1]["lambda_threshold"]

    def test_plug_in_truth(self, small_config_dict):
        raw = {**small_config_dict, "plug_in_truth": True, "diag_mode": "force_one"}
        result = run_experiment(parse_config(raw), threads=1)
        assert not result.failures


@pytest.mark.slow
class TestConvergence:
    def test_latent_error_shrinks(self):
        raw = {
            "model": {"d": 2, "p": 1, "pattern": "diagonal", "magnitude": 0.5},
            "marginals": [{"family": "poisson", "lambda": 2.0}],
            "n_grid": [500, 8000],
            "replicates": 10,
            "master_seed": 3,
            "lambda_grid": [0.0],
        }
        result = run_experiment(parse_config(raw), threads=4)
        medians = {
            s["n"]: s["median"] for s in result.summary if s["metric"] == "latent_max_err"
        }
        assert medians[8000] < medians[500]

    def test_root_n_rate(self):
        raw = {
            "model": {"d": 5, "p": 1, "pattern": "sparse_random", "sparsity": 5, "magnitude": 0.3},
            "marginals": [{"family": "bernoulli", "p": p} for p in (0.4, 0.45, 0.5, 0.55, 0.6)],
            "n_grid": [500, 1000, 2000, 4000, 8000],
            "replicates": 50,
            "master_seed": 11,
            "lambda_grid": [0.0],
        }
        result = run_experiment(parse_config(raw), threads=8)
        assert not result.failures
        fit = rate_fit(result)
        assert -0.7 <= fit.slope <= -0.3
        medians = {
            s["n"]: s["median"] for s in result.summary if s["metric"] == "latent_max_err"
        }
        assert medians[8000] < medians[500]

    def test_support_recovery(self):
        raw = {
            "model": {"d": 10, "p": 1, "pattern": "sparse_random", "sparsity": 6, "magnitude": 0.3},
            "marginals": [{"family": "bernoulli", "p": 0.5}],
            "n_grid": [4000],
            "replicates": 20,
            "master_seed": 5,
            "diag_mode": "force_one",
        }
        result = run_experiment(parse_config(raw), threads=4)
        best = {}
        for row in result.rows:
            if not row["error"]:
                key = row["replicate"]
                best[key] = max(best.get(key, 0.0), row["f1"])
        assert sum(v >= 0.8 for v in best.values()) >= 0.8 * len(best)
