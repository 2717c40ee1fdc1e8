"""Tests for the replication harness, KS machinery, and the counterexample."""

import json
import math

import numpy as np
import pytest
import scipy.special
import scipy.stats

from smclimits import (
    DiscreteHMM,
    ExperimentConfig,
    ResamplingPolicy,
    TerminalFunction,
    clt_check,
    counterexample_run,
    ks_test,
    lln_check,
    normal_cdf,
    run_replicates,
    run_recursion,
    summarize_counterexample,
)
from smclimits.harness import aggregate_rows, kolmogorov_sf


def _normal_quantile(p):
    lo, hi = -10.0, 10.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if normal_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class TestNormalCdf:
    def test_against_scipy(self):
        for x in np.linspace(-6, 6, 101):
            assert normal_cdf(float(x)) == pytest.approx(
                float(scipy.stats.norm.cdf(x)), abs=1e-9
            )


class TestKolmogorovSf:
    def test_against_scipy(self):
        for t in (0.3, 0.5, 0.8, 1.0, 1.36, 2.0):
            assert kolmogorov_sf(t) == pytest.approx(
                float(scipy.special.kolmogorov(t)), abs=1e-10
            )

    def test_limits(self):
        assert kolmogorov_sf(1e-6) == pytest.approx(1.0, abs=1e-6)
        assert kolmogorov_sf(5.0) == pytest.approx(0.0, abs=1e-10)


class TestKsTest:
    def test_quantile_construction(self):
        n = 40
        values = [_normal_quantile((i - 0.5) / n) for i in range(1, n + 1)]
        d, _ = ks_test(values)
        assert d == pytest.approx(0.5 / n, abs=1e-9)

    def test_point_mass_at_zero(self):
        d, p = ks_test([0.0] * 25)
        assert d == pytest.approx(0.5, abs=1e-12)
        assert p < 1e-5

    def test_brute_force_sup_oracle(self, rng):
        for _ in range(100):
            n = int(rng.integers(10, 60))
            values = rng.normal(size=n) * rng.uniform(0.5, 2.0) + rng.uniform(-1, 1)
            d, _ = ks_test(values)
            # direct sup over sample points, left and right limits
            sup = 0.0
            sv = np.sort(values)
            for x in sv:
                cdf = normal_cdf(float(x))
                right = np.sum(sv <= x) / n
                left = np.sum(sv < x) / n
                sup = max(sup, abs(right - cdf), abs(left - cdf))
            assert d == pytest.approx(sup, abs=1e-12)

    def test_needs_ten_values(self):
        with pytest.raises(ValueError, match="at least 10"):
            ks_test([0.1] * 9)

    def test_standard_normal_sample_accepted(self):
        values = np.random.default_rng(42).standard_normal(400)
        _, p = ks_test(values)
        assert p > 0.01


@pytest.fixture(scope="module")
def tiny_config(bench_model):
    return ExperimentConfig(
        model=bench_model,
        proposal_kind="prior",
        policy=ResamplingPolicy(trigger="cv", kappa2=1.0),
        horizon=4,
        functions=(TerminalFunction(name="ind0", kind="indicator", state=0),),
        particle_counts=(32, 64),
        replicates=6,
        seed=2024,
    )


class TestRunReplicates:
    def test_single_row(self, bench_model):
        config = ExperimentConfig(
            model=bench_model,
            proposal_kind="prior",
            policy=ResamplingPolicy(trigger="always"),
            horizon=2,
            functions=(TerminalFunction(name="ind0", kind="indicator", state=0),),
            particle_counts=(1,),
            replicates=1,
            seed=0,
        )
        report = run_replicates(config)
        assert len(report.rows) == 1
        assert report.rows[0]["m"] == 1
        assert report.rows[0]["replicate"] == 0

    def test_row_and_aggregate_counts(self, tiny_config):
        report = run_replicates(tiny_config)
        assert len(report.rows) == 12
        assert [a["m"] for a in report.aggregates] == [32, 64]
        assert all(a["replicates"] == 6 for a in report.aggregates)

    def test_bit_reproducible(self, tiny_config):
        a = run_replicates(tiny_config)
        b = run_replicates(tiny_config)
        assert json.dumps(a.to_json_dict(), sort_keys=True) == json.dumps(
            b.to_json_dict(), sort_keys=True
        )
        assert a.csv_lines() == b.csv_lines()

    def test_workers_do_not_change_output(self, tiny_config):
        a = run_replicates(tiny_config, workers=1)
        b = run_replicates(tiny_config, workers=4)
        assert a.csv_lines() == b.csv_lines()
        assert json.dumps(a.to_json_dict(), sort_keys=True) == json.dumps(
            b.to_json_dict(), sort_keys=True
        )

    def test_aggregates_are_exchangeable(self, tiny_config):
        report = run_replicates(tiny_config)
        rng = np.random.default_rng(1)
        shuffled = list(report.rows)
        rng.shuffle(shuffled)
        redone = aggregate_rows(shuffled, tiny_config.functions)
        for a, b in zip(report.aggregates, redone):
            assert a["m"] == b["m"]
            assert a["rmse[ind0]"] == pytest.approx(b["rmse[ind0]"], rel=1e-12)
            assert a["decision_patterns"] == b["decision_patterns"]

    def test_config_hash_tracks_config(self, tiny_config, bench_model):
        other = ExperimentConfig(
            model=bench_model,
            proposal_kind=tiny_config.proposal_kind,
            policy=tiny_config.policy,
            horizon=tiny_config.horizon,
            functions=tiny_config.functions,
            particle_counts=tiny_config.particle_counts,
            replicates=tiny_config.replicates,
            seed=tiny_config.seed + 1,
        )
        assert tiny_config.config_hash() != other.config_hash()
        same = ExperimentConfig(**{
            "model": bench_model,
            "proposal_kind": tiny_config.proposal_kind,
            "policy": tiny_config.policy,
            "horizon": tiny_config.horizon,
            "functions": tiny_config.functions,
            "particle_counts": tiny_config.particle_counts,
            "replicates": tiny_config.replicates,
            "seed": tiny_config.seed,
        })
        assert tiny_config.config_hash() == same.config_hash()

    def test_flat_likelihood_estimates_are_unbiased(self):
        model = DiscreteHMM([0.3, 0.7], [[0.9, 0.1], [0.2, 0.8]], [[1.0, 1.0]] * 3)
        config = ExperimentConfig(
            model=model,
            proposal_kind="prior",
            policy=ResamplingPolicy(trigger="never"),
            horizon=3,
            functions=(TerminalFunction(name="ind0", kind="indicator", state=0),),
            particle_counts=(512,),
            replicates=200,
            seed=99,
        )
        report = run_replicates(config)
        errs = report.scaled_errors(512)
        assert abs(float(np.mean(errs))) < 4 * float(np.std(errs)) / math.sqrt(len(errs))

    def test_validation(self, bench_model):
        fn = (TerminalFunction(name="ind0", kind="indicator", state=0),)
        with pytest.raises(ValueError, match="strictly increasing"):
            ExperimentConfig(
                model=bench_model, proposal_kind="prior",
                policy=ResamplingPolicy(), horizon=2, functions=fn,
                particle_counts=(64, 64), replicates=2, seed=0,
            )
        with pytest.raises(ValueError, match="observation record"):
            ExperimentConfig(
                model=bench_model, proposal_kind="prior",
                policy=ResamplingPolicy(), horizon=9, functions=fn,
                particle_counts=(64,), replicates=2, seed=0,
            )


class TestLlnCheck:
    def test_grid_requirements(self, tiny_config):
        report = run_replicates(tiny_config)
        with pytest.raises(ValueError, match="4 particle counts"):
            lln_check(report)

    def test_constant_wrong_estimates_fail(self, bench_model):
        # negative control: overwrite every estimate with a fixed wrong value
        config = ExperimentConfig(
            model=bench_model,
            proposal_kind="prior",
            policy=ResamplingPolicy(trigger="cv", kappa2=0.0),
            horizon=3,
            functions=(TerminalFunction(name="ind0", kind="indicator", state=0),),
            particle_counts=(16, 64, 256, 1024),
            replicates=5,
            seed=5,
        )
        report = run_replicates(config)
        for row in report.rows:
            row["scaled_errors"]["ind0"] = math.sqrt(row["m"]) * 0.25
        check = lln_check(report)
        assert not check.slope_in_band
        assert not check.passed


@pytest.fixture(scope="module")
def clt_report_and_sigma(bench_model):
    config = ExperimentConfig(
        model=bench_model,
        proposal_kind="prior",
        policy=ResamplingPolicy(trigger="cv", kappa2=1.0),
        horizon=3,
        functions=(TerminalFunction(name="ind0", kind="indicator", state=0),),
        particle_counts=(1024,),
        replicates=250,
        seed=31,
    )
    report = run_replicates(config)
    state = run_recursion(bench_model, "prior", 1.0, horizon=3)
    return report, state.sigma2(np.array([1.0, 0.0]))


class TestCltCheck:
    def test_passes_with_oracle_variance(self, clt_report_and_sigma):
        report, sigma2 = clt_report_and_sigma
        check = clt_check(report, sigma2)
        assert check.passed

    def test_corrupted_oracle_fails(self, clt_report_and_sigma):
        # negative control: a four-fold variance corruption must be detected
        report, sigma2 = clt_report_and_sigma
        assert not clt_check(report, 4.0 * sigma2).passed

    def test_needs_replicates(self, tiny_config):
        report = run_replicates(tiny_config)
        with pytest.raises(ValueError, match="200"):
            clt_check(report, 1.0, m=32)

    def test_zero_variance_paths(self, clt_report_and_sigma):
        report, _ = clt_report_and_sigma
        with pytest.raises(ValueError, match="zero-variance"):
            clt_check(report, 0.0)


class TestCounterexample:
    def test_two_atoms_emerge(self):
        result = counterexample_run(20_000, 200, 7)
        stats = summarize_counterexample(result.values)
        assert stats["mass_at_low_atom"] >= 0.3
        assert stats["mass_at_high_atom"] >= 0.3
        assert stats["max_window_mass"] < 0.9

    def test_average_weight_tends_to_one(self):
        result = counterexample_run(20_000, 100, 13)
        assert float(np.mean(result.mean_weights)) == pytest.approx(1.0, abs=0.005)

    def test_deterministic(self):
        a = counterexample_run(5_000, 20, 3)
        b = counterexample_run(5_000, 20, 3)
        assert np.array_equal(a.values, b.values)
