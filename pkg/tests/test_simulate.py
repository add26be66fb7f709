import numpy as np
import pytest

from panelmean import (
    GenReport,
    SimConfig,
    StudyError,
    fit,
    gen_bivpois,
    gen_dataset,
    gen_schedule,
    resolve_baseline,
    run_study,
)
from conftest import table1_config


class TestResolveBaseline:
    def test_named_linear_forms(self):
        t = np.array([0.0, 1.0, 4.0])
        np.testing.assert_allclose(resolve_baseline("t")(t), t)
        np.testing.assert_allclose(resolve_baseline("2t")(t), 2 * t)
        np.testing.assert_allclose(resolve_baseline("0.5t")(t), 0.5 * t)
        np.testing.assert_allclose(resolve_baseline("2*t")(t), 2 * t)

    def test_callable_passthrough(self):
        fn = lambda t: np.sqrt(t)
        assert resolve_baseline(fn) is fn

    def test_unknown_name_rejected(self):
        with pytest.raises(ValueError, match="baseline"):
            resolve_baseline("exp(t)")


class TestGenSchedule:
    def test_visit_count_frequencies(self):
        rng = np.random.default_rng(61)
        draws = np.array([gen_schedule(rng)[0] for _ in range(100_000)])
        for m in range(1, 6):
            assert abs(np.mean(draws == m) - 0.2) <= 0.01

    def test_support_and_monotonicity(self):
        rng = np.random.default_rng(62)
        for _ in range(2000):
            m, times = gen_schedule(rng)
            assert 1 <= m <= 5 and times.size == m
            assert times[0] >= 1.0
            assert times[-1] <= 25.0
            assert np.all(np.diff(times) > 0)


class TestGenBivpois:
    def test_independent_when_rho_zero(self):
        rng = np.random.default_rng(63)
        draws = np.array([gen_bivpois(1.0, 1.0, 0.0, rng) for _ in range(100_000)])
        cov = np.cov(draws.T, ddof=1)[0, 1]
        assert abs(cov) <= 0.02

    def test_moments_match_construction(self):
        rng = np.random.default_rng(64)
        draws = np.array([gen_bivpois(2.0, 3.0, 0.5, rng) for _ in range(100_000)])
        assert abs(draws[:, 0].mean() - 2.0) <= 0.03
        assert abs(draws[:, 1].mean() - 3.0) <= 0.03
        cov = np.cov(draws.T, ddof=1)[0, 1]
        assert abs(cov - 0.5) <= 0.05

    def test_maximal_common_shock_keeps_marginal_means(self):
        rng = np.random.default_rng(65)
        draws = np.array([gen_bivpois(1.5, 4.0, 1.5, rng) for _ in range(100_000)])
        se1 = np.sqrt(1.5 / 100_000)
        se2 = np.sqrt(4.0 / 100_000)
        assert abs(draws[:, 0].mean() - 1.5) <= 3 * se1
        assert abs(draws[:, 1].mean() - 4.0) <= 3 * se2

    def test_negative_rate_rejected(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError, match="negative|non-negative"):
            gen_bivpois(-1.0, 1.0, 0.0, rng)
        with pytest.raises(ValueError, match="rho"):
            gen_bivpois(1.0, 1.0, -0.5, rng)


class TestGenDataset:
    def test_zero_beta_identity_baseline_mean_ratio(self):
        cfg = SimConfig(
            n=10_000, beta1=(0.0, 0.0), beta2=(0.0, 0.0),
            baseline1="t", baseline2="t", replications=1, seed=0,
        )
        data = gen_dataset(cfg, np.random.default_rng(66))
        counts = np.concatenate([s.counts[0] for s in data.subjects])
        times = np.concatenate([s.times for s in data.subjects])
        assert abs(np.mean(counts / times) - 1.0) <= 0.05

    def test_increment_means_scale_with_covariates(self):
        # degenerate covariates (z fixed at (1, 0)) isolate the rate scaling
        cfg = SimConfig(
            n=4000, beta1=(0.7, 0.0), beta2=(-0.3, 0.0),
            baseline1="t", baseline2="2t", rho=0.3,
            bernoulli_p=1.0, normal_sd=0.0, replications=1, seed=0,
        )
        data = gen_dataset(cfg, np.random.default_rng(67))
        for cause, slope, beta in ((1, 1.0, 0.7), (2, 2.0, -0.3)):
            total = 0.0
            expected = 0.0
            for s in data.subjects:
                total += s.counts[cause - 1][-1]
                expected += slope * s.times[-1] * np.exp(beta)
            assert abs(total - expected) <= 3 * np.sqrt(expected)

    def test_increment_covariance_matches_rho(self):
        # degenerate gaps and covariates make every increment pair iid
        # BivPo(2, 4, rho), so the pooled covariance estimates rho
        rho = 0.5
        cfg = SimConfig(
            n=20_000, beta1=(0.0, 0.0), beta2=(0.0, 0.0),
            baseline1="t", baseline2="2t", rho=rho,
            gap_range=(2.0, 2.0), bernoulli_p=1.0, normal_sd=0.0,
            replications=1, seed=0,
        )
        data = gen_dataset(cfg, np.random.default_rng(69))
        inc1 = np.concatenate([np.diff(s.counts[0], prepend=0) for s in data.subjects])
        inc2 = np.concatenate([np.diff(s.counts[1], prepend=0) for s in data.subjects])
        prod = (inc1 - inc1.mean()) * (inc2 - inc2.mean())
        se = prod.std(ddof=1) / np.sqrt(prod.size)
        assert abs(prod.mean() - rho) <= 3 * se

    def test_counts_non_decreasing(self):
        cfg = table1_config(n=300)
        data = gen_dataset(cfg, np.random.default_rng(68))
        for s in data.subjects:
            assert np.all(np.diff(s.counts, axis=1) >= 0)

    def test_seed_determinism(self):
        cfg = table1_config(n=60)
        a = gen_dataset(cfg, np.random.default_rng([9, 9]))
        b = gen_dataset(cfg, np.random.default_rng([9, 9]))
        for sa, sb in zip(a.subjects, b.subjects):
            np.testing.assert_array_equal(sa.times, sb.times)
            np.testing.assert_array_equal(sa.counts, sb.counts)
            np.testing.assert_array_equal(sa.covariates, sb.covariates)

    def test_clamp_counter_reports_rho_truncation(self):
        # rates below rho are common with a tiny baseline slope
        cfg = SimConfig(
            n=200, beta1=(0.0, 0.0), beta2=(0.0, 0.0),
            baseline1="0.01t", baseline2="0.01t", rho=0.5,
            replications=1, seed=0,
        )
        report = GenReport()
        gen_dataset(cfg, np.random.default_rng(70), report)
        assert report.rho_clamps > 0


class TestRunStudy:
    def test_single_replication_bias_is_single_fit_error(self):
        cfg = table1_config(n=60, replications=1, seed=5)
        result = run_study(cfg)
        data = gen_dataset(cfg, np.random.default_rng([5, 0]))
        fits = fit(data)
        expected = np.abs(
            np.array([fits[0].beta, fits[1].beta]) - np.array([cfg.beta1, cfg.beta2])
        )
        np.testing.assert_allclose(result.bias, expected, atol=1e-12)
        np.testing.assert_allclose(result.mse, expected**2, atol=1e-12)

    def test_mse_dominates_squared_bias(self):
        cfg = table1_config(n=40, replications=20, seed=6)
        result = run_study(cfg)
        assert np.all(result.mse >= result.bias**2 - 1e-12)
        assert result.replications_used == 20
        assert result.failures == 0

    def test_seed_reproducibility(self):
        cfg = table1_config(n=40, replications=8, seed=7)
        a = run_study(cfg)
        b = run_study(cfg)
        np.testing.assert_array_equal(a.bias, b.bias)
        np.testing.assert_array_equal(a.mse, b.mse)

    def test_excess_failures_abort(self):
        # n=2 with a binary covariate: both subjects often share z1, making
        # the two-covariate profile singular
        cfg = table1_config(n=2, replications=20, seed=8)
        with pytest.raises(StudyError, match="failed"):
            run_study(cfg)

    def test_table_row_order(self):
        cfg = table1_config(n=50, replications=3, seed=9)
        result = run_study(cfg)
        row = result.table_row()
        assert row[0] == result.bias[0, 0] and row[3] == result.mse[0, 1]
        assert row[4] == result.bias[1, 0] and row[7] == result.mse[1, 1]
