import numpy as np
import pytest

from panelmean import (
    CauseFit,
    InferenceError,
    NumericError,
    PanelDataset,
    Subject,
    bootstrap_se,
    fit,
    gen_dataset,
    sandwich_se,
)
from conftest import table1_config


def check_cov(result):
    cov = result.cov
    assert np.max(np.abs(cov - cov.T)) <= 1e-12
    assert np.min(np.linalg.eigvalsh((cov + cov.T) / 2)) >= -1e-10
    np.testing.assert_allclose(result.se, np.sqrt(np.diag(cov)))
    assert np.all((result.wald_p >= 0) & (result.wald_p <= 1))


class TestBootstrap:
    def test_identical_subjects_have_zero_se(self):
        proto = Subject("a", [1.0, 3.0], [[1, 2]], [1.0])
        subjects = [
            Subject(str(i), proto.times, proto.counts, proto.covariates)
            for i in range(15)
        ]
        data = PanelDataset(subjects, k=1, d=1)
        res = bootstrap_se(data, B=25, seed=1)[0]
        np.testing.assert_array_equal(res.se, [0.0])
        assert res.replicates == 25 and res.failures == 0
        check_cov(res)

    def test_seed_determinism(self, table1_dataset_n100):
        a = bootstrap_se(table1_dataset_n100, B=20, seed=6)
        b = bootstrap_se(table1_dataset_n100, B=20, seed=6)
        c = bootstrap_se(table1_dataset_n100, B=20, seed=7)
        for ra, rb, rc in zip(a, b, c):
            np.testing.assert_array_equal(ra.se, rb.se)
            np.testing.assert_array_equal(ra.cov, rb.cov)
            assert not np.array_equal(ra.se, rc.se)

    def test_too_few_replicates_rejected(self, table1_dataset_n100):
        with pytest.raises(ValueError, match="at least 2"):
            bootstrap_se(table1_dataset_n100, B=1, seed=0)

    def test_original_data_failure_raises(self):
        # events only at z=0: the fit itself diverges, nothing to bootstrap
        subjects = []
        for i in range(10):
            z = float(i % 2)
            counts = [[0, 0]] if z == 1.0 else [[1, 3]]
            subjects.append(Subject(str(i), [1.0 + 0.1 * i, 6.0 + 0.1 * i], counts, [z]))
        data = PanelDataset(subjects, k=1, d=1)
        with pytest.raises(InferenceError, match="original data"):
            bootstrap_se(data, B=5, seed=0)

    def test_failed_replicates_dropped_and_counted(self):
        # a single z=1 subject carries all the z=1 events; replicates
        # missing it see an eventual-free z=1 level and diverge
        rng = np.random.default_rng(3)
        subjects = [Subject("hot", [1.0, 2.0], [[2, 4]], [1.0])]
        for i in range(4):
            subjects.append(
                Subject(f"cold{i}", [1.2 + 0.05 * i, 2.2 + 0.05 * i], [[0, 0]], [1.0])
            )
        for i in range(6):
            subjects.append(
                Subject(
                    str(i),
                    [1.0 + 0.05 * i, 3.0 + 0.05 * i],
                    [np.sort(rng.integers(1, 5, size=2))],
                    [0.0],
                )
            )
        data = PanelDataset(subjects, k=1, d=1)
        res = bootstrap_se(data, B=30, seed=4)[0]
        assert res.failures > 0
        assert res.replicates == 30 - res.failures
        assert res.replicates >= 2

    def test_se_shrinks_like_root_n(self):
        cfg100 = table1_config(n=100)
        cfg200 = table1_config(n=200)
        ds100 = gen_dataset(cfg100, np.random.default_rng([42, 0]))
        ds200 = gen_dataset(cfg200, np.random.default_rng([42, 0]))
        r100 = bootstrap_se(ds100, B=300, seed=2)
        r200 = bootstrap_se(ds200, B=300, seed=2)
        for j in range(2):
            mean_ratio = np.mean(r200[j].se / r100[j].se)
            assert 0.6 <= mean_ratio <= 0.82

    def test_cov_properties_on_simulated_data(self, table1_dataset_n100):
        for res in bootstrap_se(table1_dataset_n100, B=60, seed=12):
            check_cov(res)


class TestSandwich:
    def test_agrees_with_bootstrap_on_simulated_data(self, table1_dataset_n200):
        fits = fit(table1_dataset_n200)
        boot = bootstrap_se(table1_dataset_n200, B=200, seed=5)
        for cf, br in zip(fits, boot):
            sw = sandwich_se(table1_dataset_n200, cf)
            assert np.all(np.abs(sw.se - br.se) / br.se <= 0.25)
            check_cov(sw)

    def test_constant_covariate_is_singular(self):
        subjects = [
            Subject(str(i), [1.0 + 0.1 * i, 2.0 + 0.1 * i], [[1, 2]], [1.0])
            for i in range(10)
        ]
        data = PanelDataset(subjects, k=1, d=1)
        cf = fit(data)[0]
        with pytest.raises(NumericError, match="singular"):
            sandwich_se(data, cf)

    def test_covariate_scaling_scales_se_inversely(self, table1_dataset_n100):
        data = table1_dataset_n100
        cf = fit(data)[0]
        base = sandwich_se(data, cf)
        c = 3.0
        scaled_subjects = [
            Subject(s.id, s.times, s.counts, c * s.covariates) for s in data.subjects
        ]
        scaled = PanelDataset(scaled_subjects, k=data.k, d=data.d)
        # same fitted model expressed in the scaled parametrization
        scaled_fit = CauseFit(
            cause=cf.cause,
            beta=cf.beta / c,
            baseline=cf.baseline,
            loglik_trace=list(cf.loglik_trace),
            iterations=cf.iterations,
            converged=cf.converged,
        )
        res = sandwich_se(scaled, scaled_fit)
        np.testing.assert_allclose(res.se, base.se / c, rtol=1e-10)

    def test_needs_covariates(self):
        data = PanelDataset([Subject("a", [1.0], [[1]], [])], k=1, d=0)
        cf = fit(data)[0]
        with pytest.raises(ValueError, match="covariate"):
            sandwich_se(data, cf)
