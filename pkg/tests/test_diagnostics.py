import math

import numpy as np
import pytest

from tmghmc.diagnostics import (
    ACF_CUTOFF,
    DiagnosticsReport,
    ScalarSeries,
    acf,
    benchmark,
    diagnose,
    esf,
    ess,
    gibbs_sampler,
    hmc_sampler,
)
from tmghmc.engine import TmgModel, run_chain
from tmghmc.errors import ZeroVariance
from tmghmc.linalg import GaussianSpec

from .test_engine import wedge_model


def esf_by_direct_summation(x):
    """Literal reimplementation: loop-based ACF, same window policy."""
    x = np.asarray(x, dtype=float)
    m = x.size
    xc = x - x.mean()
    c0 = float(xc @ xc)
    rho = []
    for j in range(1, m // 2 + 1):
        r = float(xc[:-j] @ xc[j:]) / c0
        if abs(r) < ACF_CUTOFF:
            break
        rho.append(r)
    total = sum(2.0 * (1.0 - j / m) * r for j, r in enumerate(rho, start=1))
    return 1.0 / (1.0 + total)


class TestAcf:
    def test_lag_zero_normalization(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(500)
        rho = acf(x, max_lag=5)
        for j in range(1, 6):
            ref = np.corrcoef(x[:-j], x[j:])[0, 1]
            # biased estimator vs corrcoef agree loosely at small lags
            assert abs(rho[j - 1] - ref) < 0.02

    def test_alternating_series(self):
        m = 1000
        x = np.tile([1.0, -1.0], m // 2)
        rho = acf(x, max_lag=2)
        assert np.isclose(rho[0], -(m - 1) / m, atol=1e-12)

    def test_iid_noise_small_acf(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal(10**5)
        rho = acf(x, max_lag=10)
        assert np.max(np.abs(rho)) < 0.02

    def test_unconstrained_hmc_acf_is_cos_power(self):
        # with cos T = 0.5 the lag-j autocorrelation is 0.5^j
        model = TmgModel(gaussian=GaussianSpec.standard(1), travel_time=math.pi / 3)
        result = run_chain(model, n=10**5, burn_in=100, init=[0.0], seed=2)
        rho = acf(result.samples[:, 0], max_lag=6)
        for j in range(1, 7):
            assert abs(rho[j - 1] - 0.5**j) < 0.03

    def test_zero_variance(self):
        with pytest.raises(ZeroVariance):
            acf(np.ones(100), max_lag=3)


class TestEsf:
    def test_iid_near_one(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal(10**5)
        assert abs(esf(x) - 1.0) < 0.1

    def test_alternating_matches_direct_summation(self):
        x = np.tile([1.0, -1.0], 500)
        assert np.isclose(esf(x), esf_by_direct_summation(x), rtol=1e-12)
        assert esf(x) > 1.0  # antithetic chains are super-efficient

    def test_random_series_matches_direct_summation(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            x = np.cumsum(rng.standard_normal(400)) + rng.standard_normal(400)
            assert np.isclose(esf(x), esf_by_direct_summation(x), rtol=1e-10)

    def test_affine_invariance(self):
        rng = np.random.default_rng(5)
        x = np.cumsum(rng.standard_normal(2000))
        assert np.isclose(esf(x), esf(3.5 * x - 11.0), rtol=1e-12)

    def test_ess_identity(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal(5000)
        assert np.isclose(ess(x), x.size * esf(x), rtol=1e-12)

    def test_permutation_restores_iid(self):
        rng = np.random.default_rng(7)
        x = np.cumsum(rng.standard_normal(20000))  # strongly correlated
        assert esf(x) < 0.05
        shuffled = rng.permutation(x)
        assert abs(esf(shuffled) - 1.0) < 0.25


class TestDiagnose:
    def test_report_fields(self):
        rng = np.random.default_rng(8)
        series = ScalarSeries(values=rng.standard_normal(4000), cpu_seconds=2.0)
        report = diagnose(series)
        assert isinstance(report, DiagnosticsReport)
        assert report.acf.size == 100
        assert np.isclose(report.ess, 4000 * report.esf)
        assert np.isclose(report.ess_per_cpu, report.ess / 2.0)

    def test_series_validation(self):
        with pytest.raises(ValueError):
            ScalarSeries(values=[1.0])
        with pytest.raises(ValueError):
            ScalarSeries(values=[1.0, np.nan])


class TestBenchmark:
    def test_single_sampler_single_repeat(self):
        model = TmgModel(gaussian=GaussianSpec.standard(2))
        table = benchmark(
            model,
            [("hmc", hmc_sampler())],
            n=500,
            burn_in=50,
            repeats=1,
            seed=0,
        )
        assert len(table.rows) == 2  # one per coordinate
        assert table.rows[0].sampler == "hmc"
        assert table.to_dict()["rows"][0]["esf"]["median"] > 0
        assert "hmc" in table.to_text()

    def test_wedge_esf_ordering_small(self):
        model = wedge_model()
        table = benchmark(
            model,
            [
                ("hmc-quarter", hmc_sampler(travel_time=math.pi / 2)),
                ("hmc-tenth", hmc_sampler(travel_time=math.pi / 10)),
                ("gibbs", gibbs_sampler()),
            ],
            n=2000,
            burn_in=500,
            repeats=5,
            seed=1,
            coords=[1],
            init=[2.0, 2.1],
        )
        med = {r.sampler: r.esf_median for r in table.rows}
        assert med["hmc-quarter"] > med["hmc-tenth"] > med["gibbs"]

    def test_rejects_zero_repeats(self):
        model = TmgModel(gaussian=GaussianSpec.standard(1))
        with pytest.raises(ValueError):
            benchmark(model, [("hmc", hmc_sampler())], 10, 0, repeats=0, seed=0)
