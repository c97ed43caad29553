import math

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import quad

from tmghmc.constraints import LinearConstraint, Trajectory
from tmghmc.errors import EventLimitExceeded
from tmghmc.lasso import (
    LassoModel,
    _advance_lasso,
    _Walls,
    flip_sign,
    lasso_beta_step,
    lasso_center,
    run_lasso_chain,
    sigma2_step,
    sign_crossing_time,
    synthetic_regression,
)


def unit_model(penalty=1.0, noise_var=1.0):
    return LassoModel(gram=[[1.0]], zy=[0.0], penalty=penalty, noise_var=noise_var)


def piecewise_gibbs_oracle(gram, zy, penalty, noise_var, n, burn_in, seed):
    """Exact coordinate-wise sampler for the piecewise-Gaussian conditional."""
    rng = np.random.default_rng(seed)
    d = len(zy)
    beta = np.zeros(d)
    out = np.empty((n, d))
    sd = math.sqrt
    for it in range(burn_in + n):
        for i in range(d):
            rest = gram[i] @ beta - gram[i, i] * beta[i]
            base = zy[i] - rest
            v = noise_var / gram[i, i]
            s = sd(v)
            m_plus = (base - penalty) / gram[i, i]
            m_minus = (base + penalty) / gram[i, i]
            logw_plus = m_plus**2 / (2 * v) + stats.norm.logcdf(m_plus / s)
            logw_minus = m_minus**2 / (2 * v) + stats.norm.logcdf(-m_minus / s)
            p_plus = 1.0 / (1.0 + math.exp(min(logw_minus - logw_plus, 500)))
            if rng.random() < p_plus:
                beta[i] = stats.truncnorm.rvs(
                    -m_plus / s, np.inf, loc=m_plus, scale=s, random_state=rng
                )
            else:
                beta[i] = stats.truncnorm.rvs(
                    -np.inf, -m_minus / s, loc=m_minus, scale=s, random_state=rng
                )
        if it >= burn_in:
            out[it - burn_in] = beta
    return out


class TestCenters:
    def test_one_dimensional_both_signs(self):
        model = unit_model()
        assert np.allclose(lasso_center(model, np.array([1.0])), [-1.0])
        assert np.allclose(lasso_center(model, np.array([-1.0])), [1.0])

    def test_residual_is_zero(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((3, 3))
        model = LassoModel(
            gram=a @ a.T + 3 * np.eye(3),
            zy=rng.standard_normal(3),
            penalty=0.7,
        )
        s = np.array([1.0, -1.0, 1.0])
        mu = lasso_center(model, s)
        assert np.max(np.abs(model.gram @ mu - model.linear_term(s))) < 1e-10


class TestSignCrossing:
    def test_cosine_inversion(self):
        traj = Trajectory(mu=[-1.0], a=[0.0], b=[1.5])
        t = sign_crossing_time(traj, 0)
        assert np.isclose(t, math.acos(2.0 / 3.0), atol=1e-12)

    def test_amplitude_bound(self):
        traj = Trajectory(mu=[-1.0], a=[0.0], b=[0.5])
        assert sign_crossing_time(traj, 0) is None

    def test_only_the_requested_coordinate_matters(self):
        rng = np.random.default_rng(1)
        mu = rng.standard_normal(4)
        a = rng.standard_normal(4)
        b = rng.standard_normal(4)
        traj = Trajectory(mu=mu, a=a, b=b)
        for i in range(4):
            solo = Trajectory(mu=mu[i : i + 1], a=a[i : i + 1], b=b[i : i + 1])
            t_full = sign_crossing_time(traj, i)
            t_solo = sign_crossing_time(solo, 0)
            if t_full is None:
                assert t_solo is None
            else:
                assert np.isclose(t_full, t_solo)


class TestFlip:
    def test_hand_worked_flip(self):
        model = unit_model()
        signs = np.array([1.0])
        beta = np.array([0.5])  # position -1 + 1.5 cos(0)
        velocity = np.array([0.0])
        t_flip = math.acos(2.0 / 3.0)
        new_beta, new_velocity, new_signs, crossings, _ = _advance_lasso(
            model, beta, velocity, signs, None, t_flip + 1e-12, 100
        )
        assert crossings == 1
        assert new_signs[0] == -1.0
        # just after the flip the center is +1, so b = beta - mu = -1 and
        # the velocity is -1.5 sin(t_flip) = -sqrt(5)/2
        assert abs(new_beta[0]) < 1e-9
        assert np.isclose(new_velocity[0], -math.sqrt(5) / 2, atol=1e-9)

    def test_double_flip_restores_centers(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((3, 3))
        model = LassoModel(
            gram=a @ a.T + 3 * np.eye(3), zy=rng.standard_normal(3), penalty=0.5
        )
        s0 = np.array([1.0, 1.0, -1.0])
        s1, _ = flip_sign(model, s0, 1)
        s2, centers = flip_sign(model, s1, 1)
        assert np.array_equal(s2, s0)
        assert np.allclose(centers, lasso_center(model, s0), atol=1e-14)

    def test_energy_continuous_across_flip(self):
        # the linear term changes by 2 s lambda beta_j, which vanishes at
        # the event since beta_j = 0 there
        rng = np.random.default_rng(3)
        for _ in range(20):
            a = rng.standard_normal((2, 2))
            model = LassoModel(
                gram=a @ a.T + 2 * np.eye(2),
                zy=rng.standard_normal(2),
                penalty=1.0,
                noise_var=0.8,
            )
            beta = rng.standard_normal(2)
            velocity = rng.standard_normal(2)
            result = lasso_beta_step(model, beta, rng)
            # recorded energies span any flips that occurred
            _, step_stats = result
            assert abs(step_stats.energy_end - step_stats.energy_start) < 1e-10


class TestBetaStep:
    def test_energy_conserved_across_iterations(self):
        rng = np.random.default_rng(4)
        a = rng.standard_normal((3, 3))
        model = LassoModel(
            gram=a @ a.T + 3 * np.eye(3), zy=rng.standard_normal(3), penalty=1.3
        )
        beta = np.array([0.2, -0.4, 0.1])
        for _ in range(300):
            beta, step = lasso_beta_step(model, beta, rng)
            assert abs(step.energy_end - step.energy_start) < 1e-8

    def test_sign_consistency_between_events(self):
        model = unit_model()
        signs = np.array([1.0])
        beta = np.array([0.5])
        velocity = np.array([0.0])
        t_flip = math.acos(2.0 / 3.0)
        for frac in np.linspace(0.05, 0.95, 19):
            b, _, s, _, _ = _advance_lasso(
                model, beta, velocity, signs, None, frac * t_flip, 100
            )
            assert np.sign(b[0]) == s[0] == 1.0
        for frac in np.linspace(1.05, 1.6, 12):
            b, _, s, _, _ = _advance_lasso(
                model, beta, velocity, signs, None, frac * t_flip, 100
            )
            if s[0] == -1.0:
                assert b[0] <= 1e-12

    def test_reversibility_with_flips(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            a = rng.standard_normal((3, 3))
            model = LassoModel(
                gram=a @ a.T + 3 * np.eye(3),
                zy=rng.standard_normal(3),
                penalty=1.0,
            )
            beta = rng.standard_normal(3)
            velocity = rng.standard_normal(3)
            signs = np.sign(beta)
            b1, v1, s1, c1, _ = _advance_lasso(
                model, beta, velocity, signs, None, math.pi / 2, 10000
            )
            b0, v0, s0, c0, _ = _advance_lasso(
                model, b1, -v1, s1, None, math.pi / 2, 10000
            )
            assert np.max(np.abs(b0 - beta)) < 1e-8
            assert np.max(np.abs(v0 + velocity)) < 1e-8
            assert c0 == c1

    def test_flat_penalty_limit_recovers_gaussian_mean(self):
        rng = np.random.default_rng(6)
        gram = np.array([[2.0, 0.3], [0.3, 1.0]])
        zy = np.array([1.0, -0.5])
        model = LassoModel(gram=gram, zy=zy, penalty=1e-12)
        beta = np.zeros(2)
        draws = np.empty((20000, 2))
        for k in range(draws.shape[0]):
            beta, _ = lasso_beta_step(model, beta, rng)
            draws[k] = beta
        target = np.linalg.solve(gram, zy)
        se = draws.std(axis=0) / math.sqrt(draws.shape[0])
        assert np.all(np.abs(draws.mean(axis=0) - target) < 5 * se)

    def test_one_dimensional_matches_quadrature(self):
        model = unit_model()
        rng = np.random.default_rng(7)
        beta = np.array([0.3])
        n = 30000
        draws = np.empty(n)
        for k in range(n):
            beta, _ = lasso_beta_step(model, beta, rng)
            draws[k] = beta[0]

        def density(b):
            return math.exp(-0.5 * b * b - abs(b))

        z, _ = quad(density, -10, 10)
        abs_mean, _ = quad(lambda b: abs(b) * density(b), -10, 10)
        abs_mean /= z
        se = draws.std() / math.sqrt(n)
        assert abs(draws.mean()) < 4 * se
        se_abs = np.abs(draws).std() / math.sqrt(n)
        assert abs(np.abs(draws).mean() - abs_mean) < 4 * se_abs

    def test_two_dimensional_matches_piecewise_gibbs(self):
        gram = np.array([[1.5, 0.4], [0.4, 1.0]])
        zy = np.array([0.8, -0.3])
        penalty = 1.2
        model = LassoModel(gram=gram, zy=zy, penalty=penalty)
        rng = np.random.default_rng(8)
        n = 30000
        beta = np.zeros(2)
        draws = np.empty((n, 2))
        for k in range(n):
            beta, _ = lasso_beta_step(model, beta, rng)
            draws[k] = beta
        oracle = piecewise_gibbs_oracle(gram, zy, penalty, 1.0, n, 500, seed=9)
        for i in range(2):
            se = math.sqrt(
                draws[:, i].var() / n + oracle[:, i].var() / n
            ) * 2.0  # correlated chains: inflate
            assert abs(draws[:, i].mean() - oracle[:, i].mean()) < 4 * se

    def test_extra_wall_constraints_respected(self):
        model = LassoModel(gram=np.eye(2), zy=np.array([0.5, 0.5]), penalty=0.8)
        cons = (LinearConstraint(f=[1.0, 0.0], g=0.0),)  # beta_1 >= 0
        rng = np.random.default_rng(10)
        beta = np.array([0.5, 0.1])
        for _ in range(2000):
            beta, step = lasso_beta_step(model, beta, rng, constraints=cons)
            assert beta[0] >= -1e-9
            assert abs(step.energy_end - step.energy_start) < 1e-8

    def test_event_limit(self):
        model = unit_model(penalty=50.0)  # strong pull toward zero: many flips
        rng = np.random.default_rng(11)
        with pytest.raises(EventLimitExceeded):
            for _ in range(50):
                lasso_beta_step(model, np.array([0.01]), rng, event_limit=3)


class TestSigma2:
    def test_degenerate_matches_inverse_gamma(self):
        model = unit_model(penalty=1.0)
        rng = np.random.default_rng(12)
        r = 1.7
        draws = np.array(
            [
                sigma2_step(model, np.array([]), [r], np.zeros((1, 0)), rng)
                for _ in range(20000)
            ]
        )
        ref = stats.invgamma(0.5, scale=r * r / 2.0)
        ks = stats.kstest(draws, ref.cdf)
        assert ks.pvalue > 0.01

    def test_seed_reproducibility(self):
        y, z = synthetic_regression(20, [1.0, -2.0], seed=13)
        a = run_lasso_chain(y, z, penalty=1.0, n=50, burn_in=10, seed=14)
        b = run_lasso_chain(y, z, penalty=1.0, n=50, burn_in=10, seed=14)
        assert np.array_equal(a.beta_samples, b.beta_samples)
        assert np.array_equal(a.sigma2_samples, b.sigma2_samples)

    def test_joint_chain_concentrates_noise_variance(self):
        y, z = synthetic_regression(
            50, [1.5, 0.0, -2.0], noise_var=1.0, seed=15
        )
        result = run_lasso_chain(y, z, penalty=1.0, n=8000, burn_in=1000, seed=16)
        q25, q75 = np.percentile(result.sigma2_samples, [25, 75])
        assert q25 <= 1.0 <= q75

    def test_energy_conserved_with_noise_updates(self):
        y, z = synthetic_regression(30, [0.5, -1.0], seed=17)
        result = run_lasso_chain(y, z, penalty=0.5, n=500, burn_in=100, seed=18)
        drift = np.abs(result.energies[:, 1] - result.energies[:, 0])
        assert drift.max() < 1e-8
