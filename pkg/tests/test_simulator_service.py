import math

import numpy as np
import pytest
from pydantic import ValidationError as PydanticValidationError
from scipy import stats

from app.ReqResModels.parammodels import Transform
from app.ReqResModels.simulatormodels import BoomBustParams, ShiftedExpParams
from app.logic.exceptions import ValidationError
from app.services.simulator_service import (
    BoomBustSimulator,
    ShiftedExpSimulator,
    SimulatorService,
    get_simulator,
)


class TestBoomBustDynamics:
    def test_crash_without_survivors_goes_extinct(self):
        rng = np.random.default_rng(0)
        out = SimulatorService.boom_bust_batch(0.4, 10.0, 0.0, 0.0, T=1, N0=50, rng=rng)
        assert out[0, 0] == 0

    def test_zero_growth_preserves_mean(self):
        rng = np.random.default_rng(1)
        out = SimulatorService.boom_bust_batch(np.zeros(20000), 50.0, 0.5, 0.0, T=1, N0=20, rng=rng)
        assert abs(out[:, 0].mean() - 20.0) <= 4 * math.sqrt(20.0 / 20000)

    def test_reference_parameters_cycle(self):
        sim = BoomBustSimulator()
        S = sim.simulate_many([0.4, 50.0, 0.09, 0.05], 20, rng_seed=3)
        assert S.shape == (20, 5)
        assert np.mean(S[:, 3] > 0) >= 0.9

    def test_single_trajectory(self):
        params = BoomBustParams(r=0.4, kappa=50.0, alpha=0.09, beta=0.05, T=120, burn_in=20)
        path = SimulatorService.simulate_boom_bust(params, rng_seed=5)
        assert path.shape == (120,)
        assert np.all(path >= 0)
        np.testing.assert_array_equal(path, SimulatorService.simulate_boom_bust(params, rng_seed=5))

    def test_horizon_must_exceed_burn_in(self):
        with pytest.raises(PydanticValidationError):
            BoomBustParams(r=0.4, kappa=50.0, alpha=0.09, beta=0.05, T=50, burn_in=50)


class TestBoomBustStats:
    def test_constant_path(self):
        stats_ = SimulatorService.boom_bust_stats(np.full(100, 5), burn_in=20)
        np.testing.assert_allclose(stats_, [5.0, 5.0, 0.0, 0.0, math.sqrt(80)])

    def test_zero_path(self):
        stats_ = SimulatorService.boom_bust_stats(np.zeros(100), burn_in=20)
        assert stats_[1] == 0.0
        assert stats_[2] == 80

    def test_hand_counted_peaks(self):
        path = np.full(60, 100.0)
        path[10:] = 60.0
        path[17:] = 20.0
        stats_ = SimulatorService.boom_bust_stats(path, burn_in=0)
        assert stats_[3] == 2
        assert stats_[4] == pytest.approx(math.sqrt(7))

    def test_small_drops_are_not_peaks(self):
        path = np.full(60, 100.0)
        path[30:] = 71.0
        assert SimulatorService.boom_bust_stats(path, burn_in=0)[3] == 0

    def test_burn_in_longer_than_path(self):
        with pytest.raises(ValidationError):
            SimulatorService.boom_bust_stats(np.zeros(10), burn_in=10)


class TestShiftedExponential:
    def test_marginal_means(self):
        theta = np.array([1.0, -2.0, 0.5])
        S = ShiftedExpSimulator(3, 0.5).simulate_many(theta, 100000, rng_seed=0)
        se = 2.0 / math.sqrt(100000)
        assert np.all(np.abs(S.mean(axis=0) - (theta + 2.0)) <= 4 * se)
        assert np.all(S >= theta)

    def test_single_draw(self):
        params = ShiftedExpParams(theta=[1.0, -2.0], beta=0.5,
                                  correlation=SimulatorService.random_correlation(2, rng_seed=4).tolist())
        s = SimulatorService.simulate_shifted_exp(params, rng_seed=9)
        assert s.shape == (2,)
        assert np.all(s >= [1.0, -2.0])
        np.testing.assert_array_equal(s, SimulatorService.simulate_shifted_exp(params, rng_seed=9))

    def test_identity_copula_is_independent(self):
        S = ShiftedExpSimulator(2, 1.0, correlation=np.eye(2)).simulate_many([0.0, 0.0], 20000, rng_seed=1)
        r = np.corrcoef(S, rowvar=False)[0, 1]
        assert abs(r) <= 4 / math.sqrt(20000)

    def test_identity_copula_density(self, rng):
        u = rng.random((10, 3))
        np.testing.assert_allclose(SimulatorService.gaussian_copula_log_density(u, np.eye(3)), 0.0, atol=1e-12)

    def test_copula_margins_are_exponential(self):
        R = SimulatorService.random_correlation(3, rng_seed=2)
        S = ShiftedExpSimulator(3, 0.5, correlation=R).simulate_many(np.zeros(3), 20000, rng_seed=3)
        for j in range(3):
            assert stats.kstest(S[:, j], stats.expon(scale=2.0).cdf).pvalue > 1e-3

    def test_exact_density_without_copula(self, rng):
        params = ShiftedExpParams(theta=[0.5, -1.0], beta=0.5)
        points = 0.6 + rng.random((5, 2)) * 4.0
        expected = stats.expon(loc=[0.5, -1.0], scale=2.0).logpdf(points).sum(axis=1)
        np.testing.assert_allclose(SimulatorService.shifted_exp_log_density(points, params), expected)
        assert SimulatorService.shifted_exp_log_density([[0.0, 0.0]], params)[0] == -np.inf

    def test_identity_copula_density_matches_independent(self, rng):
        points = 1.0 + rng.random((5, 2)) * 3.0
        plain = ShiftedExpParams(theta=[0.0, 0.0], beta=1.5)
        coupled = ShiftedExpParams(theta=[0.0, 0.0], beta=1.5, correlation=np.eye(2).tolist())
        np.testing.assert_allclose(
            SimulatorService.shifted_exp_log_density(points, coupled),
            SimulatorService.shifted_exp_log_density(points, plain),
            atol=1e-10,
        )

    def test_rejects_invalid_correlation(self):
        with pytest.raises(PydanticValidationError):
            ShiftedExpParams(theta=[0.0, 0.0], beta=1.0, correlation=[[1.0, 1.2], [1.2, 1.0]])


class TestRandomCorrelation:
    def test_valid_matrix(self):
        for seed in range(5):
            R = SimulatorService.random_correlation(6, rng_seed=seed)
            np.testing.assert_array_equal(np.diag(R), 1.0)
            np.testing.assert_allclose(R, R.T)
            assert np.linalg.eigvalsh(R).min() > 0

    def test_off_diagonal_symmetric_about_zero(self):
        values = [SimulatorService.random_correlation(2, rng_seed=s)[0, 1] for s in range(2000)]
        assert abs(np.mean(values)) <= 0.05

    def test_needs_two_dimensions(self):
        with pytest.raises(ValidationError):
            SimulatorService.random_correlation(1, rng_seed=0)


class TestSimulators:
    def test_simulate_many_is_deterministic_and_chunked(self):
        sim = ShiftedExpSimulator(2, 1.0)
        a = sim.simulate_many([0.0, 0.0], 1200, rng_seed=4, workers=1)
        b = sim.simulate_many([0.0, 0.0], 1200, rng_seed=4, workers=3)
        assert a.shape == (1200, 2)
        np.testing.assert_array_equal(a, b)

    def test_param_vector_carries_box(self):
        sim = BoomBustSimulator()
        theta = sim.param_vector([0.4, 50.0, 0.09, 0.05])
        assert theta.names == ["r", "kappa", "alpha", "beta"]
        np.testing.assert_allclose(theta.from_unconstrained(theta.to_unconstrained()), theta.as_array())

    def test_boom_bust_transforms_stay_in_box(self, rng):
        sim = BoomBustSimulator()
        theta = sim.param_vector([0.4, 50.0, 0.09, 0.05])
        assert sim.transforms() == [Transform.LOGIT] * 4
        u = theta.to_unconstrained() + 5.0 * rng.standard_normal((200, 4))
        natural = theta.from_unconstrained(u)
        lower, upper = sim.bounds()
        assert np.all(natural >= lower) and np.all(natural <= upper)
        averaged = theta.from_unconstrained(u.mean(axis=0))
        assert np.all(averaged > lower) and np.all(averaged < upper)

    def test_registry(self):
        assert get_simulator("copula-exp", d=3).name == "copula-exp"
        assert get_simulator("shifted-exp", d=3).n_stats == 3
        assert get_simulator("boom-bust").n_stats == 5
        with pytest.raises(ValidationError):
            get_simulator("lotka-volterra")
