import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fgp import catalog
from fgp.errors import BoundednessError, DomainError
from fgp.genfun import homogenize
from fgp.market_sim import MarketModel, coarsen, covariance, discount_path, simulate_path
from fgp.portfolio_engine import (
    decomposition_check,
    drift_rate,
    excess_growth,
    integrate_value,
    local_time_drift_check,
    monotonicity_band,
    weight_matrix,
    weights_at,
)

from .oracles import shifted_claim_risky_weight

P = np.array([0.2, 0.3, 0.5])


@pytest.fixture
def path3(market3):
    return simulate_path(market3, 1.0, 500, seed=31)


def smooth_builtins(cov):
    return [
        catalog.geometric_mean(P),
        catalog.corrected_geometric_mean(P, cov.matrix),
        catalog.diversity(0.5, 3),
        catalog.sqrt_claim([0.2] * 3, 1.0),
        catalog.extended_entropy(3),
        catalog.power_sum([0.5, 0.75, 1.5], [0.2] * 3, 1.0),
    ]


class TestWeights:
    def test_geometric_mean_weights_are_p(self):
        w = weights_at(catalog.geometric_mean([0.3, 0.7]), [1.7, 0.4], 0.3)
        assert w.pi0 == 0.0
        np.testing.assert_array_equal(w.pi, [0.3, 0.7])
        assert w.full.sum() == 1.0

    @pytest.mark.parametrize("p", [0.1, 0.5, 0.9])
    def test_diversity_symmetric_point(self, p):
        w = weights_at(catalog.diversity(p, 4), [2.0] * 4, 0.0)
        np.testing.assert_allclose(w.pi, 0.25, rtol=1e-15)
        assert w.pi0 == 0.0

    @pytest.mark.parametrize("x", [1.0, 0.8, 1.2])
    def test_shifted_call_weight(self, x):
        w = weights_at(catalog.shifted_call(1.0, 0.2, 1.0), [x], 0.0)
        assert w.pi[0] == pytest.approx(shifted_claim_risky_weight(x, 1.0, 0.2, 1.0), rel=1e-13)
        assert w.pi0 + w.pi[0] == pytest.approx(1.0, abs=1e-15)

    def test_at_the_money_weight_is_half(self):
        # V = N(z0) + N(-z1) with z1 = -z0 at x = K, so the risky weight is exactly 1/2
        w = weights_at(catalog.shifted_call(1.0, 0.2, 1.0), [1.0], 0.0)
        assert w.pi[0] == pytest.approx(0.5, rel=1e-15)

    def test_shifted_call_weight_bounded_near_edges(self):
        # no global certificate: check [0, 1] on a grid reaching toward x -> 0 and t -> T
        f = catalog.shifted_call(1.0, 0.2, 1.0)
        xs = np.logspace(-4, 4, 81)
        for t in (0.0, 0.5, 0.99, 1.0 - 1e-6):
            e = f.log_elasticity(xs[:, None], np.full(xs.size, t))[:, 0]
            assert np.all(np.isfinite(e))
            assert np.all((e >= 0.0) & (e <= 1.0)), t

    def test_degree_one_fd_weights_sum_exactly(self, path3):
        f = catalog.diversity(0.3, 3)
        w = weight_matrix(f, path3.log_prices, path3.log_riskless, path3.grid, backend="fd")
        assert np.all(w[:, 0] == 0.0)
        assert np.all(w[:, 1:].sum(axis=1) == 1.0)

    def test_weights_normalised_every_builtin(self, path3, cov3):
        for f in smooth_builtins(cov3):
            w = weight_matrix(f, path3.log_prices[:-1], path3.log_riskless[:-1], path3.grid[:-1])
            np.testing.assert_allclose(w.sum(axis=1), 1.0, rtol=0, atol=1e-12)

    def test_power_sum_uses_riskless_asset(self, market3):
        f = catalog.power_sum([0.5, 0.75, 1.5], [0.2] * 3, 1.0)
        for i in range(5):
            p = simulate_path(market3, 1.0, 50, seed=2, path_index=i)
            w = weight_matrix(f, p.log_prices[:-1], p.log_riskless[:-1], p.grid[:-1])
            assert np.any(w[:, 0] != 0.0)

    def test_bound_is_an_error(self):
        f = catalog.power_sum([5.0], [0.2], 1.0)
        with pytest.raises(BoundednessError):
            weights_at(f, [1.0], 0.0, bound=2.0)

    def test_nonpositive_price(self):
        with pytest.raises(DomainError):
            weights_at(catalog.diversity(0.5, 2), [1.0, -1.0], 0.0)


class TestExcessGrowth:
    def test_single_asset(self):
        assert excess_growth(np.array([1.0]), np.array([[0.09]])) == 0.0

    def test_two_uncorrelated(self):
        s2 = 0.09
        assert excess_growth(np.array([0.5, 0.5]), np.diag([s2, s2])) == pytest.approx(s2 / 4, rel=1e-15)

    @given(arrays(float, 3, elements=st.floats(0.01, 1.0)))
    def test_positive_for_long_only(self, w):
        w = w / w.sum()
        cov = np.array([[0.04, 0.01, 0.0], [0.01, 0.09, 0.02], [0.0, 0.02, 0.05]])
        assert excess_growth(w, cov) > 0

    def test_accepts_full_vector(self, cov3):
        w = weights_at(catalog.geometric_mean(P), [1.0, 1.0, 1.0], 0.0)
        assert excess_growth(w, cov3) == excess_growth(w.full, cov3) == excess_growth(P, cov3)


class TestIntegrate:
    def test_initial_values(self, path3, cov3):
        traj = integrate_value(catalog.diversity(0.5, 3), path3, cov3)
        assert traj.log_value[0] == traj.log_generator[0]
        assert traj.phi_analytic[0] == 0.0 and traj.phi_residual[0] == 0.0
        assert traj.weights.shape == (500, 4) and traj.log_value.shape == (501,)

    def test_geometric_mean_drift_closed_form(self, path3, cov3):
        traj = integrate_value(catalog.geometric_mean(P), path3, cov3)
        egr0 = catalog.excess_growth_rate(P, cov3.matrix)
        assert np.all(traj.weights[:, 1:] == P)
        assert traj.phi_analytic[-1] == pytest.approx(egr0 * 1.0, abs=1e-12)

    def test_corrected_geometric_mean_has_no_drift(self, path3, cov3):
        traj = integrate_value(catalog.corrected_geometric_mean(P, cov3.matrix), path3, cov3)
        assert np.max(np.abs(traj.phi_residual)) < 1e-12

    def test_zero_volatility_equal_growth_is_exact(self):
        m = MarketModel(n=3, d=3, growth=0.04, vol=np.zeros((3, 3)), initial_prices=[1.0, 2.0, 0.5])
        p = simulate_path(m, 1.0, 50, seed=0)
        traj = integrate_value(catalog.diversity(0.5, 3), p, covariance(m))
        assert abs(traj.log_value[-1] - traj.log_generator[-1]) < 1e-14
        assert decomposition_check(catalog.extended_entropy(3), p, covariance(m)) < 1e-14

    def test_zero_volatility_gap_is_first_order(self):
        # weights drift with the relative prices, so the left-point rule is exact only in the limit
        m = MarketModel(n=3, d=3, growth=[0.05, 0.0, -0.02], vol=np.zeros((3, 3)))
        cov = covariance(m)
        f = catalog.diversity(0.5, 3)
        g = [decomposition_check(f, simulate_path(m, 1.0, k, seed=0), cov) for k in (50, 100, 200)]
        assert g[1] / g[0] == pytest.approx(0.5, abs=0.01)
        assert g[2] / g[1] == pytest.approx(0.5, abs=0.01)

    @pytest.mark.parametrize("k", range(6))
    def test_gap_small(self, market3, cov3, k):
        f = smooth_builtins(cov3)[k]
        p = simulate_path(market3, 1.0, 10_000, seed=5)
        assert decomposition_check(f, p, cov3) < 1e-3

    def test_gap_shrinks_at_half_order(self, market3, cov3):
        # the leading error is a martingale in the squared increments, so halving dt gives ~sqrt(2)
        f = catalog.diversity(0.5, 3)
        fine, coarse = [], []
        for i in range(20):
            p = simulate_path(market3, 1.0, 8000, seed=13, path_index=i)
            fine.append(decomposition_check(f, p, cov3))
            coarse.append(decomposition_check(f, coarsen(p, market3, 4), cov3))
        ratio = np.median(fine) / np.median(coarse)
        assert 0.35 < ratio < 0.65

    def test_log_and_arithmetic_agree(self, market3, cov3):
        f = catalog.extended_entropy(3)
        diffs = {}
        for m in (1000, 4000):
            d = []
            for i in range(20):
                p = simulate_path(market3, 1.0, m, seed=21, path_index=i)
                a = integrate_value(f, p, cov3, scheme="log").log_value
                b = integrate_value(f, p, cov3, scheme="arithmetic").log_value
                d.append(np.max(np.abs(a - b)))
            diffs[m] = np.median(d)
        assert diffs[4000] < diffs[1000] < 1e-3

    def test_diversity_drift_identity(self, path3, cov3):
        p = 0.3
        traj = integrate_value(catalog.diversity(p, 3), path3, cov3)
        cum = np.concatenate([[0.0], np.cumsum(traj.egr * path3.dt)])
        np.testing.assert_allclose(traj.phi_analytic, (1 - p) * cum, rtol=0, atol=1e-12)

    def test_non_replicable_residual_matches_drift(self, market3, cov3):
        f = catalog.diversity(0.5, 3)
        p = simulate_path(market3, 1.0, 10_000, seed=3)
        traj = integrate_value(f, p, cov3)
        assert traj.phi_residual[-1] > 1e-3
        assert abs(traj.phi_residual[-1] - traj.phi_analytic[-1]) < 1e-3

    def test_power_sum_on_discounted_paths_is_replicable(self, market3, cov3):
        f = catalog.power_sum([0.5, 0.75, 1.5], [0.2] * 3, 1.0)
        meds = []
        for m in (1000, 16000):
            r = [np.max(np.abs(integrate_value(f, discount_path(simulate_path(market3, 1.0, m, 4, i)), cov3).phi_residual))
                 for i in range(10)]
            meds.append(np.median(r))
        assert meds[1] < 0.6 * meds[0]
        assert meds[1] < 1e-3

    def test_homogenized_function_on_undiscounted_path(self, path3, cov3):
        f = homogenize(catalog.power_sum([0.5, 0.75, 1.5], [0.2] * 3, 1.0))
        traj = integrate_value(f, path3, cov3)
        np.testing.assert_allclose(traj.weights.sum(axis=1), 1.0, atol=1e-12)
        assert np.max(np.abs(traj.phi_analytic)) < 1e-12
        assert np.max(np.abs(traj.gap)) < 5e-3

    def test_csv(self, path3, cov3):
        traj = integrate_value(catalog.diversity(0.5, 3), path3, cov3)
        lines = traj.to_csv().splitlines()
        assert lines[0] == "t,pi0,pi1,pi2,pi3,logZ,phi_analytic,phi_residual,egr"
        assert len(lines) == 502
        assert lines[-1].split(",")[1] == "nan"

    def test_covariance_mismatch(self, path3):
        with pytest.raises(DomainError):
            integrate_value(catalog.diversity(0.5, 3), path3, np.eye(2))

    def test_drift_rate_gamma0_term_only_for_inhomogeneous(self, path3, cov3):
        f = catalog.power_sum([0.5, 0.75, 1.5], [0.2] * 3, 1.0)
        a = drift_rate(f, path3.log_prices[:5], path3.log_riskless[:5], path3.grid[:5], cov3, 0.0)
        b = drift_rate(f, path3.log_prices[:5], path3.log_riskless[:5], path3.grid[:5], cov3, 0.05)
        assert np.all(a != b)
        g = catalog.diversity(0.5, 3)
        a = drift_rate(g, path3.log_prices[:5], path3.log_riskless[:5], path3.grid[:5], cov3, 0.0)
        b = drift_rate(g, path3.log_prices[:5], path3.log_riskless[:5], path3.grid[:5], cov3, 0.05)
        np.testing.assert_array_equal(a, b)


class TestLocalTime:
    def test_no_crossing_no_drift(self):
        m = MarketModel.diagonal([0.01, 0.01], initial_prices=[1.0, 3.0])
        p = simulate_path(m, 0.1, 200, seed=1)
        s = local_time_drift_check(p)
        assert np.max(np.abs(s)) < 1e-14

    def test_sign_and_monotonicity(self):
        m = MarketModel.diagonal([0.4, 0.4])
        neg = 0
        for i in range(30):
            s = local_time_drift_check(simulate_path(m, 1.0, 500, seed=6, path_index=i))
            neg += s[-1] <= 0
            assert np.max(np.diff(s)) <= monotonicity_band(s)
        assert neg >= 28

    def test_needs_two_assets(self, path3):
        with pytest.raises(DomainError):
            local_time_drift_check(path3)

    def test_max_has_nan_analytic_drift(self):
        m = MarketModel.diagonal([0.3, 0.3])
        traj = integrate_value(catalog.pairwise_max(), simulate_path(m, 1.0, 10, 0), covariance(m))
        assert np.all(np.isnan(traj.phi_analytic))
