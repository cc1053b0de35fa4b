import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fgp import catalog
from fgp import closed_forms as cf
from fgp.errors import ConfigError, DifferentiationError, DomainError, PositivityError
from fgp.genfun import (
    DEGREE_ONE,
    INHOMOGENEOUS,
    GeneratingFunction,
    derivative_discrepancy,
    dt_fd,
    euler_check,
    evaluate,
    extend_simplex_function,
    gradient_fd,
    hessian_fd,
    homogenize,
    relative_euler_residual,
)

from .oracles import EXTENDED_ENTROPY_11

COV3 = np.diag([0.04, 0.04, 0.04])
SIG3 = np.array([0.2, 0.2, 0.2])

prices3 = arrays(float, 3, elements=st.floats(0.05, 20.0))
times = st.floats(0.0, 0.95)


def n_asset_builtins():
    return {
        "geometric_mean": catalog.geometric_mean([0.2, 0.3, 0.5]),
        "corrected_geometric_mean": catalog.corrected_geometric_mean([0.2, 0.3, 0.5], COV3),
        "diversity": catalog.diversity(0.5, 3),
        "sqrt_claim": catalog.sqrt_claim(SIG3, 1.0),
        "extended_entropy": catalog.extended_entropy(3),
        "power_sum": catalog.power_sum([0.5, 0.75, 1.5], SIG3, 1.0),
        "homogenized_power_sum": homogenize(catalog.power_sum([0.5, 2.0], [0.2, 0.3], 1.0)),
        "extended_gibbs_shannon": extend_simplex_function(catalog.gibbs_shannon_entropy(3)),
    }


def product():
    return GeneratingFunction(name="product", arity=2, fn=lambda x, t: x[..., 0] * x[..., 1])


class TestEvaluate:
    def test_extended_entropy_hand_value(self):
        f = catalog.extended_entropy(2)
        assert f.value([1.0, 1.0]) == pytest.approx(EXTENDED_ENTROPY_11, rel=1e-15)

    def test_degenerate_geometric_mean(self):
        f = catalog.geometric_mean([1.0, 0.0, 0.0])
        x = np.array([2.5, 7.0, 0.3])
        assert f.value(x) == 2.5

    def test_sqrt_claim_terminal(self):
        f = catalog.sqrt_claim([0.2, 0.3], 1.0)
        assert f.value([1.0, 1.0], 1.0) == 4.0

    def test_nonpositive_price_is_domain_error(self):
        with pytest.raises(DomainError):
            catalog.diversity(0.5, 2).value([1.0, 0.0])

    def test_nonpositive_value_names_function(self):
        f = GeneratingFunction(name="broken", arity=1, fn=lambda x, t: x[..., 0] - 2.0)
        with pytest.raises(PositivityError, match="broken"):
            f.value([1.0])

    def test_time_domain(self):
        f = catalog.sqrt_claim([0.2, 0.3], 1.0)
        with pytest.raises(DomainError):
            evaluate(f, [1.0, 1.0], 1.5)
        with pytest.raises(DomainError):
            evaluate(f, [1.0, 1.0], -0.1)
        assert evaluate(f, [1.0, 1.0], 1.0) == 4.0

    def test_arity_mismatch(self):
        with pytest.raises(DomainError, match="expects 3"):
            catalog.extended_entropy(3).value([1.0, 2.0])

    def test_vectorised(self, grid50):
        x, t = grid50
        f = catalog.sqrt_claim(SIG3, 1.0)
        v = f.value(x, t)
        assert v.shape == (50,)
        assert v[7] == f.value(x[7], t[7])


class TestFiniteDifferences:
    def test_polynomial(self):
        f = product()
        np.testing.assert_allclose(gradient_fd(f, [2.0, 3.0]), [3.0, 2.0], rtol=1e-10)
        h = hessian_fd(f, [2.0, 3.0])
        assert h[0, 1] == pytest.approx(1.0, rel=1e-8)
        assert h[1, 0] == h[0, 1]
        assert abs(h[0, 0]) < 1e-6

    def test_diversity_gradient(self):
        f = catalog.diversity(0.5, 3)
        x = np.array([1.0, 2.0, 3.0])
        a = f.gradient(x, backend="analytic")
        np.testing.assert_allclose(gradient_fd(f, x, h=1e-5), a, rtol=1e-7)

    def test_power_sum_time_derivative(self):
        p, s = np.array([0.5, 2.0, -1.0]), np.array([0.2, 0.3, 0.1])
        f = catalog.power_sum(p, s, 1.0)
        x, t = np.array([0.7, 1.3, 2.2]), 0.4
        alpha = 0.5 * (p - p * p) * s * s
        expected = np.sum(alpha * np.exp(alpha * (t - 1.0)) * x ** p)
        assert dt_fd(f, x, t) == pytest.approx(expected, rel=1e-7)
        assert f.time_derivative(x, t, "analytic") == pytest.approx(expected, rel=1e-14)

    def test_backward_difference_near_horizon(self):
        calls = []

        def fn(x, t):
            calls.append(np.max(t))
            return x[..., 0] * np.exp(np.asarray(t) - 1.0)

        f = GeneratingFunction(name="g", arity=1, fn=fn, horizon=1.0)
        d = dt_fd(f, [2.0], 1.0 - 1e-6)
        assert d == pytest.approx(2.0 * np.exp(-1e-6), rel=1e-8)
        assert max(calls) < 1.0

    def test_nonfinite_quotient(self):
        f = GeneratingFunction(name="spiky", arity=1, fn=lambda x, t: np.where(x[..., 0] > 1.0, np.inf, 1.0))
        with pytest.raises(DifferentiationError):
            gradient_fd(f, [1.0])

    def test_hessian_symmetric(self, grid50):
        x, t = grid50
        h = hessian_fd(catalog.diversity(0.3, 3), x, t)
        np.testing.assert_array_equal(h, np.swapaxes(h, -1, -2))

    @pytest.mark.parametrize("name", list(n_asset_builtins()))
    def test_analytic_matches_fd(self, name, grid50):
        f = n_asset_builtins()[name]
        x, t = grid50
        if f.arity == 2:
            x = x[:, :2]
        elif f.arity == 4:
            x = np.column_stack([np.exp(0.03 * (t - 1.0)), x])
        d = derivative_discrepancy(f, x, t)
        assert max(d.values()) < 1e-6, d

    @pytest.mark.parametrize("f", [catalog.shifted_call(1.0, 0.2, 1.0), catalog.homogenized_call(1.0, 0.2, 1.0)],
                             ids=["shifted_call", "homogenized_call"])
    def test_option_builtins_match_fd_near_the_money(self, f):
        rng = np.random.default_rng(8)
        x = rng.uniform(0.7, 1.4, size=(50, f.arity))
        if f.arity == 2:
            x[:, 0] = rng.uniform(0.9, 1.0, size=50)
        t = rng.uniform(0.0, 0.8, size=50)
        d = derivative_discrepancy(f, x, t)
        assert max(d.values()) < 1e-6, d

    def test_non_smooth_has_no_derivatives(self):
        f = catalog.pairwise_max()
        for op in (f.gradient, f.hessian, f.time_derivative):
            with pytest.raises(DifferentiationError):
                op([1.0, 2.0], 0.0)

    def test_analytic_backend_requires_formula(self):
        with pytest.raises(DifferentiationError):
            product().gradient([1.0, 2.0], backend="analytic")


class TestEuler:
    def test_degree_one_builtins(self, grid50):
        x, t = grid50
        for name, f in n_asset_builtins().items():
            if f.homogeneity != DEGREE_ONE:
                continue
            xs = np.column_stack([np.ones(50), x]) if f.arity == 4 else x[:, :f.arity]
            assert np.max(relative_euler_residual(f, xs, t, "analytic")) < 1e-8, name
            assert np.max(relative_euler_residual(f, xs, t, "fd")) < 1e-6, name

    def test_power_sum_fails(self, grid50):
        x, t = grid50
        f = catalog.power_sum([0.5, 0.75, 1.5], SIG3, 1.0)
        assert f.homogeneity == INHOMOGENEOUS
        assert np.min(relative_euler_residual(f, x, t)) > 1e-3

    def test_homogenized_call_all_arguments(self):
        f = catalog.homogenized_call(1.0, 0.2, 1.0)
        rng = np.random.default_rng(1)
        x = rng.uniform(0.5, 2.0, size=(50, 2))
        t = rng.uniform(0, 0.9, 50)
        assert np.max(relative_euler_residual(f, x, t, "fd")) < 1e-8
        assert np.max(relative_euler_residual(f, x, t, "analytic")) < 1e-12

    @given(prices3, times)
    def test_geometric_mean_exact(self, x, t):
        f = catalog.geometric_mean([0.2, 0.3, 0.5])
        r = euler_check(f, x, t, "analytic")
        assert abs(r) <= 1e-13 * f.value(x, t)


class TestHomogenize:
    def test_identity_on_projection(self):
        f = GeneratingFunction(name="first", arity=1, fn=lambda x, t: x[..., 0],
                               grad=lambda x, t: np.ones_like(x), homogeneity=DEGREE_ONE)
        g = homogenize(f)
        y = np.array([[0.3, 2.0], [4.0, 2.0]])
        np.testing.assert_allclose(g.value(y), [2.0, 2.0], rtol=1e-15)
        assert g.homogeneity == DEGREE_ONE

    def test_shifted_call_matches_closed_form(self):
        K, s, T = 1.1, 0.25, 1.0
        g = homogenize(catalog.shifted_call(K, s, T))
        x0, x = np.meshgrid(np.linspace(0.8, 1.0, 7), np.linspace(0.5, 2.0, 9))
        t = np.linspace(0.0, 0.99, x.size).reshape(x.shape)
        got = g.value(np.stack([x0, x], axis=-1), t)
        np.testing.assert_allclose(got, cf.homogenized_call_value(x0, x, K, s, t, T), rtol=1e-10)

    @given(prices3, times, st.sampled_from([0.5, 2.0, 10.0]))
    def test_scaling(self, x, t, a):
        g = homogenize(catalog.power_sum([0.5, 2.0], [0.2, 0.3], 1.0))
        assert g.value(a * x, t) == pytest.approx(a * g.value(x, t), rel=1e-12)

    @given(arrays(float, 2, elements=st.floats(0.05, 20.0)), times)
    def test_unit_riskless_slot_is_exact(self, x, t):
        f = catalog.power_sum([0.5, 2.0], [0.2, 0.3], 1.0)
        assert homogenize(f).value(np.concatenate([[1.0], x]), t) == f.value(x, t)

    @given(prices3, times, st.floats(0.1, 10.0))
    def test_degree_one_input_ignores_riskless(self, x, t, x0):
        f = catalog.sqrt_claim([0.2, 0.3], 1.0)
        g = homogenize(f)
        assert g.value(np.array([x0, x[0], x[1]]), t) == pytest.approx(f.value(x[:2], t), rel=1e-13)

    def test_elasticity_sums_to_one(self, grid50):
        x, t = grid50
        g = homogenize(catalog.power_sum([0.5, 2.0], [0.2, 0.3], 1.0))
        e = g.log_elasticity(np.column_stack([np.full(50, 0.9), x[:, :2]]), t)
        np.testing.assert_allclose(e.sum(axis=-1), 1.0, rtol=0, atol=1e-14)


class TestSimplexExtension:
    def test_entropy_extension(self, grid50):
        x, _ = grid50
        f = extend_simplex_function(catalog.gibbs_shannon_entropy(3))
        z = x.sum(axis=1)
        expected = z * np.log(z) - np.sum(x * np.log(x), axis=1)
        np.testing.assert_allclose(f.value(x), expected, rtol=1e-12)
        np.testing.assert_allclose(f.value(x), catalog.extended_entropy(3).value(x), rtol=1e-12)

    def test_constant(self, grid50):
        x, _ = grid50
        s = GeneratingFunction(name="c", arity=3, fn=lambda m, t: np.full(m.shape[:-1], 2.5),
                               grad=lambda m, t: np.zeros_like(m))
        f = extend_simplex_function(s)
        np.testing.assert_allclose(f.value(x), 2.5 * x.sum(axis=1), rtol=1e-15)

    def test_weights_on_simplex(self):
        mu = np.array([0.2, 0.3, 0.5])
        f = extend_simplex_function(catalog.gibbs_shannon_entropy(3))
        s = -np.sum(mu * np.log(mu))
        np.testing.assert_allclose(f.log_elasticity(mu), -mu * np.log(mu) / s, rtol=1e-12)

    @given(arrays(float, 3, elements=st.floats(0.01, 1.0)))
    def test_restriction_identity(self, w):
        mu = w / w.sum()
        s = catalog.gibbs_shannon_entropy(3)
        assert extend_simplex_function(s).value(mu) == pytest.approx(s.value(mu), rel=1e-13)


class TestCatalog:
    def test_build_by_name(self):
        f = catalog.build({"kind": "diversity", "p": 0.5}, n=3)
        assert f.arity == 3 and f.homogeneity == DEGREE_ONE
        g = catalog.build({"kind": "sqrt_claim"}, n=2, cov=np.diag([0.04, 0.09]), horizon=1.0)
        assert g.params["sigma"] == pytest.approx([0.2, 0.3])
        h = catalog.build({"kind": "homogenize", "base": {"kind": "power_sum", "p": [0.5, 2.0]}},
                          n=2, cov=np.diag([0.04, 0.09]), horizon=1.0)
        assert h.arity == 3

    def test_every_name_builds(self):
        cov = np.diag([0.04, 0.04])
        for name in catalog.BUILTIN_NAMES:
            d = {"kind": name}
            if name == "power_sum":
                d["p"] = [0.5, 2.0]
            if name == "homogenize":
                d["base"] = {"kind": "diversity"}
            n = 1 if name == "shifted_call" else 2
            f = catalog.build(d, n=n, cov=cov[:n, :n], horizon=1.0)
            assert isinstance(f, GeneratingFunction)

    def test_unknown_name(self):
        with pytest.raises(ConfigError, match="unknown builtin"):
            catalog.build({"kind": "nope"}, n=2)

    @pytest.mark.parametrize("p", [0.0, 1.0, 1.5, -0.5])
    def test_diversity_parameter_range(self, p):
        with pytest.raises(DomainError):
            catalog.diversity(p, 3)

    def test_positive_parameters(self):
        with pytest.raises(DomainError):
            catalog.shifted_call(-1.0, 0.2, 1.0)
        with pytest.raises(DomainError):
            catalog.sqrt_claim([0.2, -0.1], 1.0)

    def test_geometric_mean_tag(self):
        assert catalog.geometric_mean([0.5, 0.5]).homogeneity == DEGREE_ONE
        assert catalog.geometric_mean([0.5, 0.7]).homogeneity != DEGREE_ONE

    def test_corrected_geometric_mean_rate(self):
        p = np.array([0.2, 0.3, 0.5])
        rate = catalog.excess_growth_rate(p, COV3)
        assert rate == pytest.approx(0.5 * (0.04 - 0.04 * np.sum(p * p)), rel=1e-15)
        f = catalog.corrected_geometric_mean(p, COV3)
        x = np.array([1.2, 0.8, 1.7])
        assert f.value(x, 0.5) == pytest.approx(catalog.geometric_mean(p).value(x) * np.exp(0.5 * rate), rel=1e-15)

    def test_max_weights_tie_to_first(self):
        f = catalog.pairwise_max()
        np.testing.assert_array_equal(f.log_elasticity([1.0, 1.0]), [1.0, 0.0])
        np.testing.assert_array_equal(f.log_elasticity([1.0, 2.0]), [0.0, 1.0])

    def test_weight_bounds_on_grid(self, grid50):
        x, t = grid50
        for name, f in n_asset_builtins().items():
            if f.weight_bounds is None:
                continue
            xs = np.column_stack([np.ones(50), x]) if f.arity == 4 else x[:, :f.arity]
            e = f.log_elasticity(xs, t)
            lo, hi = f.weight_bounds
            assert np.all(e >= lo - 1e-12) and np.all(e <= hi + 1e-12), name
