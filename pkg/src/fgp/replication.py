"""Replicability tests, closed-form option prices, and the homogenisation pricing pipeline.

A generating function is replicable when its drift process vanishes, which
is equivalent to the pricing equation

    1/2 sum_ij s_ij x_i x_j D_ij V + D_t V + gamma0 (sum_i x_i D_i V - V) = 0.

:func:`pde_residual` evaluates its left side on sample points.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import catalog
from . import closed_forms as cf
from .errors import DomainError, OracleError, PipelineRejected
from .genfun import GeneratingFunction, homogenize
from .market_sim import MarketModel, as_covariance, covariance
from .normal import normal_cdf, normal_pdf

ANALYTIC_TOL = 1e-6
FD_TOL = 1e-4


@dataclass(frozen=True, eq=False)
class PdeResidualReport:
    """Pricing-equation residuals of one function on a set of samples.

    ``normalized`` is ``|residual| / V``; the verdict compares its maximum
    against ``tolerance``.
    """

    name: str
    x: np.ndarray
    t: np.ndarray
    residuals: np.ndarray
    values: np.ndarray
    gamma0: float
    backend: str
    tolerance: float
    gamma0_term: np.ndarray = field(default=None)

    @property
    def normalized(self):
        return np.abs(self.residuals) / self.values

    @property
    def max_normalized(self):
        return float(np.max(self.normalized))

    @property
    def replicable(self):
        return self.max_normalized <= self.tolerance

    @property
    def verdict(self):
        return "replicable" if self.replicable else "not_replicable"

    def to_dict(self):
        return {
            "function": self.name,
            "backend": self.backend,
            "gamma0": self.gamma0,
            "samples": [{"x": xi.tolist(), "t": float(ti)} for xi, ti in zip(self.x, self.t)],
            "residuals": self.residuals.tolist(),
            "normalized": self.normalized.tolist(),
            "max": self.max_normalized,
            "tolerance": self.tolerance,
            "verdict": self.verdict,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def sample_points(arity, count, seed, x_range=(0.5, 2.0), t_range=(0.0, 0.9)):
    """Uniform random sample of ``count`` points in ``[lo, hi]^arity x [t0, t1]``."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(x_range[0], x_range[1], size=(count, arity))
    t = rng.uniform(t_range[0], t_range[1], size=count)
    return x, t


def _covariance_for(f, cov):
    sigma = as_covariance(cov)
    if sigma.n == f.arity:
        return sigma.matrix
    if sigma.n + 1 == f.arity:
        return sigma.augmented().matrix
    raise DomainError(f"covariance of size {sigma.n} does not fit {f.name} of arity {f.arity}")


def pde_residual(f, cov, gamma0, samples, backend="auto", tolerance=None):
    """Residual of the generalised Black-Scholes equation at ``samples = (x, t)``.

    For a function taking ``(x0, x)`` the covariance is padded with a zero
    riskless row and column.  The ``gamma0`` term is computed even for
    degree-one functions, where Euler's identity makes it vanish.
    """
    x, t = samples
    x = np.atleast_2d(np.asarray(x, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), x.shape[:-1])
    if f.horizon is not None and np.any(t >= f.horizon):
        raise DomainError("pde residual samples must satisfy t < T")
    s = _covariance_for(f, cov)
    v = f.value(x, t)
    g = f.gradient(x, t, backend)
    h = f.hessian(x, t, backend)
    d_t = f.time_derivative(x, t, backend)
    diffusion = 0.5 * np.einsum("kij,ij,ki,kj->k", h, s, x, x)
    g0 = gamma0 * (np.sum(x * g, axis=-1) - v)
    resid = diffusion + d_t + g0
    used = "fd" if backend == "fd" or not f.has_analytic_derivatives else "analytic"
    if tolerance is None:
        tolerance = ANALYTIC_TOL if used == "analytic" else FD_TOL
    return PdeResidualReport(name=f.name, x=x, t=np.asarray(t).copy(), residuals=resid, values=v,
                             gamma0=float(gamma0), backend=used, tolerance=float(tolerance),
                             gamma0_term=g0)


# --- closed forms ---------------------------------------------------------------


@dataclass(frozen=True)
class BsQuote:
    """Black-Scholes call quote; ``delta == N(z0)``."""

    x: float
    K: float
    r: float
    sigma: float
    t: float
    T: float
    z0: float
    z1: float
    price: float
    delta: float


def _check_bs(x, K, sigma, t, T):
    if not (x > 0 and K > 0 and sigma > 0):
        raise DomainError("x, K and sigma must be positive")
    if t > T:
        raise DomainError(f"t={t} is past expiry T={T}")


def bs_call(x, K, r, sigma, t, T):
    """Black-Scholes call ``N(z0) x - N(z1) K e^{r(t-T)}``; at ``t == T`` the payoff ``(x-K)^+``."""
    _check_bs(x, K, sigma, t, T)
    tau = T - t
    if tau <= 0 or sigma * math.sqrt(tau) == 0:
        m = math.log(x / K)
        z = 0.0 if m == 0 else math.copysign(math.inf, m)
        return BsQuote(x, K, r, sigma, t, T, z, z, max(x - K, 0.0), float(normal_cdf(z)))
    disc = math.exp(r * (t - T))
    z0, z1 = cf.z_values(x, K, sigma, tau, disc)
    price = float(normal_cdf(z0) * x - normal_cdf(z1) * K * disc)
    return BsQuote(x, K, r, sigma, t, T, float(z0), float(z1), price, float(normal_cdf(z0)))


def bs_shifted_claim(x, K, sigma, t, T):
    """``N(z0) x + (1 - N(z1)) K`` with zero rate; terminal value ``max(x, K)``."""
    _check_bs(np.min(x), K, sigma, np.max(t), T)
    return cf.shifted_claim_value(x, K, sigma, t, T)


def homogenized_call(x0, x, K, sigma, t, T):
    """``N(z0) x + (1 - N(z1)) K x0`` with ``z0`` built from ``x / (K x0)``; terminal ``max(x, K x0)``."""
    _check_bs(np.min(x), K, sigma, np.max(t), T)
    if not np.all(np.asarray(x0) > 0):
        raise DomainError("x0 must be positive")
    return cf.homogenized_call_value(x0, x, K, sigma, t, T)


def recovered_call(x0, x, K, sigma, t, T):
    """Call value recovered from the homogenised claim: ``V_hat(x0, x, t) - K x0``.

    Computed as the difference of the two positive values; far out of the
    money rounding can take it a few ulps below zero, so it is floored at 0.
    """
    return np.maximum(homogenized_call(x0, x, K, sigma, t, T) - K * np.asarray(x0, dtype=float), 0.0)


def power_sum_solution(p, sigma, x, t, T):
    """``sum_i exp((p_i - p_i^2) sigma_i^2 (t-T)/2) x_i^{p_i}``; diagonal covariance."""
    return cf.power_sum_value(x, p, sigma, t, T)


def bs_pde_residual(x, K, r, sigma, t, T, backend="fd"):
    """Residual of ``V_t + sigma^2 x^2 V_xx / 2 + r x V_x - r V`` for the call price.

    ``backend="fd"`` differentiates the closed form numerically; ``"analytic"``
    uses the textbook Greeks.
    """
    f = _call_as_function(K, r, sigma, T)
    x = np.atleast_1d(np.asarray(x, dtype=float))[:, None]
    report = pde_residual(f, np.array([[sigma * sigma]]), r, (x, t), backend=backend)
    return report.residuals


def _call_as_function(K, r, sigma, T):
    # positive only before expiry, which is where residuals are sampled
    def fn(x, t):
        return cf.call_value(x[..., 0], K, r, sigma, t, T)

    def grad(x, t):
        tau = T - t
        disc = np.exp(-r * tau)
        z0, _ = cf.z_values(x[..., 0], K, sigma, tau, disc)
        return normal_cdf(z0)[..., None]

    def hess(x, t):
        tau = T - t
        disc = np.exp(-r * tau)
        z0, _ = cf.z_values(x[..., 0], K, sigma, tau, disc)
        return (normal_pdf(z0) / (x[..., 0] * sigma * np.sqrt(tau)))[..., None, None]

    def dt(x, t):
        tau = T - t
        disc = np.exp(-r * tau)
        z0, z1 = cf.z_values(x[..., 0], K, sigma, tau, disc)
        return -x[..., 0] * normal_pdf(z0) * sigma / (2 * np.sqrt(tau)) - r * K * disc * normal_cdf(z1)

    return GeneratingFunction(name="bs_call", arity=1, fn=fn, grad=grad, hess=hess, dt=dt,
                              homogeneity="inhomogeneous", horizon=T,
                              params={"kind": "bs_call", "K": K, "r": r, "sigma": sigma, "T": T})


# --- heat kernel oracle ---------------------------------------------------------


def heat_kernel_solve_1d(terminal, sigma, tau, y, nodes=4001, rtol=1e-8, max_doublings=8, half_width=10.0):
    """Solve ``u_tau = sigma^2 u_yy / 2`` with ``u(., 0) = terminal`` at ``y`` by quadrature.

    Trapezoid rule for the Gaussian convolution on ``[y - w, y + w]`` with
    ``w = half_width * sigma * sqrt(tau)``, doubling the node count until the
    relative change drops below ``rtol``.  Raises :class:`OracleError` when
    the integrand has not decayed at the window edges or the rule stalls.
    """
    if tau < 0:
        raise DomainError(f"tau must be nonnegative, got {tau}")
    y = float(y)
    if tau == 0:
        return float(terminal(np.array([y]))[0])
    s = sigma * math.sqrt(tau)
    w = half_width * s

    def rule(m):
        z = np.linspace(y - w, y + w, m)
        g = np.asarray(terminal(z), dtype=float)
        kern = np.exp(-0.5 * ((z - y) / s) ** 2) / (s * math.sqrt(2 * math.pi))
        integrand = kern * g
        return np.trapezoid(integrand, z), integrand

    prev, integrand = rule(nodes)
    peak = np.max(np.abs(integrand))
    edge = max(abs(integrand[0]), abs(integrand[-1]))
    if not np.isfinite(prev) or (peak > 0 and edge > 1e-12 * peak):
        raise OracleError(f"integrand not negligible at the window edge ({edge:.3g} vs peak {peak:.3g})")
    m = nodes
    for _ in range(max_doublings):
        m = 2 * m - 1
        cur, _ = rule(m)
        if abs(cur - prev) <= rtol * abs(cur):
            return float(cur)
        prev = cur
    raise OracleError(f"quadrature did not converge after {max_doublings} doublings")


def sqrt_claim_by_quadrature(x, sigma, t, T):
    """Value of the square-root claim rebuilt from one-dimensional heat-kernel solutions.

    Uses ``y_i = log x_i + sigma_i^2 t / 2`` and ``tau = T - t``; the terminal
    square ``(sum_i e^{y_i/2 - sigma_i^2 T/4})^2`` splits into products of
    one-dimensional convolutions.
    """
    x = np.asarray(x, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    tau = T - t
    y = np.log(x) + sigma ** 2 * t / 2
    lin = np.empty_like(x)
    half = np.empty_like(x)
    for i, (yi, si) in enumerate(zip(y, sigma)):
        lin[i] = math.exp(-si ** 2 * T / 2) * heat_kernel_solve_1d(np.exp, si, tau, yi)
        half[i] = math.exp(-si ** 2 * T / 4) * heat_kernel_solve_1d(lambda z: np.exp(z / 2), si, tau, yi)
    cross = half.sum() ** 2 - np.sum(half ** 2)
    return float(lin.sum() + cross)


def heat_kernel_claim(terminal, sigma, horizon, name="heat_kernel"):
    """One-asset generating function solving the zero-rate pricing equation by quadrature.

    ``terminal`` maps an array of prices to positive payoffs.  Derivatives
    come from finite differences.
    """
    sigma, horizon = float(sigma), float(horizon)

    def point(xi, ti):
        tau = horizon - ti
        if tau <= 0:
            return float(terminal(np.array([xi]))[0])
        y = math.log(xi) + sigma ** 2 * ti / 2
        g = lambda z: terminal(np.exp(z - sigma ** 2 * horizon / 2))  # noqa: E731
        return heat_kernel_solve_1d(g, sigma, tau, y)

    def fn(x, t):
        xs = x[..., 0]
        out = np.empty(xs.shape)
        for idx in np.ndindex(xs.shape):
            out[idx] = point(float(xs[idx]), float(t[idx]))
        return out

    return GeneratingFunction(name=name, arity=1, fn=fn, homogeneity="unknown", horizon=horizon,
                              params={"kind": name, "sigma": sigma, "T": horizon})


# --- three-step pricing -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ClaimProblem:
    """European claim with terminal function ``terminal`` on ``market`` up to ``horizon``.

    The riskless asset is rescaled so that ``X_0(T) = 1``.  Terminal kinds:
    ``call`` (shifted to ``max(x, K)``), ``power_sum``, ``sqrt_sum`` and
    ``power`` (one asset, priced by quadrature).
    """

    terminal: dict
    market: MarketModel
    horizon: float

    def __post_init__(self):
        if not self.horizon > 0:
            raise DomainError("horizon must be positive")
        if "kind" not in self.terminal:
            raise DomainError("terminal descriptor needs a 'kind'")
        x0 = math.exp(-self.market.riskless_rate * self.horizon)
        if self.market.initial_riskless != x0:
            object.__setattr__(self, "market", replace(self.market, initial_riskless=x0))

    @property
    def strike(self):
        return float(self.terminal.get("K", 0.0))

    @property
    def shift(self):
        """Constant added to the payoff to make it strictly positive."""
        return self.strike if self.terminal["kind"] == "call" else 0.0

    def terminal_value(self, x):
        """The (shifted) terminal value function evaluated at ``x`` of shape ``(..., n)``."""
        x = np.asarray(x, dtype=float)
        kind = self.terminal["kind"]
        if kind == "call":
            return np.maximum(x[..., 0], self.strike)
        if kind == "power_sum":
            return np.sum(x ** np.asarray(self.terminal["p"], dtype=float), axis=-1)
        if kind == "sqrt_sum":
            return np.sum(np.sqrt(x), axis=-1) ** 2
        if kind == "power":
            return x[..., 0] ** float(self.terminal["p"])
        raise DomainError(f"unknown terminal kind {kind!r}")

    @classmethod
    def from_dict(cls, data, market, horizon):
        return cls(terminal=dict(data), market=market, horizon=horizon)


def _market_sigmas(market):
    cov = covariance(market).matrix
    return np.sqrt(np.diag(cov))


def solve_step_one(problem):
    """Step-1 solution for the cataloged terminal kinds (closed forms, quadrature for ``power``)."""
    kind = problem.terminal["kind"]
    sig = _market_sigmas(problem.market)
    T = problem.horizon
    if kind == "call":
        if problem.market.n != 1:
            raise DomainError("call problems need exactly one risky asset")
        return catalog.shifted_call(problem.strike, sig[0], T)
    if kind == "power_sum":
        return catalog.power_sum(problem.terminal["p"], sig, T)
    if kind == "sqrt_sum":
        return catalog.sqrt_claim(sig, T)
    if kind == "power":
        p = float(problem.terminal["p"])
        return heat_kernel_claim(lambda x: x ** p, sig[0], T, name="power_by_quadrature")
    raise DomainError(f"no step-1 solver for terminal kind {kind!r}")


@dataclass(frozen=True, eq=False)
class PricingResult:
    step_one: GeneratingFunction
    claim: GeneratingFunction
    step_one_report: PdeResidualReport
    claim_report: PdeResidualReport


def three_step_price(problem, solver=None, samples=None, seed=0, count=50, backend="auto", tolerance=None):
    """Price ``problem`` by homogenising a step-1 solution.

    1. ``solver(problem)`` (default :func:`solve_step_one`) returns ``V``
       solving the zero-rate equation with ``V(x, T) = f(x)``.
    2. ``V_hat(x0, x, t) = x0 V(x / x0, t)``.
    3. ``V_hat`` is checked on ``(x0, x)`` samples with the market rate and
       ``V`` on the discounted samples ``x / x0`` with zero rate; both must
       pass or the pipeline rejects.

    Returns a :class:`PricingResult` whose ``claim`` is ``V_hat``.
    """
    step_one = (solver or solve_step_one)(problem)
    market = problem.market
    cov = covariance(market)
    T = problem.horizon
    if samples is None:
        x, t = sample_points(market.n, count, seed, t_range=(0.0, 0.9 * T))
        x0 = np.exp(market.riskless_rate * (t - T))
    else:
        x0, x, t = samples
        x0 = np.broadcast_to(np.asarray(x0, dtype=float), np.shape(t))
        x = np.asarray(x, dtype=float)
    # terminal condition of step 1
    term_gap = np.abs(step_one.value(x, T) - problem.terminal_value(x)) / problem.terminal_value(x)
    if np.max(term_gap) > 1e-10:
        raise PipelineRejected(f"step-1 solution misses the terminal value by {np.max(term_gap):.3g}")

    claim = homogenize(step_one)
    discounted = x / x0[:, None]
    rep_v = pde_residual(step_one, cov, 0.0, (discounted, t), backend, tolerance)
    rep_hat = pde_residual(claim, cov, market.riskless_rate, (np.column_stack([x0, x]), t), backend, tolerance)
    reports = {"step_one": rep_v, "claim": rep_hat}
    if not rep_v.replicable:
        raise PipelineRejected(
            f"step-1 residual {rep_v.max_normalized:.3g} exceeds tolerance {rep_v.tolerance:g}", reports)
    if rep_hat.replicable != rep_v.replicable:
        raise PipelineRejected("replicability of V and V_hat disagree", reports)
    return PricingResult(step_one=step_one, claim=claim, step_one_report=rep_v, claim_report=rep_hat)


def drift_corrected_values(f, trajectory, path):
    """``V(X(t), t) exp(Phi(t))`` using the analytic drift estimated along ``trajectory``.

    This is the heuristic correction for a non-constant excess growth rate;
    no accuracy is claimed.
    """
    from .portfolio_engine import _arguments

    args, _ = _arguments(f, path.log_prices, path.log_riskless)
    return f.value(args, path.grid) * np.exp(trajectory.phi_analytic)
