"""Builtin generating functions, addressable by name and a JSON parameter object.

>>> f = build({"kind": "diversity", "p": 0.5}, n=3)
>>> f.arity
3
"""

from __future__ import annotations

import numpy as np

from . import closed_forms as cf
from .errors import ConfigError, DomainError
from .genfun import (
    DEGREE_ONE,
    INHOMOGENEOUS,
    GeneratingFunction,
    extend_simplex_function,
    homogenize,
)
from .normal import normal_cdf


def _vec(p, name, n=None):
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if p.ndim != 1 or not np.all(np.isfinite(p)):
        raise DomainError(f"{name} must be a finite vector")
    if n is not None and p.size == 1 and n > 1:
        p = np.full(n, p[0])
    if n is not None and p.size != n:
        raise DomainError(f"{name} must have length {n}, got {p.size}")
    return p


def _positive(v, name):
    if not np.all(np.asarray(v) > 0):
        raise DomainError(f"{name} must be positive, got {v}")


def geometric_mean(p):
    """Weighted geometric mean ``x_1^{p_1} ... x_n^{p_n}``; weights are the constants ``p``."""
    p = _vec(p, "p")
    p.setflags(write=False)
    degree_one = bool(np.isclose(p.sum(), 1.0, rtol=0, atol=1e-12))

    def fn(x, t):
        return np.exp(np.log(x) @ p)

    def grad(x, t):
        return fn(x, t)[..., None] * p / x

    def hess(x, t):
        v = fn(x, t)[..., None, None]
        outer = (p[:, None] * p[None, :] - np.diag(p)) / (x[..., :, None] * x[..., None, :])
        return v * outer

    return GeneratingFunction(
        name="geometric_mean",
        arity=p.size,
        fn=fn,
        grad=grad,
        hess=hess,
        dt=lambda x, t: np.zeros(x.shape[:-1]),
        elasticity=lambda x, t: np.broadcast_to(p, x.shape),
        homogeneity=DEGREE_ONE if degree_one else INHOMOGENEOUS,
        weight_bounds=(min(0.0, p.min()), max(0.0, p.max())),
        params={"kind": "geometric_mean", "p": p.tolist()},
    )


def excess_growth_rate(weights, cov):
    """``(sum_i pi_i sigma_ii - sum_ij pi_i pi_j sigma_ij) / 2`` over risky assets; vectorised over leading axes."""
    w = np.asarray(weights, dtype=float)
    cov = np.asarray(cov, dtype=float)
    quad = np.einsum("...i,ij,...j->...", w, cov, w)
    return 0.5 * (w @ np.diag(cov) - quad)


def corrected_geometric_mean(p, cov):
    """``V(x) exp(gamma*_p t)`` with the excess growth rate of the constant weights ``p``."""
    base = geometric_mean(p)
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (base.arity, base.arity):
        raise DomainError(f"covariance must be {base.arity}x{base.arity}")
    p = np.asarray(base.params["p"])
    rate = float(excess_growth_rate(p, cov))

    def fn(x, t):
        return base.fn(x, t) * np.exp(rate * t)

    def grad(x, t):
        return base.grad(x, t) * np.exp(rate * t)[..., None]

    def hess(x, t):
        return base.hess(x, t) * np.exp(rate * t)[..., None, None]

    def dt(x, t):
        return rate * fn(x, t)

    return GeneratingFunction(
        name="corrected_geometric_mean",
        arity=base.arity,
        fn=fn,
        grad=grad,
        hess=hess,
        dt=dt,
        elasticity=base.elasticity,
        homogeneity=base.homogeneity,
        horizon=None,
        weight_bounds=base.weight_bounds,
        params={"kind": "corrected_geometric_mean", "p": p.tolist(), "cov": cov.tolist(),
                "excess_growth": rate},
    )


def diversity(p, n):
    """Diversity function ``(x_1^p + ... + x_n^p)^{1/p}`` for ``0 < p < 1``."""
    p = float(p)
    if not 0 < p < 1:
        raise DomainError(f"diversity exponent must lie in (0, 1), got {p}")

    def power_sum(x):
        return np.sum(x ** p, axis=-1)

    def fn(x, t):
        return power_sum(x) ** (1.0 / p)

    def grad(x, t):
        s = power_sum(x)
        return (s ** (1.0 / p - 1.0))[..., None] * x ** (p - 1.0)

    def hess(x, t):
        s = power_sum(x)
        xp = x ** (p - 1.0)
        out = (1.0 - p) * (s ** (1.0 / p - 2.0))[..., None, None] * xp[..., :, None] * xp[..., None, :]
        diag = (p - 1.0) * (s ** (1.0 / p - 1.0))[..., None] * x ** (p - 2.0)
        idx = np.arange(n)
        out[..., idx, idx] += diag
        return out

    def elasticity(x, t):
        xp = x ** p
        return xp / xp.sum(axis=-1, keepdims=True)

    return GeneratingFunction(
        name="diversity",
        arity=n,
        fn=fn,
        grad=grad,
        hess=hess,
        dt=lambda x, t: np.zeros(x.shape[:-1]),
        elasticity=elasticity,
        homogeneity=DEGREE_ONE,
        weight_bounds=(0.0, 1.0),
        params={"kind": "diversity", "p": p},
    )


def sqrt_claim(sigma, horizon):
    """Replicable square-root claim with terminal value ``(sqrt x_1 + ... + sqrt x_n)^2``.

    Solves the pricing equation for uncorrelated assets with volatilities ``sigma``.
    """
    sigma = _vec(sigma, "sigma")
    _positive(sigma, "sigma")
    horizon = float(horizon)
    s2 = sigma * sigma
    n = sigma.size

    def fn(x, t):
        return cf.sqrt_claim_value(x, sigma, t, horizon)

    def _parts(x, t):
        a = cf.sqrt_claim_factors(sigma, t, horizon)
        s = np.sqrt(x)
        return a, s, np.sum(a * s, axis=-1)

    def grad(x, t):
        a, s, w = _parts(x, t)
        return 1.0 - a * a + w[..., None] * a / s

    def hess(x, t):
        a, s, w = _parts(x, t)
        out = 0.5 * (a / s)[..., :, None] * (a / s)[..., None, :]
        idx = np.arange(n)
        out[..., idx, idx] -= 0.5 * w[..., None] * a / (x * s)
        return out

    def dt(x, t):
        a, s, w = _parts(x, t)
        return -0.25 * np.sum(s2 * x * a * a, axis=-1) + 0.25 * w * np.sum(s2 * a * s, axis=-1)

    def elasticity(x, t):
        a, s, w = _parts(x, t)
        num = x * (1.0 - a * a) + w[..., None] * a * s
        return num / fn(x, t)[..., None]

    return GeneratingFunction(
        name="sqrt_claim",
        arity=n,
        fn=fn,
        grad=grad,
        hess=hess,
        dt=dt,
        elasticity=elasticity,
        homogeneity=DEGREE_ONE,
        horizon=horizon,
        weight_bounds=(0.0, 1.0),
        params={"kind": "sqrt_claim", "sigma": sigma.tolist(), "T": horizon},
    )


def extended_entropy(n):
    """Extended entropy ``z log z - sum x_i log x_i`` with ``z = sum x_i`` (``n >= 2``)."""
    if n < 2:
        raise DomainError("extended entropy needs at least two assets")

    def fn(x, t):
        z = x.sum(axis=-1)
        return z * np.log(z) - np.sum(x * np.log(x), axis=-1)

    def grad(x, t):
        z = x.sum(axis=-1, keepdims=True)
        return np.log(z) - np.log(x)

    def hess(x, t):
        z = x.sum(axis=-1)
        out = np.broadcast_to((1.0 / z)[..., None, None], x.shape + (n,)).copy()
        idx = np.arange(n)
        out[..., idx, idx] -= 1.0 / x
        return out

    def elasticity(x, t):
        mu = x / x.sum(axis=-1, keepdims=True)
        h = -mu * np.log(mu)
        return h / h.sum(axis=-1, keepdims=True)

    return GeneratingFunction(
        name="extended_entropy",
        arity=n,
        fn=fn,
        grad=grad,
        hess=hess,
        dt=lambda x, t: np.zeros(x.shape[:-1]),
        elasticity=elasticity,
        homogeneity=DEGREE_ONE,
        weight_bounds=(0.0, 1.0),
        params={"kind": "extended_entropy"},
    )


def gibbs_shannon_entropy(n):
    """``-sum y_i log y_i`` as a function on a neighbourhood of the unit simplex.

    Positive only where every ``y_i < 1``; meant as input to
    :func:`fgp.genfun.extend_simplex_function`.
    """

    def fn(y, t):
        return -np.sum(y * np.log(y), axis=-1)

    def grad(y, t):
        return -(np.log(y) + 1.0)

    def hess(y, t):
        out = np.zeros(y.shape + (n,))
        idx = np.arange(n)
        out[..., idx, idx] = -1.0 / y
        return out

    return GeneratingFunction(
        name="gibbs_shannon_entropy",
        arity=n,
        fn=fn,
        grad=grad,
        hess=hess,
        dt=lambda y, t: np.zeros(y.shape[:-1]),
        homogeneity=INHOMOGENEOUS,
        params={"kind": "gibbs_shannon_entropy"},
    )


def shifted_call(K, sigma, horizon):
    """Black-Scholes price with zero rate for terminal value ``max(x, K)``.

    ``N(z0) x + (1 - N(z1)) K``; the delta is ``N(z0)``.
    """
    K, sigma, horizon = float(K), float(sigma), float(horizon)
    _positive([K, sigma, horizon], "K, sigma and T")

    def fn(x, t):
        return cf.shifted_claim_value(x[..., 0], K, sigma, t, horizon)

    def grad(x, t):
        (_, d_x), _, _ = cf.homogenized_call_derivatives(1.0, x[..., 0], K, sigma, t, horizon)
        return d_x[..., None]

    def hess(x, t):
        _, (_, _, d_xx), _ = cf.homogenized_call_derivatives(1.0, x[..., 0], K, sigma, t, horizon)
        return d_xx[..., None, None]

    def dt(x, t):
        return cf.homogenized_call_derivatives(1.0, x[..., 0], K, sigma, t, horizon)[2]

    def elasticity(x, t):
        (_, d_x), _, _ = cf.homogenized_call_derivatives(1.0, x[..., 0], K, sigma, t, horizon)
        return (x[..., 0] * d_x / fn(x, t))[..., None]

    return GeneratingFunction(
        name="shifted_call",
        arity=1,
        fn=fn,
        grad=grad,
        hess=hess,
        dt=dt,
        elasticity=elasticity,
        homogeneity=INHOMOGENEOUS,
        horizon=horizon,
        weight_bounds=(0.0, 1.0),
        params={"kind": "shifted_call", "K": K, "sigma": sigma, "T": horizon},
    )


def homogenized_call(K, sigma, horizon):
    """``N(z0) x + (1 - N(z1)) K x0`` in the arguments ``(x0, x)``."""
    K, sigma, horizon = float(K), float(sigma), float(horizon)
    _positive([K, sigma, horizon], "K, sigma and T")

    def fn(y, t):
        return cf.homogenized_call_value(y[..., 0], y[..., 1], K, sigma, t, horizon)

    def grad(y, t):
        (d0, dx), _, _ = cf.homogenized_call_derivatives(y[..., 0], y[..., 1], K, sigma, t, horizon)
        return np.stack([d0, dx], axis=-1)

    def hess(y, t):
        _, (d00, d0x, dxx), _ = cf.homogenized_call_derivatives(y[..., 0], y[..., 1], K, sigma, t, horizon)
        return np.stack([np.stack([d00, d0x], -1), np.stack([d0x, dxx], -1)], -2)

    def dt(y, t):
        return cf.homogenized_call_derivatives(y[..., 0], y[..., 1], K, sigma, t, horizon)[2]

    def elasticity(y, t):
        x0, x = y[..., 0], y[..., 1]
        t = np.broadcast_to(t, x.shape)
        live = horizon - t > 0
        risky = np.where(x >= K * x0, 1.0, 0.0)
        if np.any(live):
            z0, _ = cf.z_values(x[live], K, sigma, horizon - t[live], x0[live])
            risky[live] = x[live] * normal_cdf(z0) / fn(y[live], t[live])
        return np.stack([1.0 - risky, risky], axis=-1)

    return GeneratingFunction(
        name="homogenized_call",
        arity=2,
        fn=fn,
        grad=grad,
        hess=hess,
        dt=dt,
        elasticity=elasticity,
        homogeneity=DEGREE_ONE,
        horizon=horizon,
        weight_bounds=(0.0, 1.0),
        params={"kind": "homogenized_call", "K": K, "sigma": sigma, "T": horizon},
    )


def power_sum(p, sigma, horizon):
    """``sum_i exp((p_i - p_i^2) sigma_i^2 (t - T) / 2) x_i^{p_i}``, terminal value ``sum x_i^{p_i}``."""
    p = _vec(p, "p")
    sigma = _vec(sigma, "sigma", p.size)
    horizon = float(horizon)
    alpha = cf.power_sum_rates(p, sigma)
    n = p.size

    def terms(x, t):
        return cf.power_sum_terms(x, p, sigma, t, horizon)

    def fn(x, t):
        return terms(x, t).sum(axis=-1)

    def grad(x, t):
        return p * terms(x, t) / x

    def hess(x, t):
        out = np.zeros(x.shape + (n,))
        idx = np.arange(n)
        out[..., idx, idx] = p * (p - 1.0) * terms(x, t) / (x * x)
        return out

    def dt(x, t):
        return np.sum(alpha * terms(x, t), axis=-1)

    def elasticity(x, t):
        tm = terms(x, t)
        return p * tm / tm.sum(axis=-1, keepdims=True)

    degree_one = bool(np.all(p == 1.0))
    return GeneratingFunction(
        name="power_sum",
        arity=n,
        fn=fn,
        grad=grad,
        hess=hess,
        dt=dt,
        elasticity=elasticity,
        homogeneity=DEGREE_ONE if degree_one else INHOMOGENEOUS,
        horizon=horizon,
        weight_bounds=(min(0.0, p.min()), max(0.0, p.max())),
        params={"kind": "power_sum", "p": p.tolist(), "sigma": sigma.tolist(), "T": horizon},
    )


def pairwise_max():
    """``x_1 v x_2``; non-smooth, weights are ``1{x_1 >= x_2}`` and its complement."""

    def fn(x, t):
        return np.maximum(x[..., 0], x[..., 1])

    def elasticity(x, t):
        first = (x[..., 0] >= x[..., 1]).astype(float)
        return np.stack([first, 1.0 - first], axis=-1)

    return GeneratingFunction(
        name="max",
        arity=2,
        fn=fn,
        elasticity=elasticity,
        smooth=False,
        homogeneity=DEGREE_ONE,
        weight_bounds=(0.0, 1.0),
        params={"kind": "max"},
    )


BUILTIN_NAMES = (
    "geometric_mean",
    "corrected_geometric_mean",
    "diversity",
    "sqrt_claim",
    "extended_entropy",
    "shifted_call",
    "homogenized_call",
    "power_sum",
    "max",
    "homogenize",
    "extend_simplex",
)


def build(descriptor, n=None, cov=None, horizon=None):
    """Construct a builtin from ``{"kind": ..., **params}``.

    Missing parameters are filled from context: ``n`` (asset count), ``cov``
    (constant covariance matrix) and ``horizon``.  Volatilities default to the
    square roots of the covariance diagonal.
    """
    if not isinstance(descriptor, dict) or "kind" not in descriptor:
        raise ConfigError("claim", "descriptor must be an object with a 'kind' field")
    d = dict(descriptor)
    kind = d.pop("kind")
    cov = None if cov is None else np.asarray(cov, dtype=float)

    def need(key, value):
        if value is None:
            raise ConfigError(f"claim.{key}", f"required for kind {kind!r}")
        return value

    def sigma_default():
        if "sigma" in d:
            return d["sigma"]
        return np.sqrt(np.diag(need("cov", cov)))

    T = d.get("T", horizon)
    try:
        if kind == "geometric_mean":
            p = d.get("p", None if n is None else np.full(n, 1.0 / n))
            return geometric_mean(need("p", p))
        if kind == "corrected_geometric_mean":
            p = d.get("p", None if n is None else np.full(n, 1.0 / n))
            return corrected_geometric_mean(need("p", p), d.get("cov", need("cov", cov)))
        if kind == "diversity":
            return diversity(d.get("p", 0.5), int(d.get("n", need("n", n))))
        if kind == "sqrt_claim":
            return sqrt_claim(sigma_default(), need("T", T))
        if kind == "extended_entropy":
            return extended_entropy(int(d.get("n", need("n", n))))
        if kind == "shifted_call":
            return shifted_call(d.get("K", 1.0), float(np.ravel(sigma_default())[0]), need("T", T))
        if kind == "homogenized_call":
            return homogenized_call(d.get("K", 1.0), float(np.ravel(sigma_default())[0]), need("T", T))
        if kind == "power_sum":
            return power_sum(need("p", d.get("p")), sigma_default(), need("T", T))
        if kind == "max":
            return pairwise_max()
        if kind == "homogenize":
            return homogenize(build(need("base", d.get("base")), n=n, cov=cov, horizon=horizon))
        if kind == "extend_simplex":
            base = d.get("base", {"kind": "gibbs_shannon_entropy"})
            if base.get("kind") != "gibbs_shannon_entropy":
                raise ConfigError("claim.base", "only gibbs_shannon_entropy can be extended from JSON")
            return extend_simplex_function(gibbs_shannon_entropy(int(d.get("n", need("n", n)))))
    except DomainError as exc:
        raise ConfigError("claim", str(exc)) from exc
    raise ConfigError("claim.kind", f"unknown builtin {kind!r}; expected one of {', '.join(BUILTIN_NAMES)}")
