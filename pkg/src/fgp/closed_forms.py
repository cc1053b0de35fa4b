"""Vectorised closed-form solutions shared by the catalog and the pricing code."""

from __future__ import annotations

import numpy as np

from .normal import normal_cdf, normal_pdf


def _tau(t, horizon):
    return horizon - np.asarray(t, dtype=float)


def z_values(x, K, sigma, tau, x0=1.0):
    """``z0 = (log(x / (K x0)) + sigma^2 tau / 2) / (sigma sqrt tau)``, ``z1 = z0 - sigma sqrt tau``.

    Only valid for ``tau > 0``.
    """
    s = sigma * np.sqrt(tau)
    z0 = (np.log(x / (K * x0)) + 0.5 * s * s) / s
    return z0, z0 - s


def homogenized_call_value(x0, x, K, sigma, t, horizon):
    """``N(z0) x + (1 - N(z1)) K x0``; terminal value ``max(x, K x0)``."""
    x0, x, t = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (x0, x, t)))
    tau = _tau(t, horizon)
    live = tau > 0
    out = np.array(np.maximum(x, K * x0), dtype=float)
    if np.any(live):
        z0, z1 = z_values(x[live], K, sigma, tau[live], x0[live])
        # 1 - N(z1) == N(-z1) without cancellation
        out[live] = normal_cdf(z0) * x[live] + normal_cdf(-z1) * K * x0[live]
    return out


def homogenized_call_derivatives(x0, x, K, sigma, t, horizon):
    """Gradient ``(D_x0, D_x)``, Hessian entries ``(D_00, D_0x, D_xx)`` and ``D_t`` for ``tau > 0``."""
    tau = _tau(t, horizon)
    z0, z1 = z_values(x, K, sigma, tau, x0)
    s = sigma * np.sqrt(tau)
    pdf = normal_pdf(z0)
    d_x = normal_cdf(z0)
    d_0 = normal_cdf(-z1) * K
    d_xx = pdf / (x * s)
    d_0x = -pdf / (x0 * s)
    d_00 = x * pdf / (x0 * x0 * s)
    d_t = -0.5 * sigma * x * pdf / np.sqrt(tau)
    return (d_0, d_x), (d_00, d_0x, d_xx), d_t


def shifted_claim_value(x, K, sigma, t, horizon):
    """``N(z0) x + (1 - N(z1)) K``, the solution with terminal value ``max(x, K)``."""
    return homogenized_call_value(1.0, x, K, sigma, t, horizon)


def call_value(x, K, r, sigma, t, horizon):
    """Black-Scholes call ``N(z0) x - N(z1) K e^{r(t-T)}``; terminal ``(x - K)^+``."""
    x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
    tau = _tau(t, horizon)
    live = tau > 0
    out = np.array(np.maximum(x - K, 0.0), dtype=float)
    if np.any(live):
        disc = np.exp(-r * tau[live])
        z0, z1 = z_values(x[live], K, sigma, tau[live], disc)
        out[live] = normal_cdf(z0) * x[live] - normal_cdf(z1) * K * disc
    return out


def power_sum_value(x, p, sigma, t, horizon):
    """``sum_i exp((p_i - p_i^2) sigma_i^2 (t - T) / 2) x_i^{p_i}``."""
    x = np.asarray(x, dtype=float)
    return np.sum(power_sum_terms(x, p, sigma, t, horizon), axis=-1)


def power_sum_terms(x, p, sigma, t, horizon):
    p = np.asarray(p, dtype=float)
    alpha = power_sum_rates(p, sigma)
    t = np.asarray(t, dtype=float)[..., None]
    return np.exp(alpha * (t - horizon)) * np.asarray(x, dtype=float) ** p


def power_sum_rates(p, sigma):
    p = np.asarray(p, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    return 0.5 * (p - p * p) * sigma * sigma


def sqrt_claim_factors(sigma, t, horizon):
    """``a_i = exp(sigma_i^2 (t - T) / 8)``."""
    sigma = np.asarray(sigma, dtype=float)
    t = np.asarray(t, dtype=float)[..., None]
    return np.exp(sigma * sigma * (t - horizon) / 8.0)


def sqrt_claim_value(x, sigma, t, horizon):
    """``sum_i x_i + sum_{i != j} a_i a_j sqrt(x_i x_j)``."""
    x = np.asarray(x, dtype=float)
    a = sqrt_claim_factors(sigma, t, horizon)
    s = np.sqrt(x)
    w = np.sum(a * s, axis=-1)
    return np.sum(x * (1.0 - a * a), axis=-1) + w * w
