"""Portfolios generated by a function along a simulated price path.

Weights are ``pi_i = x_i D_i V / V``; the riskless asset takes the rest.
Both the portfolio log-value and the analytic drift are integrated with the
left-point (Ito) rule on the path's grid.  Derivatives are never evaluated at
the horizon; the last step uses those at ``t_{M-1}``.

A function of arity ``n`` takes the risky prices.  A function of arity
``n + 1`` takes ``(X_0, X_1, ..., X_n)`` with the riskless asset first, as
produced by :func:`fgp.genfun.homogenize`.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import BoundednessError, DomainError, SimulationError
from .genfun import DEGREE_ONE
from .market_sim import as_covariance, format_float

DEFAULT_WEIGHT_BOUND = 1e3


@dataclass(frozen=True)
class WeightVector:
    """Portfolio weights at time ``t``: riskless ``pi0`` and risky ``pi``."""

    pi0: float
    pi: np.ndarray
    t: float

    @property
    def full(self):
        return np.concatenate([[self.pi0], self.pi])


@dataclass(frozen=True, eq=False)
class PortfolioTrajectory:
    """Portfolio generated by ``name`` along one path.

    ``weights[k]`` (columns ``pi0, pi1..pin``) and ``egr[k]`` are held over
    ``[t_k, t_{k+1})`` and have ``M`` rows; the series ``log_value``,
    ``log_generator``, ``phi_analytic`` and ``phi_residual`` have ``M + 1``.
    ``phi_analytic`` is NaN for non-smooth functions.
    """

    name: str
    grid: np.ndarray
    weights: np.ndarray
    log_value: np.ndarray
    log_generator: np.ndarray
    phi_analytic: np.ndarray
    phi_residual: np.ndarray
    egr: np.ndarray
    drift_rate: np.ndarray

    @property
    def value(self):
        return np.exp(self.log_value)

    @property
    def gap(self):
        """``log Z - log V - Phi`` measured from time zero."""
        return self.phi_residual - self.phi_analytic

    def to_csv(self):
        """CSV with header ``t,pi0,pi1..pin,logZ,phi_analytic,phi_residual,egr``.

        The terminal row carries ``nan`` weights and excess growth rate: no
        position is held after the horizon.
        """
        n = self.weights.shape[1] - 1
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"pi{i}" for i in range(n + 1)] + ["logZ", "phi_analytic", "phi_residual", "egr"])
        m = self.weights.shape[0]
        for k in range(self.grid.size):
            pis = self.weights[k] if k < m else np.full(n + 1, np.nan)
            egr = self.egr[k] if k < m else np.nan
            row = [self.grid[k], *pis, self.log_value[k], self.phi_analytic[k], self.phi_residual[k], egr]
            w.writerow([format_float(v) for v in row])
        return buf.getvalue()


def _arguments(f, log_prices, log_riskless):
    """Prices in the argument order of ``f`` and a flag for the riskless slot."""
    n = log_prices.shape[-1]
    if f.arity == n:
        return np.exp(log_prices), False
    if f.arity == n + 1:
        return np.exp(np.concatenate([log_riskless[..., None], log_prices], axis=-1)), True
    raise DomainError(f"{f.name} has arity {f.arity}; the market has {n} risky assets")


def _normalise(f, w_args, riskless_slot):
    """Full weight matrix ``(..., n+1)`` with the riskless column first."""
    if riskless_slot:
        full = w_args.copy()
        extra = 1.0 - full.sum(axis=-1)
    else:
        full = np.concatenate([np.zeros(w_args.shape[:-1] + (1,)), w_args], axis=-1)
        extra = 1.0 - w_args.sum(axis=-1)
    if f.homogeneity == DEGREE_ONE:
        # Euler forces the weights to sum to one; push rounding residue into the largest slot
        cols = full if riskless_slot else full[..., 1:]
        idx = np.argmax(np.abs(cols), axis=-1)[..., None]
        # a second pass catches the rare case where the corrected sum rounds away from one
        for _ in range(3):
            resid = 1.0 - cols.sum(axis=-1)
            if not np.any(resid != 0):
                break
            np.put_along_axis(cols, idx, np.take_along_axis(cols, idx, -1) + resid[..., None], -1)
    else:
        full[..., 0] += extra
    return full


def weight_matrix(f, log_prices, log_riskless, t, bound=DEFAULT_WEIGHT_BOUND, backend="auto"):
    """Vectorised weights over nodes: ``(..., n+1)`` with the riskless column first."""
    args, slot = _arguments(f, log_prices, log_riskless)
    w_args = f.log_elasticity(args, t, backend)
    full = _normalise(f, w_args, slot)
    if not np.all(np.isfinite(full)):
        raise SimulationError(f"non-finite weights generated by {f.name}")
    if bound is not None and np.any(np.abs(full) > bound):
        worst = float(np.max(np.abs(full)))
        raise BoundednessError(f"{f.name} produced weight {worst:.6g} beyond bound {bound:g}")
    return full


def weights_at(f, x, t, x0=1.0, bound=DEFAULT_WEIGHT_BOUND, backend="auto"):
    """Weights generated by ``f`` at prices ``x`` (and riskless price ``x0``)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not np.all(x > 0) or not x0 > 0:
        raise DomainError("prices must be strictly positive")
    full = weight_matrix(f, np.log(x), np.log(x0), t, bound, backend)
    return WeightVector(pi0=float(full[0]), pi=full[1:], t=float(t))


def excess_growth(weights, cov, t=0.0):
    """Excess growth rate ``(sum pi_i s_ii - sum pi_i pi_j s_ij) / 2`` over the risky assets.

    ``weights`` is a :class:`WeightVector`, a risky-weight array of shape
    ``(..., n)``, or a full ``(..., n+1)`` array with the riskless column first.
    """
    sigma = as_covariance(cov)(t)
    n = sigma.shape[0]
    w = weights.pi if isinstance(weights, WeightVector) else np.asarray(weights, dtype=float)
    if w.shape[-1] == n + 1:
        w = w[..., 1:]
    quad = np.einsum("...i,ij,...j->...", w, sigma, w)
    return 0.5 * (w @ np.diag(sigma) - quad)


def drift_rate(f, log_prices, log_riskless, t, cov, gamma0, backend="auto"):
    """Analytic drift rate ``dPhi/dt`` at the given nodes.

    ``-1/2 sum_ij D_ij V x_i x_j s_ij / V - D_t V / V + gamma0 (1 - sum_i pi_i)``,
    with the covariance augmented by a zero riskless row when ``f`` takes ``X_0``.
    """
    args, slot = _arguments(f, log_prices, log_riskless)
    sigma = as_covariance(cov)
    s = sigma.augmented().matrix if slot else sigma.matrix
    v = f.value(args, t)
    h = f.hessian(args, t, backend)
    scaled = h * args[..., :, None] * args[..., None, :] / v[..., None, None]
    rate = -0.5 * np.einsum("...ij,ij->...", scaled, s) - f.time_derivative(args, t, backend) / v
    if f.homogeneity != DEGREE_ONE:
        elast = f.log_elasticity(args, t, backend)
        rate = rate + np.asarray(gamma0) * (1.0 - elast.sum(axis=-1))
    return rate


def integrate_value(f, path, cov, initial_log_value=None, bound=DEFAULT_WEIGHT_BOUND,
                    scheme="log", backend="auto"):
    """Generate the portfolio of ``f`` along ``path`` and integrate its value.

    ``scheme="log"`` advances ``log Z`` by ``sum pi_i dlog X_i + gamma* dt``;
    ``scheme="arithmetic"`` compounds ``Z`` by ``sum pi_i X_i(t+dt)/X_i(t)``.
    Both hold weights fixed at the left endpoint.  ``Z(0)`` defaults to
    ``V(X(0), 0)``.
    """
    if scheme not in ("log", "arithmetic"):
        raise ValueError(f"unknown scheme {scheme!r}")
    sigma = as_covariance(cov)
    if sigma.n != path.n:
        raise DomainError(f"covariance is {sigma.n}x{sigma.n} but the path has {path.n} assets")
    grid = path.grid
    dt = path.dt
    lx = path.log_prices
    l0 = path.log_riskless
    left = slice(0, -1)
    weights = weight_matrix(f, lx[left], l0[left], grid[left], bound, backend)
    egr = excess_growth(weights, sigma)

    args, _ = _arguments(f, lx, l0)
    log_gen = np.log(f.value(args, grid))
    dlx = np.diff(lx, axis=0)
    dl0 = np.diff(l0)
    if scheme == "log":
        step = weights[:, 0] * dl0 + np.sum(weights[:, 1:] * dlx, axis=1) + egr * dt
    else:
        growth = weights[:, 0] * np.exp(dl0) + np.sum(weights[:, 1:] * np.exp(dlx), axis=1)
        if np.any(~(growth > 0)):
            k = int(np.argmax(~(growth > 0)))
            raise SimulationError(f"portfolio value of {f.name} hit zero on step {k}")
        step = np.log(growth)
    start = log_gen[0] if initial_log_value is None else float(initial_log_value)
    log_value = np.concatenate([[start], start + np.cumsum(step)])
    if not np.all(np.isfinite(log_value)):
        raise SimulationError(f"non-finite portfolio value for {f.name}")

    if f.smooth:
        gamma0 = dl0 / dt
        rate = drift_rate(f, lx[left], l0[left], grid[left], sigma, gamma0, backend)
        phi = np.concatenate([[0.0], np.cumsum(rate * dt)])
    else:
        rate = np.full(grid.size - 1, np.nan)
        phi = np.full(grid.size, np.nan)
    residual = (log_value - log_value[0]) - (log_gen - log_gen[0])
    return PortfolioTrajectory(
        name=f.name,
        grid=grid,
        weights=weights,
        log_value=log_value,
        log_generator=log_gen,
        phi_analytic=phi,
        phi_residual=residual,
        egr=egr,
        drift_rate=rate,
    )


def decomposition_check(f, path, cov, **kwargs):
    """Max over nodes of ``|log Z - log V - Phi|`` (measured from time zero)."""
    traj = integrate_value(f, path, cov, **kwargs)
    return float(np.max(np.abs(traj.gap)))


def local_time_drift_check(path, cov=None, f=None):
    """Residual drift series of the pairwise-maximum portfolio along a two-asset path.

    The drift is minus the local time of ``log(X_1/X_2)`` at zero, so the
    series is non-increasing; it stays at zero while the paths do not cross.
    """
    from .catalog import pairwise_max

    if path.n != 2:
        raise DomainError("local-time check needs exactly two assets")
    f = f or pairwise_max()
    cov = np.zeros((2, 2)) if cov is None else cov
    return integrate_value(f, path, cov).phi_residual


def monotonicity_band(series):
    """Rounding band for node-to-node increases of a series of logarithms."""
    scale = max(1.0, float(np.max(np.abs(series))))
    return 3 * 16 * np.finfo(float).eps * scale
