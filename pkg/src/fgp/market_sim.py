"""Market models with constant coefficients and exact log-space path simulation.

Prices follow ``d log X_i = gamma_i dt + sum_l zeta_{i,l} dW_l`` and the
riskless asset follows ``d log X_0 = gamma_0 dt``.  With constant
coefficients the log-space update is exact in distribution, so paths are
strictly positive by construction.

Randomness: each path owns a Philox stream keyed by ``(seed, path_index)``.
Standard normals are produced by the Box-Muller transform from the stream's
uniform doubles; this choice is pinned because paths must be bit-reproducible.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import DomainError, SimulationError


def _frozen(a, shape=None):
    arr = np.array(a, dtype=float)
    if shape is not None:
        arr = arr.reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MarketModel:
    """Constant-coefficient market of ``n`` risky assets driven by ``d`` Brownian motions.

    Attributes
    ----------
    n, d : int
        Number of risky assets and of Brownian drivers (``d >= n``).
    growth : ndarray, shape (n,)
        Growth rates gamma_i.
    vol : ndarray, shape (n, d)
        Volatility loadings zeta_{i,l}.
    riskless_rate : float
        Interest rate gamma_0 of the riskless asset.
    initial_prices : ndarray, shape (n,)
        X(0), strictly positive.
    initial_riskless : float
        X_0(0), strictly positive.
    """

    n: int
    d: int
    growth: np.ndarray
    vol: np.ndarray
    riskless_rate: float = 0.0
    initial_prices: np.ndarray = None
    initial_riskless: float = 1.0

    def __post_init__(self):
        n, d = int(self.n), int(self.d)
        if n < 1:
            raise DomainError(f"n must be >= 1, got {n}")
        if d < n:
            raise DomainError(f"need d >= n, got d={d} < n={n}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "d", d)
        growth = np.broadcast_to(np.asarray(self.growth, dtype=float), (n,))
        object.__setattr__(self, "growth", _frozen(growth))
        vol = np.asarray(self.vol, dtype=float)
        if vol.shape != (n, d):
            raise DomainError(f"vol must have shape ({n}, {d}), got {vol.shape}")
        object.__setattr__(self, "vol", _frozen(vol))
        x0 = np.ones(n) if self.initial_prices is None else self.initial_prices
        x0 = np.broadcast_to(np.asarray(x0, dtype=float), (n,))
        if not np.all(x0 > 0) or not np.all(np.isfinite(x0)):
            raise DomainError(f"initial prices must be strictly positive, got {x0}")
        object.__setattr__(self, "initial_prices", _frozen(x0))
        if not self.initial_riskless > 0:
            raise DomainError(f"initial riskless price must be positive, got {self.initial_riskless}")
        object.__setattr__(self, "initial_riskless", float(self.initial_riskless))
        object.__setattr__(self, "riskless_rate", float(self.riskless_rate))
        if not all(np.isfinite([self.riskless_rate, self.initial_riskless])) or not (
            np.all(np.isfinite(self.growth)) and np.all(np.isfinite(self.vol))
        ):
            raise DomainError("market coefficients must be finite")
        sigma = self.vol @ self.vol.T
        if np.linalg.eigvalsh(sigma).min() < -1e-12:
            raise DomainError("implied covariance matrix is not positive semidefinite")

    @classmethod
    def diagonal(cls, sigmas, growth=0.0, riskless_rate=0.0, initial_prices=None, initial_riskless=1.0):
        """Uncorrelated assets with volatilities ``sigmas`` (``d == n``)."""
        sigmas = np.atleast_1d(np.asarray(sigmas, dtype=float))
        n = sigmas.size
        return cls(n=n, d=n, growth=growth, vol=np.diag(sigmas), riskless_rate=riskless_rate,
                   initial_prices=initial_prices, initial_riskless=initial_riskless)

    def to_dict(self):
        return {
            "n": self.n,
            "d": self.d,
            "growth": self.growth.tolist(),
            "vol": self.vol.tolist(),
            "riskless_rate": self.riskless_rate,
            "initial_prices": self.initial_prices.tolist(),
            "initial_riskless": self.initial_riskless,
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        vol = np.asarray(data["vol"], dtype=float)
        if vol.ndim == 1:
            vol = np.diag(vol)
        n = data.get("n", vol.shape[0])
        d = data.get("d", vol.shape[1] if vol.ndim == 2 else n)
        return cls(
            n=n,
            d=d,
            growth=data.get("growth", 0.0),
            vol=vol,
            riskless_rate=data.get("riskless_rate", 0.0),
            initial_prices=data.get("initial_prices"),
            initial_riskless=data.get("initial_riskless", 1.0),
        )

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class CovarianceView:
    """Covariance processes sigma_ij(t); constant in this version.

    The riskless asset is not included; ``augmented()`` prepends the zero
    row and column it would carry.
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DomainError(f"covariance must be square, got shape {m.shape}")
        if not np.allclose(m, m.T, rtol=0, atol=1e-14 * max(1.0, np.abs(m).max())):
            raise DomainError("covariance must be symmetric")
        object.__setattr__(self, "matrix", _frozen(0.5 * (m + m.T)))

    def __call__(self, t=0.0):
        return self.matrix

    @property
    def n(self):
        return self.matrix.shape[0]

    def variances(self):
        return np.diag(self.matrix).copy()

    def augmented(self):
        """Covariance over ``(X_0, X_1, ..., X_n)`` with sigma_{0j} = sigma_{i0} = 0."""
        out = np.zeros((self.n + 1, self.n + 1))
        out[1:, 1:] = self.matrix
        return CovarianceView(out)


def covariance(model):
    """Return sigma_ij = sum_l zeta_{i,l} zeta_{j,l} for ``model``."""
    return CovarianceView(model.vol @ model.vol.T)


def as_covariance(cov):
    return cov if isinstance(cov, CovarianceView) else CovarianceView(np.atleast_2d(cov))


@dataclass(frozen=True, eq=False)
class PricePath:
    """One discretised realisation of ``(X_0, X_1, ..., X_n)`` on a uniform grid.

    ``increments`` holds the Brownian increments dW (variance ``dt``), not the
    unit normals, so that grids can be coarsened by summing them.
    """

    grid: np.ndarray
    log_prices: np.ndarray
    riskless: np.ndarray
    seed: int | None
    increments: np.ndarray
    path_index: int = 0
    discounted: bool = False

    @property
    def steps(self):
        return self.grid.size - 1

    @property
    def horizon(self):
        return float(self.grid[-1])

    @property
    def dt(self):
        return self.horizon / self.steps

    @property
    def n(self):
        return self.log_prices.shape[1]

    @property
    def prices(self):
        return np.exp(self.log_prices)

    @property
    def log_riskless(self):
        return np.log(self.riskless)

    def to_csv(self):
        """Render as CSV with header ``t,X0,X1,...,Xn`` at 17 significant digits."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "X0"] + [f"X{i + 1}" for i in range(self.n)])
        prices = self.prices
        for k in range(self.grid.size):
            row = [self.grid[k], self.riskless[k], *prices[k]]
            writer.writerow([format_float(v) for v in row])
        return buf.getvalue()

    def write_csv(self, path):
        Path(path).write_text(self.to_csv())


def format_float(v):
    return f"{float(v):.17g}"


def read_path_csv(path):
    """Read a path CSV back into arrays ``(t, X0, X)``."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1], data[:, 2:]


def time_grid(horizon, steps):
    if not horizon > 0:
        raise DomainError(f"horizon must be positive, got {horizon}")
    if int(steps) != steps or steps < 1:
        raise DomainError(f"steps must be a positive integer, got {steps}")
    steps = int(steps)
    return horizon * np.arange(steps + 1) / steps


def path_rng(seed, path_index=0):
    """Philox generator for stream ``(seed, path_index)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(path_index)])))


def box_muller(rng, size):
    """``size`` standard normals from pairs of uniforms (cosine branch first)."""
    pairs = (size + 1) // 2
    u1 = 1.0 - rng.random(pairs)  # in (0, 1]
    u2 = rng.random(pairs)
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    z = np.empty(2 * pairs)
    z[0::2] = r * np.cos(theta)
    z[1::2] = r * np.sin(theta)
    return z[:size]


def brownian_increments(model, horizon, steps, seed, path_index=0):
    dt = horizon / steps
    z = box_muller(path_rng(seed, path_index), steps * model.d).reshape(steps, model.d)
    return np.sqrt(dt) * z


def path_from_increments(model, horizon, increments, seed=None, path_index=0):
    """Build the exact log-space path driven by the given Brownian increments."""
    increments = np.asarray(increments, dtype=float)
    steps = increments.shape[0]
    grid = time_grid(horizon, steps)
    w = np.vstack([np.zeros((1, model.d)), np.cumsum(increments, axis=0)])
    log_prices = (
        np.log(model.initial_prices)[None, :]
        + grid[:, None] * model.growth[None, :]
        + w @ model.vol.T
    )
    riskless = model.initial_riskless * np.exp(model.riskless_rate * grid)
    with np.errstate(over="ignore"):
        prices = np.exp(log_prices)
    bad = ~np.isfinite(prices) | ~(prices > 0)
    if bad.any():
        k, i = np.argwhere(bad)[0]
        raise SimulationError(f"non-finite price X{i + 1} at node {k} (t={grid[k]:.6g})")
    if not np.all(np.isfinite(riskless)) or not np.all(riskless > 0):
        k = int(np.argmax(~np.isfinite(riskless) | ~(riskless > 0)))
        raise SimulationError(f"non-finite riskless price at node {k} (t={grid[k]:.6g})")
    for a in (grid, log_prices, riskless, increments):
        a.setflags(write=False)
    return PricePath(grid=grid, log_prices=log_prices, riskless=riskless, seed=seed,
                     increments=increments, path_index=path_index)


def simulate_path(model, horizon, steps, seed, path_index=0):
    """Simulate one path of ``model`` on ``steps`` uniform steps up to ``horizon``.

    The result is a pure function of ``(model, horizon, steps, seed, path_index)``.
    """
    if seed is None:
        raise DomainError("an explicit seed is required")
    time_grid(horizon, steps)
    dw = brownian_increments(model, horizon, int(steps), seed, path_index)
    return path_from_increments(model, horizon, dw, seed=seed, path_index=path_index)


def simulate_paths(model, horizon, steps, seed, count):
    return [simulate_path(model, horizon, steps, seed, i) for i in range(count)]


def coarsen(path, model, factor):
    """Re-simulate ``path`` on a grid ``factor`` times coarser using the same noise."""
    factor = int(factor)
    if factor < 1 or path.steps % factor:
        raise DomainError(f"cannot coarsen {path.steps} steps by {factor}")
    dw = path.increments.reshape(path.steps // factor, factor, -1).sum(axis=1)
    out = path_from_increments(model, path.horizon, dw, seed=path.seed, path_index=path.path_index)
    if path.discounted:
        out = discount_path(out)
    return out


def discount_path(path):
    """Express ``path`` in units of the riskless asset: ``(1, X_1/X_0, ..., X_n/X_0)``."""
    log_x0 = np.log(path.riskless)
    log_prices = path.log_prices - log_x0[:, None]
    riskless = np.ones_like(path.riskless)
    log_prices.setflags(write=False)
    riskless.setflags(write=False)
    return replace(path, log_prices=log_prices, riskless=riskless, discounted=True)


def undiscount_path(discounted, riskless):
    """Inverse of :func:`discount_path` given the original riskless series."""
    riskless = np.asarray(riskless, dtype=float)
    log_prices = discounted.log_prices + np.log(riskless)[:, None]
    return replace(discounted, log_prices=log_prices, riskless=riskless, discounted=False)
