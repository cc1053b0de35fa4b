"""Generating functions: positive C^{2,1} functions of prices and time.

A :class:`GeneratingFunction` wraps a vectorised value function together
with whatever analytic derivatives are known.  Missing derivatives fall back
to central finite differences.  All callables take ``x`` of shape
``(..., arity)`` and ``t`` broadcastable to ``x.shape[:-1]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DifferentiationError, DomainError, PositivityError

DEGREE_ONE = "degree1"
INHOMOGENEOUS = "inhomogeneous"
UNKNOWN = "unknown"

# relative finite-difference steps
GRAD_STEP = 1e-5
HESS_STEP = 1e-3
TIME_STEP = 1e-5

Array = np.ndarray


def _prepare(x, t):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    t = np.broadcast_to(np.asarray(t, dtype=float), x.shape[:-1])
    return x, t


@dataclass(frozen=True, eq=False)
class GeneratingFunction:
    """Evaluable generating function with optional analytic derivatives.

    ``elasticity`` returns ``x_i D_i V / V`` directly when a closed form is
    available; it is the only way to obtain weights from a non-smooth
    function.  ``weight_bounds`` is the closed interval the builtin promises
    its weights stay in.
    """

    name: str
    arity: int
    fn: Callable[[Array, Array], Array]
    grad: Callable[[Array, Array], Array] | None = None
    hess: Callable[[Array, Array], Array] | None = None
    dt: Callable[[Array, Array], Array] | None = None
    elasticity: Callable[[Array, Array], Array] | None = None
    smooth: bool = True
    homogeneity: str = UNKNOWN
    horizon: float | None = None
    weight_bounds: tuple[float, float] | None = None
    params: dict = field(default_factory=dict)

    def __repr__(self):
        return f"GeneratingFunction({self.name!r}, arity={self.arity}, {self.homogeneity})"

    @property
    def has_analytic_derivatives(self):
        return self.grad is not None and self.hess is not None and self.dt is not None

    @property
    def time_dependent(self):
        return self.horizon is not None

    def value(self, x, t=0.0):
        x, t = _prepare(x, t)
        self._check_x(x)
        v = np.asarray(self.fn(x, t), dtype=float)
        if not np.all(v > 0):
            bad = v[~(v > 0)].ravel()[0]
            raise PositivityError(f"{self.name} returned nonpositive value {bad}")
        return v

    __call__ = value

    def _check_x(self, x):
        if x.shape[-1] != self.arity:
            raise DomainError(f"{self.name} expects {self.arity} prices, got {x.shape[-1]}")
        if not np.all(x > 0):
            raise DomainError(f"{self.name}: prices must be strictly positive")

    def _backend(self, analytic, backend):
        if backend not in ("auto", "analytic", "fd"):
            raise ValueError(f"unknown backend {backend!r}")
        if not self.smooth:
            raise DifferentiationError(f"{self.name} is not smooth; derivatives are unavailable")
        if backend == "analytic" and analytic is None:
            raise DifferentiationError(f"{self.name} has no analytic derivative")
        return analytic is not None and backend != "fd"

    def gradient(self, x, t=0.0, backend="auto"):
        x, t = _prepare(x, t)
        self._check_x(x)
        if self._backend(self.grad, backend):
            return np.asarray(self.grad(x, t), dtype=float)
        return gradient_fd(self, x, t)

    def hessian(self, x, t=0.0, backend="auto"):
        x, t = _prepare(x, t)
        self._check_x(x)
        if self._backend(self.hess, backend):
            return np.asarray(self.hess(x, t), dtype=float)
        return hessian_fd(self, x, t)

    def time_derivative(self, x, t=0.0, backend="auto"):
        x, t = _prepare(x, t)
        self._check_x(x)
        if not self.smooth:
            raise DifferentiationError(f"{self.name} is not smooth; derivatives are unavailable")
        if not self.time_dependent and self.dt is None:
            return np.zeros(x.shape[:-1])
        if self._backend(self.dt, backend):
            return np.asarray(self.dt(x, t), dtype=float) * np.ones(x.shape[:-1])
        return dt_fd(self, x, t)

    def log_elasticity(self, x, t=0.0, backend="auto"):
        """``x_i D_i V(x,t) / V(x,t)``, shape ``(..., arity)``."""
        x, t = _prepare(x, t)
        self._check_x(x)
        if self.elasticity is not None and backend != "fd":
            e = np.asarray(self.elasticity(x, t), dtype=float)
            return np.broadcast_to(e, x.shape).copy()
        return x * self.gradient(x, t, backend) / self.value(x, t)[..., None]


def evaluate(f, x, t=0.0):
    """Value of ``f`` at ``(x, t)`` with domain checks on ``t``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise DomainError(f"time must be nonnegative, got {t}")
    if f.horizon is not None and np.any(t_arr > f.horizon):
        raise DomainError(f"time {t} is past the horizon {f.horizon}")
    return f.value(x, t)


def _raw(f, x, t):
    # value without positivity checks, for difference quotients
    return np.asarray(f.fn(x, t), dtype=float)


def _steps(x, rel, h):
    if h is None:
        step = rel * np.maximum(np.abs(x), 1.0)
    else:
        step = np.broadcast_to(np.asarray(h, dtype=float), x.shape) * np.ones_like(x)
    # stay inside the positive orthant
    return np.minimum(step, 0.25 * x)


def _finite(q, what, name):
    if not np.all(np.isfinite(q)):
        raise DifferentiationError(f"non-finite {what} difference quotient for {name}")
    return q


def gradient_fd(f, x, t=0.0, h=None):
    """Central-difference gradient with relative step ``1e-5 * max(x_i, 1)``."""
    x, t = _prepare(x, t)
    step = _steps(x, GRAD_STEP, h)
    out = np.empty_like(x)
    for i in range(x.shape[-1]):
        e = np.zeros_like(x)
        e[..., i] = step[..., i]
        out[..., i] = (_raw(f, x + e, t) - _raw(f, x - e, t)) / (2 * step[..., i])
    return _finite(out, "gradient", f.name)


def _hessian_central(f, x, t, step):
    n = x.shape[-1]
    f0 = _raw(f, x, t)
    out = np.empty(x.shape + (n,))
    for i in range(n):
        ei = np.zeros_like(x)
        ei[..., i] = step[..., i]
        out[..., i, i] = (_raw(f, x + ei, t) - 2 * f0 + _raw(f, x - ei, t)) / step[..., i] ** 2
        for j in range(i + 1, n):
            ej = np.zeros_like(x)
            ej[..., j] = step[..., j]
            q = (
                _raw(f, x + ei + ej, t)
                - _raw(f, x + ei - ej, t)
                - _raw(f, x - ei + ej, t)
                + _raw(f, x - ei - ej, t)
            ) / (4 * step[..., i] * step[..., j])
            out[..., i, j] = q
            out[..., j, i] = q
    return out


def hessian_fd(f, x, t=0.0, h=None):
    """Central-difference Hessian with one Richardson step, symmetrised as ``(H + H^T) / 2``.

    Combines the second-order central quotients at steps ``h`` and ``2h``
    (``h = 1e-3 * max(x_i, 1)``) into a fourth-order estimate.  A single
    central quotient has a rounding floor near ``sqrt(eps)`` relative to
    ``f / (x^2 f'')``, too coarse for a 1e-6 cross-check.
    """
    x, t = _prepare(x, t)
    step = _steps(x, HESS_STEP, h)
    step = np.minimum(step, 0.125 * x)
    fine = _hessian_central(f, x, t, step)
    coarse = _hessian_central(f, x, t, 2 * step)
    out = (4 * fine - coarse) / 3
    out = 0.5 * (out + np.swapaxes(out, -1, -2))
    return _finite(out, "Hessian", f.name)


def dt_fd(f, x, t=0.0, h=None):
    """Time derivative by central differences, one-sided backward within ``2h`` of the horizon.

    The backward rule is second order: ``(3f(t) - 4f(t-h) + f(t-2h)) / 2h``.
    It never samples at or past the horizon unless ``t`` itself is there.
    """
    x, t = _prepare(x, t)
    h = TIME_STEP * np.maximum(np.abs(t), 1.0) if h is None else np.broadcast_to(h, t.shape) * 1.0
    out = np.empty(t.shape)
    backward = np.zeros(t.shape, dtype=bool)
    if f.horizon is not None:
        backward = f.horizon - t < 2 * h
    central = ~backward
    if central.any():
        xc, tc, hc = x[central], t[central], h[central]
        out[central] = (_raw(f, xc, tc + hc) - _raw(f, xc, tc - hc)) / (2 * hc)
    if backward.any():
        xb, tb, hb = x[backward], t[backward], h[backward]
        out[backward] = (3 * _raw(f, xb, tb) - 4 * _raw(f, xb, tb - hb) + _raw(f, xb, tb - 2 * hb)) / (2 * hb)
    return _finite(out, "time", f.name)


def euler_check(f, x, t=0.0, backend="auto"):
    """Degree-one Euler residual ``sum_i x_i D_i f - f``.

    Zero iff ``f`` is homogeneous of degree one along the ray through ``x``.
    """
    x, t = _prepare(x, t)
    g = f.gradient(x, t, backend)
    return np.sum(x * g, axis=-1) - f.value(x, t)


def relative_euler_residual(f, x, t=0.0, backend="auto"):
    x, t = _prepare(x, t)
    return np.abs(euler_check(f, x, t, backend)) / f.value(x, t)


def homogenize(f):
    """Lift ``f`` of arity n to ``V_hat(x0, x, t) = x0 * f(x / x0, t)`` of arity n+1.

    The riskless slot comes first.  The result is homogeneous of degree one,
    and ``V_hat(1, x, t) == f(x, t)`` exactly.
    """
    n = f.arity

    def split(y):
        x0 = y[..., 0]
        return x0, y[..., 1:] / x0[..., None]

    def fn(y, t):
        x0, u = split(y)
        return x0 * np.asarray(f.fn(u, t), dtype=float)

    grad = hess = dt = None
    if f.smooth and f.grad is not None:
        def grad(y, t):
            _, u = split(y)
            g = f.grad(u, t)
            d0 = np.asarray(f.fn(u, t)) - np.sum(u * g, axis=-1)
            return np.concatenate([d0[..., None], g], axis=-1)

    if f.smooth and f.hess is not None:
        def hess(y, t):
            x0, u = split(y)
            h = np.asarray(f.hess(u, t)) / x0[..., None, None]
            hu = np.einsum("...ij,...j->...i", h, u)
            out = np.empty(y.shape + (n + 1,))
            out[..., 1:, 1:] = h
            out[..., 0, 1:] = -hu
            out[..., 1:, 0] = -hu
            out[..., 0, 0] = np.sum(u * hu, axis=-1)
            return out

    if f.dt is not None or not f.time_dependent:
        def dt(y, t):
            x0, u = split(y)
            if f.dt is None:
                return np.zeros(y.shape[:-1])
            return x0 * np.asarray(f.dt(u, t))

    elasticity = None
    if f.elasticity is not None:
        def elasticity(y, t):
            _, u = split(y)
            e = np.broadcast_to(np.asarray(f.elasticity(u, t), dtype=float), u.shape)
            return np.concatenate([(1.0 - e.sum(axis=-1))[..., None], e], axis=-1)

    bounds = None
    if f.weight_bounds is not None:
        lo, hi = f.weight_bounds
        # riskless weight is 1 - sum of the risky ones
        bounds = (min(lo, 1 - n * hi), max(hi, 1 - n * lo))

    return GeneratingFunction(
        name=f"homogenized({f.name})",
        arity=n + 1,
        fn=fn,
        grad=grad,
        hess=hess,
        dt=dt,
        elasticity=elasticity,
        smooth=f.smooth,
        homogeneity=DEGREE_ONE,
        horizon=f.horizon,
        weight_bounds=bounds,
        params={"kind": "homogenize", "base": f.params},
    )


def extend_simplex_function(s, name=None):
    """Extend a function on the simplex to ``S~(x, t) = z * s(x / z, t)``, ``z = sum x``.

    ``s`` is a :class:`GeneratingFunction` defined on a neighbourhood of the
    simplex.  The extension is homogeneous of degree one and generates the
    same portfolio as ``s``.
    """
    n = s.arity

    def split(x):
        z = x.sum(axis=-1)
        return z, x / z[..., None]

    def fn(x, t):
        z, mu = split(x)
        return z * np.asarray(s.fn(mu, t), dtype=float)

    grad = hess = dt = None
    if s.grad is not None:
        def grad(x, t):
            _, mu = split(x)
            g = s.grad(mu, t)
            shift = np.asarray(s.fn(mu, t)) - np.sum(mu * g, axis=-1)
            return g + shift[..., None]

    if s.hess is not None:
        def hess(x, t):
            z, mu = split(x)
            h = np.asarray(s.hess(mu, t))
            hm = np.einsum("...ij,...j->...i", h, mu)
            mhm = np.sum(mu * hm, axis=-1)
            out = h - hm[..., :, None] - hm[..., None, :] + mhm[..., None, None]
            return out / z[..., None, None]

    if s.dt is not None or not s.time_dependent:
        def dt(x, t):
            z, mu = split(x)
            if s.dt is None:
                return np.zeros(x.shape[:-1])
            return z * np.asarray(s.dt(mu, t))

    return GeneratingFunction(
        name=name or f"extended({s.name})",
        arity=n,
        fn=fn,
        grad=grad,
        hess=hess,
        dt=dt,
        smooth=s.smooth,
        homogeneity=DEGREE_ONE,
        horizon=s.horizon,
        params={"kind": "extend_simplex", "base": s.params},
    )


def derivative_discrepancy(f, x, t=0.0):
    """Max relative analytic-vs-FD discrepancy of gradient, Hessian and time derivative.

    At each point the discrepancy is ``max|analytic - fd| / max|analytic|``
    taken over the entries of the vector or matrix; the worst point is
    returned.  A vanishing time derivative is measured against ``1e-3 * f``.
    """
    x, t = _prepare(x, t)
    v = np.abs(f.value(x, t)).reshape(-1)
    m = v.size
    g_a = f.gradient(x, t, "analytic").reshape(m, -1)
    g_f = gradient_fd(f, x, t).reshape(m, -1)
    h_a = f.hessian(x, t, "analytic").reshape(m, -1)
    h_f = hessian_fd(f, x, t).reshape(m, -1)
    d_a = f.time_derivative(x, t, "analytic").reshape(m)
    d_f = dt_fd(f, x, t).reshape(m)

    def rel(a, b):
        return float(np.max(np.max(np.abs(a - b), axis=1) / np.max(np.abs(a), axis=1)))

    return {
        "gradient": rel(g_a, g_f),
        "hessian": rel(h_a, h_f),
        "time": float(np.max(np.abs(d_a - d_f) / np.maximum(np.abs(d_a), 1e-3 * v))),
    }
