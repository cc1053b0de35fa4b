"""Experiment configuration: one JSON document per run."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import catalog
from .errors import ConfigError, DomainError
from .market_sim import MarketModel, covariance

OUTPUT_ENV = "FGP_OUTPUT_DIR"

DEFAULT_TOLERANCES = {
    "gap": 1e-3,
    "residual_drift": 1e-8,
    "hedge": 1e-2,
}
CLAIM_KINDS = ("call", "power_sum", "sqrt_sum", "power")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description.

    ``function`` is a generating-function descriptor (decompose,
    replicate-check); ``claim`` is a terminal-value descriptor (price, hedge).
    """

    market: dict
    seed: int
    horizon: float = 1.0
    steps: int = 1000
    paths: int = 1
    function: dict | None = None
    claim: dict | None = None
    tolerances: dict = field(default_factory=dict)
    output_dir: str = "out"
    backend: str = "auto"
    discounted: bool = False
    samples: dict = field(default_factory=dict)
    hedge_steps: tuple = (250, 1000, 4000)
    price_grid: dict = field(default_factory=dict)

    def model(self):
        return MarketModel.from_dict(self.market)

    def tolerance(self, key):
        return float(self.tolerances.get(key, DEFAULT_TOLERANCES.get(key)))

    def generating_function(self):
        m = self.model()
        return catalog.build(self.function, n=m.n, cov=covariance(m).matrix, horizon=self.horizon)

    def to_dict(self):
        d = asdict(self)
        d["hedge_steps"] = list(self.hedge_steps)
        return d

    def canonical_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self):
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def resolve_output(self, override=None):
        """Output directory: explicit override, then ``$FGP_OUTPUT_DIR``, then the config value."""
        return Path(override or os.environ.get(OUTPUT_ENV) or self.output_dir)


def _require(data, key):
    if key not in data:
        raise ConfigError(key, "missing required field")
    return data[key]


def _positive_int(value, name):
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(name, f"must be a positive integer, got {value!r}")
    return value


def from_dict(data):
    """Validate a raw config object and return an :class:`ExperimentConfig`."""
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    known = {"market", "seed", "grid", "paths", "function", "claim", "tolerances", "output_dir",
             "backend", "discounted", "samples", "hedge_steps", "price_grid", "description"}
    extra = sorted(set(data) - known)
    if extra:
        raise ConfigError(extra[0], "unknown field")

    market = _require(data, "market")
    try:
        model = MarketModel.from_dict(market)
    except (DomainError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError("market", str(exc)) from exc

    seed = _require(data, "seed")
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed", f"must be a nonnegative integer, got {seed!r}")

    grid = data.get("grid", {})
    horizon = grid.get("T", 1.0)
    if not isinstance(horizon, (int, float)) or not horizon > 0:
        raise ConfigError("grid.T", f"must be positive, got {horizon!r}")
    steps = _positive_int(grid.get("M", 1000), "grid.M")
    paths = _positive_int(data.get("paths", 1), "paths")

    tolerances = dict(data.get("tolerances", {}))
    for k, v in tolerances.items():
        if not isinstance(v, (int, float)) or not v > 0:
            raise ConfigError(f"tolerances.{k}", f"must be positive, got {v!r}")

    backend = data.get("backend", "auto")
    if backend not in ("auto", "analytic", "fd"):
        raise ConfigError("backend", f"expected auto, analytic or fd, got {backend!r}")

    function = data.get("function")
    if function is not None:
        catalog.build(function, n=model.n, cov=covariance(model).matrix, horizon=float(horizon))

    claim = data.get("claim")
    if claim is not None:
        if not isinstance(claim, dict) or claim.get("kind") not in CLAIM_KINDS:
            raise ConfigError("claim.kind", f"expected one of {', '.join(CLAIM_KINDS)}")
        if claim["kind"] == "call" and model.n != 1:
            raise ConfigError("claim", "call claims need a one-asset market")

    hedge_steps = tuple(_positive_int(m, "hedge_steps") for m in data.get("hedge_steps", (250, 1000, 4000)))
    finest = max(hedge_steps)
    if any(finest % m for m in hedge_steps):
        raise ConfigError("hedge_steps", "every step count must divide the largest")

    output_dir = data.get("output_dir", "out")
    if not isinstance(output_dir, str) or not output_dir:
        raise ConfigError("output_dir", "must be a nonempty string")

    return ExperimentConfig(
        market=model.to_dict(),
        seed=seed,
        horizon=float(horizon),
        steps=steps,
        paths=paths,
        function=function,
        claim=claim,
        tolerances=tolerances,
        output_dir=output_dir,
        backend=backend,
        discounted=bool(data.get("discounted", False)),
        samples=dict(data.get("samples", {})),
        hedge_steps=hedge_steps,
        price_grid=dict(data.get("price_grid", {})),
    )


def load(path):
    """Read and validate a JSON config file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from exc
    return from_dict(data)
