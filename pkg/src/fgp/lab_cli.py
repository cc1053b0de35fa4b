"""Command-line entry point: ``fgp simulate|decompose|replicate-check|price|hedge``.

Every command is a pure function of its config.  Reports are written as
``report.json``; wall-clock time goes to a separate ``timing.json`` so that
reruns reproduce ``report.json`` byte for byte.

Exit codes: 0 success, 1 config or I/O error, 2 verdict failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time

import numpy as np

from . import __version__
from . import config as cfg
from .errors import ConfigError, FgpError, PipelineRejected
from .market_sim import coarsen, covariance, discount_path, format_float, simulate_path
from .portfolio_engine import integrate_value
from .replication import ClaimProblem, pde_residual, sample_points, three_step_price

EXIT_OK, EXIT_CONFIG, EXIT_VERDICT = 0, 1, 2
QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


class VerdictFailure(Exception):
    """A command ran to completion but its check did not pass."""


def _clean(obj):
    # numpy scalars and arrays to plain JSON types; non-finite floats to null
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else None
    return obj


def dump_json(obj):
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def _write(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _envelope(config, command):
    return {"command": command, "version": __version__, "config_hash": config.digest(),
            "config": config.to_dict()}


def path_name(seed, index):
    return f"{seed}_{index:04d}.csv"


def _paths(config, model, steps=None):
    steps = steps or config.steps
    for i in range(config.paths):
        p = simulate_path(model, config.horizon, steps, config.seed, i)
        yield discount_path(p) if config.discounted else p


# --- commands -----------------------------------------------------------------


def cmd_simulate(config, out, refine=0):
    model = config.model()
    files = []
    for p in _paths(config, model):
        name = path_name(config.seed, p.path_index)
        _write(out / "paths" / name, p.to_csv())
        files.append(f"paths/{name}")
    manifest = _envelope(config, "simulate")
    manifest["files"] = files
    return manifest


def _quantiles(values):
    values = np.asarray(values, dtype=float)
    return {f"q{int(q * 100):02d}": float(np.quantile(values, q)) for q in QUANTILES} | {
        "max": float(values.max()), "median": float(np.median(values))}


def cmd_decompose(config, out, refine=0):
    if config.function is None:
        raise ConfigError("function", "decompose needs a generating-function descriptor")
    if refine and config.steps % (2 ** refine):
        raise ConfigError("grid.M", f"must be divisible by 2^{refine} for --refine {refine}")
    model = config.model()
    cov = covariance(model)
    f = config.generating_function()
    tol = config.tolerance("gap")
    per_path, errors = [], []
    pi_constant = True
    slopes, egr0, rd_max = [], [], 0.0
    scale = None
    scale_dev = 0.0
    levels = [[] for _ in range(refine + 1)]
    for p in _paths(config, model):
        try:
            traj = integrate_value(f, p, cov, backend=config.backend)
        except FgpError as exc:
            errors.append({"path": p.path_index, "error": f"{type(exc).__name__}: {exc}"})
            continue
        _write(out / "trajectories" / path_name(config.seed, p.path_index), traj.to_csv())
        gap = float(np.max(np.abs(traj.gap))) if f.smooth else None
        w = traj.weights
        pi_constant = pi_constant and bool(np.all(w == w[0]))
        cum_egr = np.concatenate([[0.0], np.cumsum(traj.egr * p.dt)])
        rd = float(np.max(np.abs(traj.phi_residual)))
        rd_max = max(rd_max, rd)
        if f.smooth:
            slopes.append(traj.phi_analytic[-1] / p.horizon)
            egr0.append(traj.egr[0])
            if cum_egr[-1] != 0:
                c = traj.phi_analytic[-1] / cum_egr[-1]
                scale = c if scale is None else scale
                scale_dev = max(scale_dev, float(np.max(np.abs(traj.phi_analytic - scale * cum_egr))))
            levels[0].append(gap)
            for j in range(1, refine + 1):
                cp = coarsen(p, model, 2 ** j)
                levels[j].append(float(np.max(np.abs(integrate_value(f, cp, cov, backend=config.backend).gap))))
        per_path.append({"path": p.path_index, "max_gap": gap, "residual_drift_max": rd,
                         "phi_T": traj.phi_analytic[-1], "residual_drift_T": traj.phi_residual[-1],
                         "egr_integral": cum_egr[-1]})

    report = _envelope(config, "decompose")
    report.update({
        "function": f.name,
        "paths": per_path,
        "errors": errors,
        "pi_constant": pi_constant,
        "residual_drift_max": rd_max,
        "residual_drift_ok": rd_max <= config.tolerance("residual_drift"),
    })
    if f.smooth and per_path:
        gaps = [r["max_gap"] for r in per_path]
        report.update({
            "max_gap": max(gaps),
            "median_gap": float(np.median(gaps)),
            "gap_ok": max(gaps) < tol,
            "drift_slope": float(np.mean(slopes)),
            "egr_initial": float(np.mean(egr0)),
            "egr_scale": scale,
            "drift_matches_egr_scaled": scale is not None and scale_dev <= 1e-12,
        })
        if refine:
            med = [float(np.median(g)) for g in levels]
            report["refinement"] = {
                "steps": [config.steps // 2 ** j for j in range(refine + 1)],
                "median_gap": med,
                "ratios": [med[j + 1] / med[j] if med[j] > 0 else None for j in range(refine)],
            }
    if errors:
        raise VerdictFailure(report)
    return report


def cmd_replicate_check(config, out, refine=0):
    if config.function is None:
        raise ConfigError("function", "replicate-check needs a generating-function descriptor")
    model = config.model()
    f = config.generating_function()
    s = config.samples
    horizon = f.horizon if f.horizon is not None else config.horizon
    t_range = tuple(s.get("t_range", (0.0, 0.9 * horizon)))
    x, t = sample_points(f.arity, int(s.get("count", 50)), int(s.get("seed", config.seed)),
                         tuple(s.get("x_range", (0.5, 2.0))), t_range)
    gamma0 = 0.0 if config.discounted else model.riskless_rate
    rep = pde_residual(f, covariance(model), gamma0, (x, t), backend=config.backend,
                       tolerance=config.tolerances.get("residual"))
    report = _envelope(config, "replicate-check")
    report.update(rep.to_dict())
    if not rep.replicable:
        raise VerdictFailure(report)
    return report


def _problem(config):
    if config.claim is None:
        raise ConfigError("claim", "a terminal-value claim descriptor is required")
    return ClaimProblem(config.claim, config.model(), config.horizon)


def _pipeline(config, problem):
    try:
        return three_step_price(problem, seed=config.seed, backend=config.backend,
                                tolerance=config.tolerances.get("residual"))
    except PipelineRejected as exc:
        report = _envelope(config, "price")
        report["verdict"] = "rejected"
        report["reason"] = str(exc)
        report["reports"] = {k: r.to_dict() for k, r in (exc.reports or {}).items()}
        raise VerdictFailure(report) from exc


def cmd_price(config, out, refine=0):
    problem = _problem(config)
    result = _pipeline(config, problem)
    market = problem.market
    T = config.horizon
    g = config.price_grid
    x0s = market.initial_prices
    # a flat list gives multiples of the initial prices; rows give explicit price vectors
    xs = np.asarray(g.get("x", np.linspace(0.5, 1.5, 11)), dtype=float)
    xs = xs[:, None] * x0s[None, :] if xs.ndim == 1 else xs
    ts = np.asarray(g.get("t", np.linspace(0.0, T, 5)), dtype=float)
    rows = []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "X0"] + [f"X{i + 1}" for i in range(market.n)] + ["value", "claim"])
    terminal_exact = True
    for t in ts:
        riskless = float(np.exp(market.riskless_rate * (t - T)))
        args = np.column_stack([np.full(len(xs), riskless), xs])
        v = result.claim.value(args, t)
        claim = v - problem.shift * riskless
        if t == T:
            terminal_exact = terminal_exact and bool(np.all(v == problem.terminal_value(xs)))
        for xi, vi, ci in zip(xs, v, claim):
            w.writerow([format_float(a) for a in (t, riskless, *xi, vi, ci)])
            rows.append({"t": t, "x": xi, "value": vi, "claim": ci})
    _write(out / "prices.csv", buf.getvalue())
    report = _envelope(config, "price")
    report.update({
        "verdict": "accepted",
        "function": result.claim.name,
        "step_one_residual": result.step_one_report.max_normalized,
        "claim_residual": result.claim_report.max_normalized,
        "terminal_exact": terminal_exact,
        "prices": rows,
    })
    if T in ts and not terminal_exact:
        raise VerdictFailure(report)
    return report


def hedging_errors(claim, model, horizon, steps_list, seed, paths):
    """Terminal |Z(T) - V_hat(X_0(T), X(T), T)| per path for each step count.

    Paths are simulated once on the finest grid and coarsened, so all step
    counts see the same noise.  ``Z`` is the discrete self-financing
    portfolio (weights held over each step) started at ``V_hat`` at time 0.
    """
    cov = covariance(model)
    finest = max(steps_list)
    errs = {m: np.empty(paths) for m in steps_list}
    for i in range(paths):
        fine = simulate_path(model, horizon, finest, seed, i)
        for m in steps_list:
            p = fine if m == finest else coarsen(fine, model, finest // m)
            traj = integrate_value(claim, p, cov, scheme="arithmetic")
            errs[m][i] = abs(np.exp(traj.log_value[-1]) - np.exp(traj.log_generator[-1]))
    return errs


def cmd_hedge(config, out, refine=0):
    problem = _problem(config)
    result = _pipeline(config, problem)
    steps = sorted(config.hedge_steps)
    errs = hedging_errors(result.claim, problem.market, config.horizon, steps, config.seed, config.paths)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["path"] + [f"M{m}" for m in steps])
    for i in range(config.paths):
        w.writerow([i] + [format_float(errs[m][i]) for m in steps])
    _write(out / "hedging_errors.csv", buf.getvalue())
    medians = [float(np.median(errs[m])) for m in steps]
    decreasing = all(b < a for a, b in zip(medians, medians[1:]))
    scale = problem.strike if problem.strike > 0 else 1.0
    final_ok = medians[-1] < config.tolerance("hedge") * scale
    report = _envelope(config, "hedge")
    report.update({
        "function": result.claim.name,
        "steps": steps,
        "quantiles": {str(m): _quantiles(errs[m]) for m in steps},
        "median": medians,
        "median_decreasing": decreasing,
        "final_median_ok": final_ok,
    })
    if not (decreasing and final_ok):
        raise VerdictFailure(report)
    return report


COMMANDS = {
    "simulate": cmd_simulate,
    "decompose": cmd_decompose,
    "replicate-check": cmd_replicate_check,
    "price": cmd_price,
    "hedge": cmd_hedge,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="fgp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fgp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", help="output directory (overrides $FGP_OUTPUT_DIR and the config)")
        p.add_argument("--refine", type=int, default=0, metavar="K",
                       help="also run on grids 2, 4, ..., 2^K times coarser (decompose)")
    return parser


def run(argv=None, stdout=sys.stdout, stderr=sys.stderr):
    args = build_parser().parse_args(argv)
    if args.refine < 0:
        print("error: --refine must be nonnegative", file=stderr)
        return EXIT_CONFIG
    try:
        config = cfg.load(args.config)
        out = config.resolve_output(args.out)
        start = time.perf_counter()
        try:
            report = COMMANDS[args.command](config, out, args.refine)
            code = EXIT_OK
        except VerdictFailure as exc:
            report = exc.args[0]
            code = EXIT_VERDICT
        except FgpError as exc:
            if isinstance(exc, ConfigError):
                raise
            report = _envelope(config, args.command)
            report["error"] = f"{type(exc).__name__}: {exc}"
            code = EXIT_VERDICT
        elapsed = time.perf_counter() - start
        name = "manifest.json" if args.command == "simulate" else "report.json"
        _write(out / name, dump_json(report))
        _write(out / "timing.json", dump_json({"command": args.command, "wall_clock_s": elapsed}))
    except ConfigError as exc:
        print(f"config error: {exc}", file=stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=stderr)
        return EXIT_CONFIG
    status = "ok" if code == EXIT_OK else "verdict failure"
    print(f"{args.command}: {status} -> {out / name}", file=stdout)
    return code


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
