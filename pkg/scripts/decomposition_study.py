"""Refinement study for the value decomposition log Z = log V + drift.

Simulates paths on the finest grid, coarsens them on the same noise, and
prints the median max-gap per builtin and step count with successive ratios.

    python3 scripts/decomposition_study.py --paths 20 --levels 4
"""

import argparse
import json

import numpy as np

from fgp import catalog
from fgp.market_sim import MarketModel, coarsen, covariance, simulate_path
from fgp.portfolio_engine import integrate_value

BUILTINS = {
    "geometric_mean": {"kind": "geometric_mean", "p": [0.2, 0.3, 0.5]},
    "corrected_geometric_mean": {"kind": "corrected_geometric_mean", "p": [0.2, 0.3, 0.5]},
    "diversity": {"kind": "diversity", "p": 0.5},
    "sqrt_claim": {"kind": "sqrt_claim"},
    "extended_entropy": {"kind": "extended_entropy"},
    "power_sum": {"kind": "power_sum", "p": [0.5, 0.75, 1.5]},
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=20)
    ap.add_argument("--steps", type=int, default=20000, help="finest grid")
    ap.add_argument("--levels", type=int, default=3, help="number of halvings")
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args()

    model = MarketModel.diagonal([0.2] * 3, growth=[0.05, 0.02, 0.08], riskless_rate=0.03)
    cov = covariance(model)
    fns = {k: catalog.build(d, n=3, cov=cov.matrix, horizon=1.0) for k, d in BUILTINS.items()}
    steps = [args.steps // 2 ** j for j in range(args.levels + 1)]
    gaps = {k: np.empty((args.paths, len(steps))) for k in fns}
    for i in range(args.paths):
        fine = simulate_path(model, 1.0, args.steps, args.seed, i)
        for j in range(len(steps)):
            p = fine if j == 0 else coarsen(fine, model, 2 ** j)
            for k, f in fns.items():
                gaps[k][i, j] = np.max(np.abs(integrate_value(f, p, cov).gap))

    out = {}
    for k, g in gaps.items():
        med = np.median(g, axis=0)
        out[k] = {"steps": steps, "median_gap": med.tolist(), "ratio": (med[1:] / med[:-1]).tolist()}
        print(f"{k:26s} " + "  ".join(f"M={m}:{v:.3e}" for m, v in zip(steps, med)))
        print(f"{'':26s} ratios " + " ".join(f"{r:.3f}" for r in med[1:] / med[:-1]))
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
