"""Hedging-error study for the homogenised call.

    python3 scripts/hedging_study.py --paths 200 --steps 250 1000 4000 16000
"""

import argparse

import numpy as np

from fgp.lab_cli import hedging_errors
from fgp.market_sim import MarketModel
from fgp.replication import ClaimProblem, three_step_price


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=200)
    ap.add_argument("--steps", type=int, nargs="+", default=[250, 1000, 4000])
    ap.add_argument("--sigma", type=float, default=0.2)
    ap.add_argument("--rate", type=float, default=0.03)
    ap.add_argument("--strike", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=17)
    args = ap.parse_args()

    market = MarketModel.diagonal([args.sigma], growth=[0.06], riskless_rate=args.rate)
    problem = ClaimProblem({"kind": "call", "K": args.strike}, market, 1.0)
    claim = three_step_price(problem).claim
    errs = hedging_errors(claim, problem.market, 1.0, sorted(args.steps), args.seed, args.paths)
    prev = None
    for m in sorted(args.steps):
        med = np.median(errs[m])
        tail = f"  ratio {prev / med:.3f}" if prev else ""
        print(f"M={m:6d}  median {med:.4e}  q95 {np.quantile(errs[m], 0.95):.4e}{tail}")
        prev = med


if __name__ == "__main__":
    main()
