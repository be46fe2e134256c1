#!/usr/bin/env python3
"""Desk-scale set-query recovery experiment: error ratios under noise."""

from __future__ import annotations

import argparse
import sys

from setquery.experiment import ExperimentConfig, run_experiment


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--norm", choices=["l2", "l1"], default="l2")
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--k", type=int, default=1000)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", default="gaussian",
                   choices=["none", "gaussian", "adversarial_tail"])
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="out/set_query")
    args = p.parse_args()

    config = ExperimentConfig(
        kind=f"set_query_{args.norm}",
        n=args.n,
        k=args.k,
        eps=args.eps,
        trials=args.trials,
        seed=args.seed,
        noise=args.noise,
        repetitions=args.repetitions,
        workers=args.workers,
        out_dir=args.out,
    )
    report = run_experiment(config)
    for key, value in report.summary.items():
        print(f"{key}: {value}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
