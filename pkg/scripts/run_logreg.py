#!/usr/bin/env python3
"""Logistic regression with mini-batch gradients on a tabular dataset.

``--data`` takes a CSV or LIBSVM-style file with labels in {0, 1}. Without
it a synthetic two-class problem is generated so the script runs offline.
"""

import argparse
from pathlib import Path

import numpy as np

from vtlab.core import MinibatchEstimator, WorkerPool, load_dataset, logreg_problem
from vtlab.events import des_run
from vtlab.experiments import write_run_csv
from vtlab.optimizers import AsyncSGD, MMinibatch, Rennala
from vtlab.protocol import StopRule


def synthetic(N, d, seed):
    rng = np.random.default_rng(seed)
    w = rng.normal(size=d)
    X = rng.normal(size=(N, d))
    y = (X @ w + 0.5 * rng.normal(size=N) > 0).astype(float)
    return X, y


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", type=Path)
    ap.add_argument("--samples", type=int, default=3000)
    ap.add_argument("--dim", type=int, default=50)
    ap.add_argument("--reg", type=float, default=1e-3)
    ap.add_argument("--batch", type=int, default=4)
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--gamma", type=float, default=0.5)
    ap.add_argument("--async-gamma", type=float, default=0.05)
    ap.add_argument("--S", type=int, default=20)
    ap.add_argument("--time", type=float, default=500.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("results"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    X, y = load_dataset(args.data) if args.data else synthetic(args.samples, args.dim, args.seed)
    prob = logreg_problem(X, y, args.reg)
    est = MinibatchEstimator(prob, args.batch)
    pool = WorkerPool.from_rule("sqrt-index", args.n)
    x0 = prob.x0
    servers = {"rennala": Rennala(x0, args.gamma, args.S),
               "async": AsyncSGD(x0, args.async_gamma),
               "minibatch": MMinibatch(x0, args.gamma, args.n)}
    for method, server in servers.items():
        trace = des_run(server, pool, est, prob, StopRule(max_time=args.time), args.seed)
        write_run_csv(args.out / f"logreg-{method}-n{args.n}.csv", trace, "logreg", method,
                      args.n, args.seed)
        print(f"{method:<10} steps={trace.cols['k'][-1]:<6} f={trace.cols['f'][-1]:.6f}")


if __name__ == "__main__":
    main()
