#!/usr/bin/env python3
"""Print the time-complexity bounds for a few delay profiles as a table."""

import argparse

from vtlab.complexity import time_bounds
RULES = {"constant": lambda i: 1.0, "sqrt-index": lambda i: i**0.5, "linear-index": float}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, nargs="+", default=[10, 100, 1000, 10_000])
    ap.add_argument("--L", type=float, default=1.0)
    ap.add_argument("--delta", type=float, default=1.0)
    ap.add_argument("--sigma2", type=float, default=1.0)
    ap.add_argument("--eps", type=float, default=0.01)
    args = ap.parse_args()

    cols = ["minibatch", "async", "rennala"]
    print(f"{'rule':<14}{'n':>7}" + "".join(f"{c:>14}" for c in cols) + f"{'S*':>8}")
    for rule, tau in RULES.items():
        for n in args.n:
            taus = [tau(i) for i in range(1, n + 1)]
            rep = time_bounds(taus, args.L, args.delta, args.sigma2, args.eps)
            row = "".join(f"{rep.values[c]:>14.4g}" for c in cols)
            print(f"{rule:<14}{n:>7}{row}{rep.argmins['rennala']:>8}")


if __name__ == "__main__":
    main()
