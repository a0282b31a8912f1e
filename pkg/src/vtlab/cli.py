"""``vtlab`` command line.

Exit codes: 0 success, 1 a verify criterion failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .core import InvalidConfig, InvalidParameter, WorkerPool


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _pool_from(args):
    if args.config:
        from .config import load_config

        c = load_config(args.config).pool
        return WorkerPool.from_rule(c.rule, c.n, c.value, c.taus)
    if args.taus:
        taus = _floats(args.taus)
        return WorkerPool.from_rule("explicit", len(taus), taus=taus)
    if args.n:
        return WorkerPool.from_rule(args.rule, args.n)
    raise InvalidConfig("give --config, --taus or --n")


def cmd_run(args):
    from .config import load_config
    from .experiments import cli_run, output_root

    cfg = load_config(args.config)
    out = output_root(args.out)
    seeds = [args.seed] if args.seed is not None else None
    summary = cli_run(cfg, out, seeds)
    for r in summary["runs"]:
        print(f"{r['run_id']}: steps={r['steps']} time={r['final_time']:.6g} f={r['final_f']}")
    print(f"config_hash={summary['config_hash']} out={out}")
    return 0


def cmd_sweep(args):
    from .config import load_config
    from .experiments import cli_sweep, output_root

    cfg = load_config(args.config)
    rep = cli_sweep(cfg, output_root(args.out), args.seed)
    print(json.dumps({k: rep[k] for k in ("config_hash", "best", "best_score", "boundary")},
                     default=str))
    return 0


def cmd_verify(args):
    from .acceptance import run_all, select

    names = select(args.only)
    if not names:
        raise InvalidConfig(f"--only {args.only} matches no criterion")
    echo = None if args.json else print
    results = run_all(args.only, echo=echo)
    ledger = [{"criterion": r.name, "passed": r.passed, "seconds": round(r.seconds, 3),
               "limit": r.limit, "measured": r.measured} for r in results]
    if args.json:
        print(json.dumps(ledger, indent=2, default=str))
    if args.out:
        with open(os.path.join(args.out, "verify.json"), "w") as fh:
            json.dump(ledger, fh, indent=2, default=str)
    return 0 if all(r.passed for r in results) else 1


def cmd_report(args):
    from .complexity import convex_bounds, time_bounds

    taus = sorted(float(t) for t in _pool_from(args).taus)
    if args.convex:
        rep = convex_bounds(taus, args.L, args.M, args.R, args.sigma2, args.eps)
    else:
        rep = time_bounds(taus, args.L, args.delta, args.sigma2, args.eps)
    print(rep.to_json())
    print(rep.table())
    return 0


def cmd_collect_time(args):
    from .complexity import t_prime_min
    from .events import collect_batch

    pool = _pool_from(args)
    col = collect_batch(pool, args.S, args.regime)
    bound, j = t_prime_min(sorted(float(t) for t in pool.taus), args.S)
    print(json.dumps({"S": args.S, "regime": args.regime, "time": col.time,
                      "delivered": col.delivered, "t_prime_min": bound, "j_star": j}))
    return 0


def _pool_args(p):
    p.add_argument("--config", help="take the worker pool from this config")
    p.add_argument("--taus", help="comma-separated delays")
    p.add_argument("--n", type=int)
    p.add_argument("--rule", default="sqrt-index", choices=["sqrt-index", "constant"])


def parser():
    ap = argparse.ArgumentParser(prog="vtlab", description="virtual-time parallel SGD laboratory")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="run a config over its seeds, write CSV + summary")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory (default $VTLAB_OUT or ./results)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="grid-search gamma / S")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="run the acceptance checks")
    p.add_argument("--only", action="append", help="substring filter, repeatable")
    p.add_argument("--json", action="store_true", help="print the ledger as JSON")
    p.add_argument("--out", help="also write verify.json here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", help="closed-form complexity expressions")
    _pool_args(p)
    p.add_argument("--L", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--M", type=float, default=float("inf"))
    p.add_argument("--R", type=float, default=1.0)
    p.add_argument("--convex", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("collect-time", help="simulated time to collect S fresh gradients")
    _pool_args(p)
    p.add_argument("--S", type=int, required=True)
    p.add_argument("--regime", default="worst-case", choices=["fresh", "worst-case"])
    p.set_defaults(func=cmd_collect_time)
    return ap


def main(argv=None):
    args = parser().parse_args(argv)
    if getattr(args, "out", None) and args.cmd in ("run", "sweep", "verify"):
        if not os.path.isdir(args.out):
            print(f"error: output directory {args.out!r} does not exist", file=sys.stderr)
            return 2
    try:
        return args.func(args)
    except (InvalidConfig, InvalidParameter, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
