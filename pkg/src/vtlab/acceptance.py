"""Acceptance criteria as runnable checks.

Each check returns a :class:`Result` with measured values; ``run_all`` drives
them for the ``verify`` subcommand and the acceptance test module.
"""

from __future__ import annotations

import filecmp
import math
import os
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from . import hard
from .complexity import convex_bounds, lemma_tau_check, lemma_tau_sync_check, t_prime_min
from .config import parse_config
from .core import (GaussianEstimator, WorkerPool, estimator_moments, prog,
                   pseudo_huber_problem, quadratic_problem, shifted_quadratics)
from .events import collect_batch, des_run
from .experiments import cli_run, figure_experiment
from .optimizers import (AcceleratedRennala, AsyncSGD, Malenia, MMinibatch, Rennala,
                         hyperparams_for)
from .protocol import ServerAdapter, StopRule, check_zero_respecting, run_time_protocol, success_ledger


@dataclass
class Result:
    name: str
    passed: bool
    measured: dict = field(default_factory=dict)
    seconds: float = 0.0
    limit: float = math.inf

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        vals = ", ".join(f"{k}={_short(v)}" for k, v in self.measured.items())
        return f"[{status}] {self.name} ({self.seconds:.1f}s / limit {self.limit:g}s): {vals}"


def _short(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


# ------------------------------------------------------------ 1


def _ft_points(rng, T, count, sparse=False):
    pts = []
    for _ in range(count):
        scale = rng.choice([0.3, 1.0, 2.0, 5.0, 20.0])
        x = rng.uniform(-scale, scale, T)
        if rng.random() < 0.3:
            # aligned points probe the deepest values of the chain
            x = np.abs(x) + rng.uniform(0.5, 3.0)
        if sparse:
            x[rng.integers(0, T):] = 0.0
        pts.append(x)
    return pts


def hard_instance_invariants(seed=0, T=16, count=1000):
    rng = np.random.default_rng(seed)
    f0 = hard.ft_value(np.zeros(T))
    gap = max(f0 - hard.ft_value(x) for x in _ft_points(rng, T, count))
    smooth = 0.0
    for _ in range(count):
        x = _ft_points(rng, T, 1)[0]
        y = x + rng.normal(size=T) * rng.choice([1e-3, 0.1, 1.0])
        smooth = max(smooth, np.linalg.norm(hard.ft_grad(x) - hard.ft_grad(y)) / np.linalg.norm(x - y))
    ginf = max(np.abs(hard.ft_grad(x)).max() for x in _ft_points(rng, T, count))
    chain = sum(prog(hard.ft_grad(x)) > prog(x) + 1 for x in _ft_points(rng, T, count, sparse=True))
    below = [x for x in _ft_points(rng, 2 * T, 4 * count, sparse=True)]
    below = [x[:T] for x in below if prog(x[:T]) < T][:count]
    min_norm = min(np.linalg.norm(hard.ft_grad(x)) for x in below)
    m = {"gap": gap, "gap_bound": 12.0 * T, "smooth_ratio": smooth, "grad_inf": ginf,
         "chain_violations": int(chain), "min_grad_norm_below_T": min_norm, "points_below_T": len(below)}
    ok = gap <= 12 * T and smooth <= 152 and ginf <= 23 and chain == 0 and min_norm > 1 \
        and len(below) >= count
    return ok, m


# ------------------------------------------------------------ 2


def _random_hard(rng):
    eps = float(rng.uniform(0.01, 0.1))
    L = float(rng.uniform(0.5, 2.0))
    T = int(rng.integers(2, 40))
    delta = (T + 0.5) * 2 * eps * hard.L1 * hard.DELTA0 / L
    sigma2 = eps * float(rng.uniform(1.2e3, 2e4))
    return hard.make_nonconvex_hard(L, delta, sigma2, eps)


def estimator_correctness(seed=0, instances=50, mc_instances=3, draws=100_000):
    rng = np.random.default_rng(seed)
    worst_bias = 0.0
    worst_excess = -math.inf
    mc_z = []
    for r in range(instances):
        inst = _random_hard(rng)
        est = inst.estimator()
        x = np.zeros(inst.T)
        j = int(rng.integers(0, inst.T))
        x[:j] = rng.normal(size=j) * inst.lam
        g = inst.gradient(x)
        outs = est.outcomes(x)
        mean = sum(pr * gv for pr, gv in outs)
        worst_bias = max(worst_bias, float(np.max(np.abs(mean - g)) / (1 + np.max(np.abs(g)))))
        var = sum(pr * float(np.sum((gv - g) ** 2)) for pr, gv in outs)
        closed = float(np.max(np.abs(g)) ** 2 * (1 - inst.p) / inst.p)
        worst_excess = max(worst_excess, (var - closed) / (1 + closed),
                           (closed - inst.sigma2) / (1 + inst.sigma2))
        if r < mc_instances:
            _, mom = estimator_moments(est, x, draws, seed=seed + r)
            # Z = |g_hat - g|^2 has two values; its exact spread gives the 3-sigma band
            vals = [float(np.sum((gv - g) ** 2)) for _, gv in outs]
            ez2 = sum(pr * v * v for (pr, _), v in zip(outs, vals))
            sd = math.sqrt(max(ez2 - var * var, 0.0) / draws)
            mc_z.append(abs(mom - var) / sd if sd > 0 else 0.0)
    m = {"max_rel_bias": worst_bias, "max_bound_excess": worst_excess, "mc_max_z": max(mc_z)}
    return worst_bias <= 1e-12 and worst_excess <= 1e-12 and max(mc_z) <= 3.0, m


# ------------------------------------------------------------ 3


def _avg_grad_sq(trace, K):
    gn = trace.column("grad_norm_sq")[:K]
    return float(gn.mean()) if len(gn) == K else math.inf


def theorem_convergence(seeds=range(10), eps=0.05, sigma2=1.0, d=100):
    e1 = np.zeros(d)
    e1[0] = 1.0
    out = {}
    ok = True

    # Rennala, nonconvex rate
    q = quadratic_problem(d, e1)
    hp = hyperparams_for("rennala", eps, sigma2, L=q.L, delta=q.delta)
    pool = WorkerPool.from_rule("sqrt-index", 8)
    est = GaussianEstimator(q, sigma2, d)
    vals = [_avg_grad_sq(des_run(Rennala(e1, hp.gamma, hp.S), pool, est, q,
                                 StopRule(max_steps=hp.K), s), hp.K) for s in seeds]
    out["rennala"] = float(np.mean(vals))
    out["rennala_K"] = hp.K
    ok &= out["rennala"] <= eps

    # Malenia on heterogeneous local quadratics
    n = 4
    qg, locs = shifted_quadratics(d, n, shift=0.1)
    qg.x0 = e1
    hp = hyperparams_for("malenia", eps, sigma2, L=qg.L, delta=qg.delta, n=n)
    ests = [GaussianEstimator(lp, sigma2, d) for lp in locs]
    pool = WorkerPool.from_rule("sqrt-index", n)
    vals = [_avg_grad_sq(des_run(Malenia(e1, hp.gamma, hp.S, n), pool, ests, qg,
                                 StopRule(max_steps=hp.K), s), hp.K) for s in seeds]
    out["malenia"] = float(np.mean(vals))
    ok &= out["malenia"] <= eps

    # convex Rennala, averaged iterate, and the accelerated variant
    ph = pseudo_huber_problem(d, M=1.0, mu=1.0, radius=1.0)
    est = GaussianEstimator(ph, sigma2, d)
    pool = WorkerPool.from_rule("sqrt-index", 4)
    hp = hyperparams_for("rennala_convex", eps, sigma2, M=ph.M, R=ph.R)
    gaps = []
    for s in seeds:
        srv = Rennala(ph.x0, hp.gamma, hp.S, average=True)
        des_run(srv, pool, est, ph, StopRule(max_steps=hp.K), s, metrics=False)
        gaps.append(ph.value(srv.reported_point()) - ph.f_star)
    out["rennala_convex"] = float(np.mean(gaps))
    ok &= out["rennala_convex"] <= eps

    hp = hyperparams_for("accelerated_rennala", eps, sigma2, L=ph.L, R=ph.R)
    gaps = []
    for s in seeds:
        srv = AcceleratedRennala(ph.x0, hp.gamma, hp.S)
        des_run(srv, pool, est, ph, StopRule(max_steps=hp.K), s, metrics=False)
        gaps.append(ph.value(srv.x) - ph.f_star)
    out["accelerated"] = float(np.mean(gaps))
    ok &= out["accelerated"] <= eps

    # m-Minibatch with the optimal m
    pool = WorkerPool.from_rule("sqrt-index", 16)
    est = GaussianEstimator(q, sigma2, d)
    hp = hyperparams_for("m_minibatch", eps, sigma2, L=q.L, delta=q.delta, taus=pool.sorted_taus)
    vals = [_avg_grad_sq(des_run(MMinibatch(e1, hp.gamma, hp.m), pool, est, q,
                                 StopRule(max_steps=hp.K), s), hp.K) for s in seeds]
    out["m_minibatch"] = float(np.mean(vals))
    out["m"] = hp.m
    ok &= out["m_minibatch"] <= eps
    return bool(ok), out


# ------------------------------------------------------------ 4, 5


def _random_taus(rng, max_n=32):
    n = int(rng.integers(1, max_n + 1))
    kind = rng.integers(0, 3)
    if kind == 0:
        t = rng.uniform(0.1, 10.0, n)
    elif kind == 1:
        t = np.exp(rng.normal(0, 1.5, n))
    else:
        t = rng.integers(1, 6, n).astype(float)
    return sorted(float(v) for v in t)


def collection_sandwich(seed=0, cases=10_000):
    rng = np.random.default_rng(seed)
    bad = 0
    worst_hi = 0.0
    worst_lo = math.inf
    for _ in range(cases):
        taus = _random_taus(rng)
        S = int(rng.integers(1, 1001))
        worst = collect_batch(taus, S, "worst-case")
        fresh = collect_batch(taus, S, "fresh").time
        lo = S / sum(1 / t for t in taus)
        hi = 2 * t_prime_min(taus, S)[0]
        stragglers = sum(c for c, t in zip(worst.counts, taus) if t > worst.time)
        if not (lo <= worst.time <= hi and fresh <= worst.time and stragglers == 0):
            bad += 1
        worst_hi = max(worst_hi, worst.time / hi)
        worst_lo = min(worst_lo, worst.time / lo)
    return bad == 0, {"cases": cases, "failures": bad, "max_time_over_upper": worst_hi,
                      "min_time_over_lower": worst_lo}


def lemma_fuzz(seed=0, cases=10_000):
    rng = np.random.default_rng(seed)
    bad_c5 = bad_f4 = 0
    r5 = r4 = 0.0
    for _ in range(cases):
        taus = _random_taus(rng)
        S = float(rng.uniform(0.25, 1000.0)) if rng.random() < 0.8 else float(rng.integers(1, 50))
        t1, t2 = lemma_tau_check(taus, S)
        bad_c5 += not (t1 <= t2 <= 6 * t1)
        r5 = max(r5, t2 / t1)
    for _ in range(cases):
        taus = _random_taus(rng)
        eta = int(rng.integers(1, 200))
        t1, t2 = lemma_tau_sync_check(taus, eta)
        bad_f4 += not (t1 <= t2 <= 2 * t1)
        r4 = max(r4, t2 / t1)
    return bad_c5 == 0 and bad_f4 == 0, {"c5_failures": bad_c5, "c5_max_ratio": r5,
                                         "f4_failures": bad_f4, "f4_max_ratio": r4}


# ------------------------------------------------------------ 6


FIG_ASYNC_GAMMAS = [2.0**i for i in range(-5, 0)]
FIG_GAMMAS = [2.0**i for i in range(-2, 2)]
FIG_TARGET = 0.01


def figure_ordering(seed=0, target=FIG_TARGET):
    big = figure_experiment(10_000, seed=seed, target=target, gammas=FIG_GAMMAS,
                            async_gammas=FIG_ASYNC_GAMMAS)
    small = figure_experiment(100, seed=seed, target=target, gammas=FIG_GAMMAS,
                              async_gammas=FIG_ASYNC_GAMMAS, methods=("rennala", "async"))
    r, a, m = (big.best[k][0] for k in ("rennala", "async", "minibatch"))
    rs, as_ = small.best["rennala"][0], small.best["async"][0]
    ratio = max(rs, as_) / min(rs, as_)
    # informational only: the same comparison with a constant async stepsize
    const = figure_experiment(100, seed=seed, target=target,
                              async_gammas=[2.0**i for i in range(-9, -3)],
                              methods=("async",), c_grid=None)
    ac = const.best["async"][0]
    out = {"target": target, "n1e4_rennala": r, "n1e4_async": a, "n1e4_minibatch": m,
           "n1e2_rennala": rs, "n1e2_async": as_, "n1e2_ratio": ratio,
           "n1e2_async_params": small.best["async"][1], "n1e2_async_constant": ac,
           "n1e2_ratio_constant": max(rs, ac) / min(rs, ac)}
    return bool(r <= a <= m and ratio <= 1.5 and math.isfinite(m)), out


# ------------------------------------------------------------ 7


def _lb_server(kind, x0, n, rng):
    if kind == "rennala":
        return Rennala(x0, 0.5, int(rng.integers(1, 6)))
    if kind == "malenia":
        return Malenia(x0, 0.5, int(rng.integers(n, 2 * n + 1)), n)
    if kind == "m_minibatch":
        return MMinibatch(x0, 0.5, int(rng.integers(1, n + 1)))
    if kind == "async":
        return AsyncSGD(x0, 0.5, "delay-adaptive", L=1.0)
    return AcceleratedRennala(x0, 0.05, int(rng.integers(1, 6)))


LB_METHODS = ("rennala", "malenia", "m_minibatch", "async", "accelerated")


def lower_bound_mechanics(seed=0, runs=100, steps=3000):
    rng = np.random.default_rng(seed)
    viol = unearned = zr = 0
    reached = 0
    per_method = {}
    for r in range(runs):
        kind = LB_METHODS[r % len(LB_METHODS)]
        T = int(rng.integers(4, 10))
        eps = 0.01
        p = float(rng.uniform(0.1, 0.6))
        inst = hard.make_nonconvex_hard(1.0, (T + 0.5) * 2 * eps * hard.L1 * hard.DELTA0,
                                        2 * eps * hard.GAMMA_INF**2 / p, eps)
        n = int(rng.integers(1, 7))
        pool = WorkerPool(sorted(rng.uniform(0.5, 3.0, n)))
        x0 = np.zeros(inst.T)
        server = _lb_server(kind, x0, n, rng)
        if isinstance(server, MMinibatch):
            server.fastest = list(range(n))
        trace = run_time_protocol(ServerAdapter(server, pool), pool, inst.estimator(),
                                  inst.problem(), stop=StopRule(max_steps=steps),
                                  seed=seed * 1000 + r, record_points=True)
        led = success_ledger(trace, pool)
        viol += len(led.violations)
        unearned += len(led.unearned)
        z = len(check_zero_respecting(trace))
        zr += z
        reached += len(led.levels)
        per_method[kind] = per_method.get(kind, 0) + z
    ok = viol == 0 and unearned == 0 and zr == 0 and reached > 0
    return ok, {"runs": runs, "levels_checked": reached, "ledger_violations": viol,
                "unearned_progress": unearned, "zero_respecting_violations": zr}


# ------------------------------------------------------------ 8, 9


def graph_oracle_trend(ns=(16, 256, 4096)):
    ratios = []
    for n in ns:
        taus = np.sqrt(np.arange(1, n + 1))
        # first term of the min is 1 (sqrt(L) R / sqrt(eps) = 1, M huge); a = sqrt(n)
        rep = convex_bounds(taus, L=1.0, M=1e12, R=1.0, sigma2=math.sqrt(n), eps=1.0)
        ratios.append(rep.values["ratio"])
    growth = [b / a for a, b in zip(ratios, ratios[1:])]
    return min(growth) >= 1.7, {"ratios": [round(float(r), 4) for r in ratios],
                                "growth": [round(float(g), 4) for g in growth]}


DETERMINISM_CONFIG = """
[problem]
name = "quadratic"
d = 20
x0 = "sqrt-d-e1"

[estimator]
kind = "bernoulli"
p = 0.1

[pool]
n = 8
rule = "sqrt-index"

[method]
name = "async"
gamma = 0.05

[stop]
max_time = 40.0

[run]
name = "det"
seeds = [3]
"""


def determinism():
    cfg = parse_config(DETERMINISM_CONFIG)
    with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
        cli_run(cfg, a)
        cli_run(cfg, b)
        files = sorted(f for f in os.listdir(a) if f.endswith(".csv"))
        same = all(filecmp.cmp(os.path.join(a, f), os.path.join(b, f), shallow=False) for f in files)
        size = sum(os.path.getsize(os.path.join(a, f)) for f in files)
    return bool(files) and same, {"files": len(files), "bytes": size, "identical": same}


CRITERIA = [
    ("hard_instance_invariants", hard_instance_invariants, 10),
    ("estimator_correctness", estimator_correctness, 120),
    ("theorem_convergence", theorem_convergence, 300),
    ("collection_sandwich", collection_sandwich, 120),
    ("lemma_tau", lemma_fuzz, 120),
    ("figure_ordering", figure_ordering, 600),
    ("lower_bound_mechanics", lower_bound_mechanics, 300),
    ("graph_oracle_trend", graph_oracle_trend, 10),
    ("determinism", determinism, 30),
]


def run_one(name):
    for n, fn, limit in CRITERIA:
        if n == name:
            t0 = time.perf_counter()
            ok, measured = fn()
            dt = time.perf_counter() - t0
            return Result(n, bool(ok) and dt <= limit, measured, dt, limit)
    raise KeyError(name)


def select(only=None):
    names = [n for n, _, _ in CRITERIA]
    if only:
        names = [n for n in names if any(o in n for o in only)]
    return names


def run_all(only=None, echo=None):
    results = []
    for name in select(only):
        res = run_one(name)
        if echo:
            echo(res.line())
        results.append(res)
    return results
