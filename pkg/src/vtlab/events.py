"""Discrete-event executor for the fixed-computation-time model.

Worker i, once handed a point, reports exactly tau_i later. Simultaneous
reports are processed in (time, worker index, sequence number) order.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .core import InvalidConfig, InvalidParameter, RngContract, as_estimator_list, prog
from .protocol import Trace, _stop_metric


def des_run(server, pool, est, problem, stop, seed=0, metrics=True, run_meta=None):
    """Run a server logic until the stop rule fires or no work remains.

    Records one trace row per server step (plus the initial point). Metrics
    are evaluated with exact gradients at ``server.reported_point()``.
    """
    if stop is None:
        raise InvalidConfig("refusing an unbounded run: give a stop rule")
    n = pool.n
    ests = as_estimator_list(est, n)
    taus = [float(t) for t in pool.taus]
    rc = RngContract(seed)
    rngs = [None] * n
    if getattr(server, "fastest", False) is None:
        server.fastest = [int(i) for i in np.argsort(pool.taus, kind="stable")]
    trace = Trace({"n": n, "seed": seed, "method": server.name,
                   "f_star": getattr(problem, "f_star", None), **(run_meta or {})})
    do_metrics = metrics and problem is not None
    fused = getattr(problem, "value_and_grad", None) if do_metrics else None
    if do_metrics and fused is None:
        fused = lambda x: (float(problem.value(x)), problem.gradient(x))  # noqa: E731

    def record(t, worker, delay):
        x = server.reported_point()
        if do_metrics:
            f, g = fused(x)
            gn = float(g @ g)
        else:
            f = gn = None
        trace.append(k=server.k, t=t, worker=worker, event="step", f=f, grad_norm_sq=gn,
                     prog=prog(x), delay=delay)
        return f, gn

    max_steps = stop.max_steps
    max_time = stop.max_time
    f, gn = record(0.0, None, None)
    if _stop_metric(stop, f, gn, problem) or max_steps == 0:
        return trace

    heap = []
    seq = 0
    point = [None] * n
    tag = [None] * n
    for (w, x, tg) in server.start(n):
        if point[w] is not None:
            raise InvalidConfig(f"worker {w} assigned twice")
        point[w], tag[w] = x, tg
        heap.append((taus[w], w, seq))
        seq += 1
    heapq.heapify(heap)

    while heap:
        t, w, _ = heapq.heappop(heap)
        if max_time is not None and t > max_time:
            break
        x, tg = point[w], tag[w]
        point[w] = None
        rng = rngs[w]
        if rng is None:
            rng = rngs[w] = rc.worker(w)
        e = ests[w]
        k_before = server.k
        assignments = server.on_report(t, w, tg, lambda: e.draw(x, rng))
        for (v, xv, tv) in assignments:
            if point[v] is not None:
                raise InvalidConfig(f"worker {v} assigned while busy")
            point[v], tag[v] = xv, tv
            heapq.heappush(heap, (t + taus[v], v, seq))
            seq += 1
        if server.k != k_before:
            f, gn = record(t, w, server.last_delay)
            if (max_steps is not None and server.k >= max_steps) or _stop_metric(stop, f, gn, problem):
                break
    return trace


# ------------------------------------------------------------ batch collection


@dataclass
class Collection:
    time: float
    counts: np.ndarray  # fresh gradients contributed per worker
    delivered: int  # all reports, fresh or stale, up to ``time``


def collect_batch(pool, S, regime="fresh"):
    """Simulate collecting S fresh gradients for one iteration.

    ``fresh``: every worker starts on the current point at time 0.
    ``worst-case``: every worker has just started a computation for the
    previous iteration, so its first report is stale and discarded.
    """
    if S < 1:
        raise InvalidParameter("S must be >= 1")
    if regime not in ("fresh", "worst-case"):
        raise InvalidParameter(f"unknown regime {regime!r}")
    taus = [float(t) for t in pool.taus] if hasattr(pool, "taus") else [float(t) for t in pool]
    n = len(taus)
    stale = [regime == "worst-case"] * n
    heap = [(taus[i], i, i) for i in range(n)]
    heapq.heapify(heap)
    seq = n
    counts = np.zeros(n, dtype=int)
    got = delivered = 0
    while True:
        t, i, _ = heapq.heappop(heap)
        delivered += 1
        if stale[i]:
            stale[i] = False
        else:
            counts[i] += 1
            got += 1
            if got == S:
                return Collection(t, counts, delivered)
        heapq.heappush(heap, (t + taus[i], i, seq))
        seq += 1


def measure_collection_time(pool, S, regime="fresh"):
    return collect_batch(pool, S, regime).time
