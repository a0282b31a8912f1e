"""Runners for the classical and time-oracle protocols, complexity measures and
the monitors used to audit lower-bound mechanics.

An algorithm for the time protocols is any object with ``act(k, g)``. It
receives the oracle output of the previous call (None on the first call and
whenever nothing was delivered) and returns an :class:`AlgorithmAction`.
"""

from __future__ import annotations

import csv
import heapq
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import InvalidConfig, InvalidParameter, RngContract, as_estimator_list, prog
from .oracles import IDLE, delayed_oracle_step, interruptible_oracle_step, sync_oracle_step


class ProtocolViolation(RuntimeError):
    def __init__(self, k, msg):
        super().__init__(f"step {k}: {msg}")
        self.k = k


@dataclass
class AlgorithmAction:
    t_next: float
    query_point: np.ndarray
    worker: Optional[int] = None
    control: int = 0


@dataclass
class StopRule:
    """First-hit-wins combination of step, time and metric limits."""

    max_steps: Optional[int] = None
    max_time: Optional[float] = None
    metric: Optional[str] = None
    threshold: Optional[float] = None
    diverge_above: Optional[float] = None  # stop once f exceeds this (or is not finite)

    def __post_init__(self):
        if self.max_steps is None and self.max_time is None and self.threshold is None:
            raise InvalidConfig("stop rule needs max_steps, max_time or a metric threshold")
        if self.threshold is not None and self.metric not in METRICS:
            raise InvalidConfig(f"stop metric must be one of {sorted(METRICS)}")


METRICS = {"grad_norm_sq", "suboptimality", "f"}


class Trace:
    """Column store of protocol events (or simulator steps).

    Row r describes iterate x^k observed at virtual time ``t`` (t^k); for
    protocol runs it also holds the action taken at that step and the oracle
    output it produced.
    """

    COLUMNS = ("k", "t", "worker", "event", "f", "grad_norm_sq", "prog", "delay")

    def __init__(self, meta=None):
        self.meta = dict(meta or {})
        self.cols = {c: [] for c in self.COLUMNS}
        self.extra: list[dict] = []

    def append(self, extra=None, **row):
        for c in self.COLUMNS:
            self.cols[c].append(row.get(c))
        self.extra.append(extra or {})

    def __len__(self):
        return len(self.cols["k"])

    def column(self, name):
        return np.array([np.nan if v is None else v for v in self.cols[name]], dtype=float)

    def suboptimality(self):
        f_star = self.meta.get("f_star")
        if f_star is None:
            raise InvalidParameter("trace has no f* recorded")
        return self.column("f") - f_star

    def rows(self):
        for r in range(len(self)):
            yield {c: self.cols[c][r] for c in self.COLUMNS}

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "t", "worker", "event", "f", "grad_norm_sq", "prog"])
            for row in self.rows():
                w.writerow([_fmt(row[c]) for c in ("k", "t", "worker", "event", "f", "grad_norm_sq", "prog")])


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


class _Metrics:
    """Exact f and |grad f|^2, cached on the identity of the last point."""

    def __init__(self, problem, enabled=True):
        self.problem = problem
        self.enabled = enabled and problem is not None
        self._last = None
        self._val = (None, None, None)

    def __call__(self, x):
        if x is self._last:
            return self._val
        if not self.enabled:
            v = (None, None, prog(x))
        else:
            f, g = self.problem.value_and_grad(x)
            v = (f, float(g @ g), prog(x))
        self._last, self._val = x, v
        return v


def _stop_metric(stop, f, gn, problem):
    if f is None:
        return False
    if stop.diverge_above is not None and not f <= stop.diverge_above:
        return True
    if stop.threshold is None:
        return False
    if stop.metric == "grad_norm_sq":
        return gn <= stop.threshold
    if stop.metric == "f":
        return f <= stop.threshold
    return f - problem.f_star <= stop.threshold


def run_time_protocol(algorithm, pool, est, problem, oracle_kind="delayed", stop=None, seed=0,
                      record_points=False, metrics=True):
    """Alternate algorithm actions and oracle calls over virtual time.

    Only the queried worker's oracle state changes in a step. ``est`` may be a
    single estimator or one per worker. The sync oracle keeps one shared state.
    """
    if stop is None:
        raise InvalidConfig("refusing an unbounded run: give a stop rule")
    if oracle_kind not in ("delayed", "interruptible", "sync"):
        raise InvalidConfig(f"unknown oracle kind {oracle_kind!r}")
    n = pool.n
    ests = as_estimator_list(est, n)
    taus = pool.taus
    if oracle_kind == "sync" and np.any(np.diff(taus) < 0):
        raise InvalidConfig("sync oracle needs delays sorted ascending")
    rc = RngContract(seed)
    states = [IDLE] * (1 if oracle_kind == "sync" else n)
    metric = _Metrics(problem, metrics)
    trace = Trace({"protocol": oracle_kind, "n": n, "seed": seed,
                   "f_star": getattr(problem, "f_star", None)})
    t_prev = 0.0
    g = None
    k = 0
    while True:
        a = algorithm.act(k, g)
        x = a.query_point
        f, gn, pr = metric(x)
        if (stop.max_steps is not None and k >= stop.max_steps) or \
                (stop.max_time is not None and t_prev > stop.max_time) or \
                _stop_metric(stop, f, gn, problem):
            trace.append(k=k, t=t_prev, worker=None, event="stop", f=f, grad_norm_sq=gn, prog=pr,
                         extra={"x": x} if record_points else None)
            break
        if not a.t_next >= t_prev:
            raise ProtocolViolation(k, f"time travel: t^{k + 1}={a.t_next} < t^{k}={t_prev}")
        i = 0 if a.worker is None else a.worker
        if not (0 <= i < n):
            raise ProtocolViolation(k, f"worker index {i} out of range [0, {n})")
        extra = {}
        if oracle_kind == "sync":
            s = states[0]
            s_new, g, (m, xis) = sync_oracle_step(a.t_next, x, s, [rc.worker(j) for j in range(n)],
                                                  taus, ests[0])
            states[0] = s_new
            event = "start" if not s.busy else ("deliver" if m else "wasted")
            extra["m"] = m
        else:
            s = states[i]
            if oracle_kind == "interruptible":
                s_new, g, xi = interruptible_oracle_step(a.t_next, x, s, a.control, rc.worker(i),
                                                         taus[i], ests[i])
            else:
                s_new, g, xi = delayed_oracle_step(a.t_next, x, s, rc.worker(i), taus[i], ests[i])
            states[i] = s_new
            if a.control and oracle_kind == "interruptible":
                event = "interrupt"
            elif not s.busy:
                event = "start"
            elif g is None:
                event = "wait"
            else:
                event = "deliver"
                extra["xi"] = xi
                extra["started"] = s.s_t
                sp = getattr(ests[i], "progress", prog)
                extra["s_prog"] = sp(s.s_x)
        if record_points:
            extra["x"] = x
            extra["g"] = g
        extra["t_next"] = a.t_next
        trace.append(k=k, t=t_prev, worker=i, event=event, f=f, grad_norm_sq=gn, prog=pr,
                     extra=extra)
        t_prev = a.t_next
        k += 1
    return trace


def run_classical_protocol(algorithm, est, problem, stop=None, seed=0, record_points=False,
                           metrics=True):
    """Protocol without time: x^k = A^k(g^1..g^k), g^{k+1} = draw at x^k.

    Draws come from worker 0's stream so that a single-worker simulation with
    the same seed consumes identical samples.
    """
    if stop is None or stop.max_steps is None:
        raise InvalidConfig("classical protocol needs max_steps")
    rng = RngContract(seed).worker(0)
    metric = _Metrics(problem, metrics)
    trace = Trace({"protocol": "classical", "seed": seed,
                   "f_star": getattr(problem, "f_star", None)})
    g = None
    for k in range(stop.max_steps + 1):
        x = algorithm.act(k, g)
        f, gn, pr = metric(x)
        done = k == stop.max_steps or _stop_metric(stop, f, gn, problem)
        extra = {"x": x} if record_points else {}
        trace.append(k=k, t=float(k), worker=0, event="stop" if done else "call", f=f,
                     grad_norm_sq=gn, prog=pr, extra=extra)
        if done:
            break
        g = est.draw(x, rng)
        if record_points:
            extra["g"] = g
    return trace


class SGD:
    """Classical SGD with optional batch b (b draws per step) for Protocol 1."""

    def __init__(self, x0, gamma, batch=1):
        self.x = np.asarray(x0, dtype=float)
        self.gamma = gamma
        self.batch = batch
        self.acc = np.zeros_like(self.x)
        self.count = 0

    def act(self, k, g):
        if g is not None:
            self.acc = self.acc + g / self.batch
            self.count += 1
            if self.count == self.batch:
                self.x = self.x - self.gamma * self.acc
                self.acc = np.zeros_like(self.x)
                self.count = 0
        return self.x


class TimeWrapped:
    """Run a classical algorithm against one delayed oracle.

    Even steps 2j start a computation at A^j at time j*tau; odd steps collect
    it at (j+1)*tau. On odd steps the current iterate is re-sent as the
    (ignored) query point, which keeps the metric stream on real iterates.
    """

    def __init__(self, classical, tau):
        self.alg = classical
        self.tau = float(tau)
        self.x = None

    def act(self, k, g):
        j = k // 2
        if k % 2 == 0:
            self.x = self.alg.act(j, g if k else None)
            return AlgorithmAction(self.tau * j, self.x)
        return AlgorithmAction(self.tau * (j + 1), self.x)


class ServerAdapter:
    """Drive a server logic (Rennala, Malenia, ...) through the time protocol.

    The adapter knows the pool's delays, so it schedules exactly the calls a
    real run would make: a start call when a worker is handed a point and a
    collect call at start + tau_i. Collect calls re-send the server's current
    iterate, which the busy oracle ignores.
    """

    def __init__(self, server, pool):
        self.server = server
        self.taus = pool.taus
        self.n = pool.n
        self.pending = []  # starts to issue at the current time, FIFO
        self.heap = []
        self.seq = 0
        self.tags = {}
        self.now = 0.0
        self.last = None  # (kind, worker)
        for (w, x, tag) in server.start(self.n):
            self.pending.append((w, x, tag))

    def act(self, k, g):
        if self.last is not None and self.last[0] == "collect":
            w = self.last[1]
            tag = self.tags.pop(w)
            out = g
            for a in self.server.on_report(self.now, w, tag, lambda: out):
                self.pending.append(a)
        if self.pending:
            w, x, tag = self.pending.pop(0)
            if w in self.tags:
                raise ProtocolViolation(k, f"worker {w} assigned while busy")
            self.tags[w] = tag
            heapq.heappush(self.heap, (self.now + self.taus[w], w, self.seq))
            self.seq += 1
            self.last = ("start", w)
            return AlgorithmAction(self.now, x, w)
        if not self.heap:
            # every worker idle and nothing to assign: park at the current time
            self.last = ("idle", 0)
            return AlgorithmAction(self.now, self.server.x, 0)
        t, w, _ = heapq.heappop(self.heap)
        self.now = t
        self.last = ("collect", w)
        return AlgorithmAction(t, self.server.x, w)


# ------------------------------------------------------------ measures


def measure_time_to_epsilon(trace, criterion="grad_norm_sq", eps=None):
    """First recorded time at which the running minimum of the metric is <= eps."""
    if eps is None or not eps > 0:
        raise InvalidParameter("eps must be positive")
    if criterion == "grad_norm_sq":
        vals = trace.column("grad_norm_sq")
    elif criterion == "suboptimality":
        vals = trace.suboptimality()
    elif criterion == "f":
        vals = trace.column("f")
    else:
        raise InvalidParameter(f"unknown criterion {criterion!r}")
    hit = np.flatnonzero(vals <= eps)
    if hit.size == 0:
        return None
    return float(trace.column("t")[hit[0]])


def check_zero_respecting(trace):
    """Steps whose query point leaves the span of previously received supports."""
    seen = set()
    violations = []
    for r, ex in enumerate(trace.extra):
        if "x" not in ex:
            raise InvalidParameter("zero-respecting check needs a trace with recorded points")
        supp = set(np.flatnonzero(ex["x"]).tolist())
        extra = supp - seen
        if extra:
            violations.append((trace.cols["k"][r], sorted(extra)))
        g = ex.get("g")
        if g is not None:
            seen.update(np.flatnonzero(g).tolist())
    return violations


def earliest_completion_times(pool, m):
    """The m smallest elements of the multiset {j tau_i : j >= 1}."""
    if m < 1:
        raise InvalidParameter("m must be >= 1")
    taus = pool.taus if hasattr(pool, "taus") else np.asarray(pool, float)
    heap = [(float(t), i, 1) for i, t in enumerate(taus)]
    heapq.heapify(heap)
    out = []
    while len(out) < m:
        t, i, j = heapq.heappop(heap)
        out.append(t)
        heapq.heappush(heap, ((j + 1) * float(taus[i]), i, j + 1))
    return out


@dataclass
class SuccessLedger:
    eta: list = field(default_factory=list)
    t_hat: list = field(default_factory=list)
    levels: list = field(default_factory=list)  # (level j, t^{k(j)}, sum of t_hat)
    violations: list = field(default_factory=list)
    unearned: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations and not self.unearned

    def to_json(self):
        return json.dumps({"eta": self.eta, "levels": self.levels,
                           "violations": self.violations, "unearned": self.unearned})


def success_ledger(trace, pool):
    """Audit a Protocol-3 trace on a Bernoulli-sparsified zero-chain instance.

    eta_j is the 1-based index, among deliveries computed at a stored point of
    progress j-1, of the first successful draw. For every reached level j the
    first step k(j) with prog(x^k) = j must satisfy
    t^{k(j)} >= sum_{i <= j} t_hat_{eta_i}. Separately, prog(x^k) may never
    exceed 1 + the highest stored progress of a success delivered before k.
    """
    counts: dict[int, int] = {}
    eta: dict[int, int] = {}
    best = 0  # progress any point may have given the successes so far
    first_k = {}
    led = SuccessLedger()
    max_level = 0
    for r, ex in enumerate(trace.extra):
        k = trace.cols["k"][r]
        pr = trace.cols["prog"][r]
        t = trace.cols["t"][r]
        if pr > best:
            led.unearned.append((k, pr, best))
        for j in range(max_level + 1, pr + 1):
            first_k[j] = (k, t)
        max_level = max(max_level, pr)
        if trace.cols["event"][r] == "deliver" and "xi" in ex:
            lvl = ex["s_prog"]
            counts[lvl] = counts.get(lvl, 0) + 1
            if ex["xi"] == 1:
                eta.setdefault(lvl + 1, counts[lvl])
                best = max(best, lvl + 1)
    if max_level:
        need = [eta.get(j, 0) for j in range(1, max_level + 1)]
        led.eta = need
        led.t_hat = earliest_completion_times(pool, max(max(need), 1))
        acc = 0.0
        for j in range(1, max_level + 1):
            if need[j - 1] == 0:
                led.violations.append((j, "level reached without a success"))
                continue
            acc += led.t_hat[need[j - 1] - 1]
            if j in first_k:
                tk = first_k[j][1]
                led.levels.append((j, tk, acc))
                if tk < acc:
                    led.violations.append((j, tk, acc))
    return led


def inf_or(v, default=math.inf):
    return default if v is None else v
