"""Server logics for the parallel methods and their theorem-prescribed
hyperparameters.

A server logic talks to workers through two calls:

* ``start(n)`` returns the initial assignments ``[(worker, point, tag), ...]``;
* ``on_report(t, worker, tag, grad)`` handles a finished computation and
  returns new assignments. ``grad`` is a zero-argument callable; a logic that
  discards a stale report never calls it, so no sample is drawn for it.

``x`` is the reported iterate and ``k`` the iteration counter; runners watch
``k`` to know when a step happened. ``last_delay`` is set by logics that
apply gradients computed at older iterates.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import InvalidConfig, InvalidParameter


class ServerLogic:
    name = "server"

    def __init__(self, x0):
        self.x = np.asarray(x0, dtype=float)
        self.k = 0
        self.last_delay = None
        self.audit = None  # set to a list to record (k, tag) of every used gradient

    @property
    def query(self):
        return self.x

    def start(self, n):
        return [(i, self.query, self.k) for i in range(n)]

    def on_report(self, t, worker, tag, grad):
        raise NotImplementedError

    def reported_point(self):
        return self.x


class Rennala(ServerLogic):
    """Collect S gradients computed at the current iterate, then step.

    Reports tagged with an older iteration are discarded. The reporting
    worker is always handed the newest point (after the step, if this report
    completed the batch).
    """

    name = "rennala"

    def __init__(self, x0, gamma, S, average=False):
        super().__init__(x0)
        if S < 1 or not gamma > 0:
            raise InvalidParameter("need S >= 1 and gamma > 0")
        self.gamma = float(gamma)
        self.S = int(S)
        self.acc = np.zeros_like(self.x)
        self.s = 0
        self.average = average
        self._sum = np.zeros_like(self.x)

    def on_report(self, t, worker, tag, grad):
        if tag == self.k:
            self.acc = self.acc + grad() / self.S
            self.s += 1
            if self.audit is not None:
                self.audit.append((self.k, tag))
            if self.s == self.S:
                self._step(self.acc)
                self.acc = np.zeros_like(self.x)
                self.s = 0
        return [(worker, self.query, self.k)]

    def _step(self, g):
        self._sum = self._sum + self.x
        self.x = self.x - self.gamma * g
        self.k += 1

    def reported_point(self):
        # (1/k) sum_{j<k} x^j, the averaged iterate of the convex analysis
        if self.average and self.k:
            return self._sum / self.k
        return self.x


class AcceleratedRennala(Rennala):
    """Rennala batch collection with the three-sequence accelerated update.

    Workers compute gradients at y^{k+1} = (1 - a)x^k + a u^k, a = 2/(k+2);
    then u^{k+1} = u^k - gamma (k+1) g and x^{k+1} = (1 - a)x^k + a u^{k+1}.
    """

    name = "accelerated_rennala"

    def __init__(self, x0, gamma, S):
        super().__init__(x0, gamma, S)
        self.u = self.x.copy()
        self.y = self._mix()

    def _mix(self):
        a = 2.0 / (self.k + 2)
        return (1 - a) * self.x + a * self.u

    @property
    def query(self):
        return self.y

    def _step(self, g):
        a = 2.0 / (self.k + 2)
        self.u = self.u - self.gamma * (self.k + 1) * g
        self.x = (1 - a) * self.x + a * self.u
        self.k += 1
        self.y = self._mix()


class Malenia(ServerLogic):
    """Per-worker batches, step once the harmonic mean of counts reaches S/n."""

    name = "malenia"

    def __init__(self, x0, gamma, S, n):
        super().__init__(x0)
        if S < 1 or n < 1 or not gamma > 0:
            raise InvalidParameter("need S >= 1, n >= 1, gamma > 0")
        self.gamma = float(gamma)
        self.S = S
        self.n = n
        self._reset()
        self.guard_log = None

    def _reset(self):
        self.g = np.zeros((self.n, self.x.size))
        self.B = np.zeros(self.n, dtype=int)

    def harmonic(self):
        if np.any(self.B == 0):
            return 0.0
        return 1.0 / np.mean(1.0 / self.B)

    def on_report(self, t, worker, tag, grad):
        if tag == self.k:
            self.g[worker] += grad()
            self.B[worker] += 1
            if self.audit is not None:
                self.audit.append((self.k, tag))
            h = self.harmonic()
            if h >= self.S / self.n:
                if self.guard_log is not None:
                    self.guard_log.append((h, self.B.copy()))
                direction = np.mean(self.g / self.B[:, None], axis=0)
                self.x = self.x - self.gamma * direction
                self.k += 1
                self._reset()
        return [(worker, self.x, self.k)]


class MMinibatch(ServerLogic):
    """Synchronous rounds: the m fastest workers each return one gradient."""

    name = "m_minibatch"

    def __init__(self, x0, gamma, m, fastest=None):
        super().__init__(x0)
        if m < 1 or not gamma > 0:
            raise InvalidParameter("need m >= 1, gamma > 0")
        self.gamma = float(gamma)
        self.m = int(m)
        self.fastest = fastest
        self.acc = np.zeros_like(self.x)
        self.s = 0

    def start(self, n):
        if self.m > n:
            raise InvalidParameter(f"m = {self.m} exceeds n = {n}")
        if self.fastest is None:
            self.fastest = list(range(self.m))
        return [(i, self.x, self.k) for i in self.fastest[: self.m]]

    def on_report(self, t, worker, tag, grad):
        self.acc = self.acc + grad() / self.m
        self.s += 1
        if self.s < self.m:
            return []
        self.x = self.x - self.gamma * self.acc
        self.k += 1
        self.acc = np.zeros_like(self.x)
        self.s = 0
        return [(i, self.x, self.k) for i in self.fastest[: self.m]]


class AsyncSGD(ServerLogic):
    """Apply every gradient on arrival; x^{k+1} = x^k - gamma_k g(x^{k - delta_k}).

    ``rule="constant"`` uses gamma; ``rule="delay-adaptive"`` uses
    min(gamma, c_a / (L (delta_k + 1))).
    """

    name = "async"

    def __init__(self, x0, gamma, rule="constant", L=None, c_a=0.25):
        super().__init__(x0)
        if rule not in ("constant", "delay-adaptive"):
            raise InvalidParameter(f"unknown stepsize rule {rule!r}")
        if rule == "delay-adaptive" and not (L and L > 0):
            raise InvalidParameter("delay-adaptive rule needs L > 0")
        self.gamma = float(gamma)
        self.rule = rule
        self.L = L
        self.c_a = c_a
        self.delays = None  # set to a list to record every delta_k

    def stepsize(self, delay):
        if self.rule == "constant":
            return self.gamma
        return min(self.gamma, self.c_a / (self.L * (delay + 1)))

    def on_report(self, t, worker, tag, grad):
        delay = self.k - tag
        self.last_delay = delay
        if self.delays is not None:
            self.delays.append((worker, delay))
        self.x = self.x - self.stepsize(delay) * grad()
        self.k += 1
        return [(worker, self.x, self.k)]


# ------------------------------------------------------------ hyperparameters


@dataclass
class Hyperparams:
    gamma: float
    S: int = 1
    K: int = 1
    m: Optional[int] = None
    schedule: Optional[str] = None
    extra: dict = field(default_factory=dict)


def _ceil(v):
    # guard against values like 20.000000000000004 from float division
    r = round(v)
    return int(r) if abs(v - r) <= 1e-9 * max(1.0, abs(v)) else math.ceil(v)


def optimal_m(taus, sigma2, eps):
    """Smallest-index argmin over m of tau_m (1 + sigma2/(m eps))."""
    taus = np.asarray(taus, dtype=float)
    if taus.size == 0:
        raise InvalidParameter("empty pool")
    if np.any(np.diff(taus) < 0):
        raise InvalidParameter("taus must be sorted ascending")
    m = np.arange(1, taus.size + 1)
    return int(np.argmin(taus * (1 + sigma2 / (m * eps)))) + 1


def _need(method, **kw):
    missing = [k for k, v in kw.items() if v is None]
    if missing:
        raise InvalidConfig(f"{method}: theorem hyperparameters need {', '.join(missing)}")


def hyperparams_for(method, eps, sigma2, L=None, delta=None, M=None, R=None, n=None, K=None,
                    taus=None, m=None):
    if not eps > 0 or sigma2 < 0:
        raise InvalidParameter("need eps > 0 and sigma2 >= 0")
    if method in ("rennala", "malenia"):
        _need(method, L=L, delta=delta)
        S = max(_ceil(sigma2 / eps), 1)
        if method == "malenia":
            _need(method, n=n)
            S = max(S, n)
        gamma = 1 / L if sigma2 == 0 else min(1 / L, eps * S / (2 * L * sigma2))
        return Hyperparams(gamma, S, _ceil(24 * delta * L / eps))
    if method == "rennala_convex":
        _need(method, M=M, R=R)
        S = max(_ceil(sigma2 / M**2), 1)
        return Hyperparams(eps / (M**2 + sigma2 / S), S, _ceil(2 * M**2 * R**2 / eps**2),
                           schedule="average")
    if method == "accelerated_rennala":
        _need(method, L=L, R=R)
        S = max(_ceil(sigma2 * R / (eps**1.5 * math.sqrt(L))), 1)
        K = K or _ceil(8 * math.sqrt(L) * R / math.sqrt(eps))
        g = 1 / (4 * L)
        if sigma2 > 0:
            g = min(g, math.sqrt(3 * R**2 * S / (4 * sigma2 * (K + 1) * (K + 2) ** 2)))
        return Hyperparams(g, S, K, schedule="accelerated")
    if method == "m_minibatch":
        _need(method, L=L, delta=delta)
        if m is None:
            _need(method, taus=taus)
            m = optimal_m(taus, sigma2, eps)
        gamma = 1 / L if sigma2 == 0 else min(1 / L, eps * m / (2 * L * sigma2))
        return Hyperparams(gamma, 1, _ceil(12 * delta * L / eps + 12 * delta * L * sigma2 / (eps**2 * m)),
                           m=m)
    if method == "sgd":
        _need(method, L=L, delta=delta)
        gamma = 1 / L if sigma2 == 0 else min(1 / L, eps / (2 * L * sigma2))
        return Hyperparams(gamma, 1, _ceil(4 * delta * L / eps + 8 * delta * L * sigma2 / eps**2))
    raise InvalidConfig(f"no theorem prescription for method {method!r}")


DEFAULT_GAMMA_GRID = [2.0**i for i in range(-20, 21)]
DEFAULT_S_GRID = [1, 5, 10, 20, 40, 80, 100, 200, 500, 1000]


def grid_search(run, grids: dict, score):
    """Evaluate ``run(**params)`` over the grid product; lower score wins.

    Returns (best params, best score, all results). Ties keep the first
    point in grid order. Scores of None count as failures (infinite).
    """
    if not grids or any(len(v) == 0 for v in grids.values()):
        raise InvalidConfig("empty grid")
    keys = list(grids)
    results = []
    best, best_score = None, math.inf
    for combo in itertools.product(*(grids[k] for k in keys)):
        params = dict(zip(keys, combo))
        out = run(**params)
        s = score(out)
        s = math.inf if s is None else s
        results.append((params, s))
        if s < best_score:
            best, best_score = params, s
    return best, best_score, results


def on_boundary(best, grids):
    """Names of grid axes whose selected value is an end point."""
    return [k for k, v in best.items() if len(grids[k]) > 1 and v in (grids[k][0], grids[k][-1])]
