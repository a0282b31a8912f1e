"""State machines for the delayed, interruptible and synchronized gradient oracles.

An oracle call returns ``(new_state, gradient, info)``. ``gradient`` is None
when nothing is delivered (the zero vector of the formal definition; keeping
it as None avoids allocating zeros on every non-delivering call). ``info``
carries the sample(s) consumed and, for the sync oracle, the number of
gradients included.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import InvalidConfig, bernoulli_sparsified_grad  # noqa: F401  (re-export)


@dataclass(frozen=True)
class OracleState:
    s_t: float = 0.0
    s_x: Optional[np.ndarray] = None
    s_q: int = 0

    @property
    def busy(self) -> bool:
        return self.s_q == 1


IDLE = OracleState()
SyncOracleState = OracleState


def _start(t, x):
    x = np.array(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("query point must be finite")
    return OracleState(float(t), x, 1)


def delayed_oracle_step(t, x, s: OracleState, rng, tau, est):
    """One call of the fixed-delay oracle.

    idle -> start computing at x; busy and not finished -> nothing; busy and
    t >= s_t + tau -> deliver a draw at the stored point and go idle. The
    sample is drawn lazily, only on delivery.
    """
    if not s.busy:
        return _start(t, x), None, None
    if t < s.s_t + tau:
        return s, None, None
    xi = est.sample(rng)
    return IDLE, est.grad(s.s_x, xi), xi


def interruptible_oracle_step(t, x, s: OracleState, c: int, rng, tau, est):
    """Delayed oracle with a stop bit: c = 1 discards any computation."""
    if c:
        return IDLE, None, None
    return delayed_oracle_step(t, x, s, rng, tau, est)


def sync_oracle_step(t, x, s: OracleState, rngs, taus, est):
    """Synchronized oracle: all n workers start together.

    On a busy call at t in [s_t + tau_m, s_t + tau_{m+1}) the state resets and
    the sum of m draws at the stored point is returned (m = 0 is a wasted
    round). ``info`` is ``(m, samples)``.
    """
    taus = np.asarray(taus, dtype=float)
    if np.any(np.diff(taus) < 0):
        raise InvalidConfig("sync oracle needs delays sorted ascending")
    if not s.busy:
        return _start(t, x), None, (0, [])
    m = int(np.searchsorted(taus, t - s.s_t, side="right"))
    if m == 0:
        return IDLE, None, (0, [])
    samples, total = [], None
    for i in range(m):
        xi = est.sample(rngs[i])
        samples.append(xi)
        g = est.grad(s.s_x, xi)
        total = g if total is None else total + g
    return IDLE, total, (m, samples)
