"""Closed-form time-complexity expressions and lemma inequalities.

Universal constants are dropped everywhere: values are meant for ratios and
trends, not absolute predictions. All argmins pick the smallest index.
Functions accept floats or ``fractions.Fraction`` delays; with Fractions the
arithmetic is exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

from .core import InvalidParameter


def _sorted(taus):
    taus = list(taus)
    if not taus:
        raise InvalidParameter("empty delay list")
    if any(b < a for a, b in zip(taus, taus[1:])):
        raise InvalidParameter("delays must be sorted ascending")
    if any(not t > 0 for t in taus):
        raise InvalidParameter("delays must be positive")
    return taus


def _prefix_inv(taus):
    out, acc = [], 0
    for t in taus:
        acc = acc + 1 / t
        out.append(acc)
    return out


def _argmin(vals):
    best = 0
    for j, v in enumerate(vals):
        if v < vals[best]:
            best = j
    return best


def t_prime(taus, S, j):
    """(sum_{i<=j} 1/tau_i)^{-1} (S + j)."""
    taus = _sorted(taus)
    if not 1 <= j <= len(taus):
        raise InvalidParameter("j out of range")
    return (S + j) / _prefix_inv(taus)[j - 1]


def t_prime_min(taus, S):
    taus = _sorted(taus)
    h = _prefix_inv(taus)
    vals = [(S + j + 1) / h[j] for j in range(len(taus))]
    j = _argmin(vals)
    return vals[j], j + 1


@dataclass
class ComplexityReport:
    values: dict = field(default_factory=dict)
    argmins: dict = field(default_factory=dict)
    measured: dict = field(default_factory=dict)
    note: str = "universal constants omitted; compare ratios only"

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=float)

    def table(self):
        lines = [f"{'expression':<28}{'value':>16}{'argmin':>8}"]
        for k, v in self.values.items():
            m = self.argmins.get(k, "")
            lines.append(f"{k:<28}{v:>16.6g}{m!s:>8}")
        for k, v in self.measured.items():
            lines.append(f"{'measured:' + k:<28}{v:>16.6g}")
        return "\n".join(lines)


def time_bounds(taus, L, delta, sigma2, eps) -> ComplexityReport:
    taus = _sorted(taus)
    n = len(taus)
    h = _prefix_inv(taus)
    A = L * delta / eps
    B = sigma2 * L * delta / eps**2
    rep = ComplexityReport()
    rep.values["minibatch"] = taus[-1] * (A + B / n)
    rep.values["async"] = n / h[-1] * (A + B / n)
    homog = [(m + 1) / h[m] * (A + B / (m + 1)) for m in range(n)]
    j = _argmin(homog)
    rep.values["rennala"] = homog[j]
    rep.argmins["rennala"] = j + 1
    rep.values["heterog"] = taus[-1] * A + (sum(taus) / n) * B / n
    sync = [taus[m] * (A + B / (m + 1)) for m in range(n)]
    j = _argmin(sync)
    rep.values["sync"] = sync[j]
    rep.argmins["sync"] = j + 1
    return rep


def convex_bounds(taus, L, M, R, sigma2, eps) -> ComplexityReport:
    taus = _sorted(taus)
    n = len(taus)
    h = _prefix_inv(taus)
    first = min(math.sqrt(L) * R / math.sqrt(eps), M**2 * R**2 / eps**2)
    stat = sigma2 * R**2 / eps**2
    rep = ComplexityReport()
    vals = [(m + 1) / h[m] * (first + stat / (m + 1)) for m in range(n)]
    j = _argmin(vals)
    rep.values["convex"] = vals[j]
    rep.argmins["convex"] = j + 1
    rep.values["graph_oracle"] = taus[0] * first + n / h[-1] * stat / n
    rep.values["ratio"] = rep.values["convex"] / rep.values["graph_oracle"]
    return rep


def lemma_tau_check(taus, S):
    """Both sides of the batch-time lemma: t1 <= t2 <= 6 t1 for S >= 1/4.

    t1 = S (sum_{i<=j1} 1/tau_i)^{-1} with j1 the smallest m such that
    S (sum_{i<=m} 1/tau_i)^{-1} < tau_{m+1} (tau_{n+1} = inf);
    t2 = min_j (sum_{i<=j} 1/tau_i)^{-1} (S + j).
    """
    taus = _sorted(taus)
    if S < 0.25:
        raise InvalidParameter("lemma needs S >= 1/4")
    h = _prefix_inv(taus)
    n = len(taus)
    j1 = n
    for m in range(1, n):
        if S / h[m - 1] < taus[m]:
            j1 = m
            break
    t1 = S / h[j1 - 1]
    t2 = min((S + j) / h[j - 1] for j in range(1, n + 1))
    return t1, t2


def lemma_tau_sync_check(taus, eta):
    """Sync analogue: t1 = eta min_{m <= min(eta, n)} tau_m/m, t2 = min_m tau_m (1 + eta/m)."""
    taus = _sorted(taus)
    if int(eta) != eta or eta < 1:
        raise InvalidParameter("eta must be a positive integer")
    eta = int(eta)
    n = len(taus)
    t1 = eta * min(taus[m - 1] / m for m in range(1, min(eta, n) + 1))
    t2 = min(taus[m - 1] * (m + eta) / m for m in range(1, n + 1))
    return t1, t2
