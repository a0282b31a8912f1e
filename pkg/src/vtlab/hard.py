"""Worst-case instances: the chain function F_T, its scaled nonconvex and
heterogeneous versions, and the convex max-of-affine Moreau envelope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from .core import BernoulliEstimator, ExactEstimator, InvalidParameter, ProblemSpec, prog

DELTA0 = 12.0
L1 = 152.0
GAMMA_INF = 23.0

_SQRT_E = math.sqrt(math.e)
_PHI_SCALE = _SQRT_E * math.sqrt(math.pi / 2)


class InstanceTooSmall(ValueError):
    pass


def psi(x):
    """0 for x <= 1/2, exp(1 - 1/(2x-1)^2) otherwise."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    m = x > 0.5
    z = 2 * x[m] - 1
    # exp underflows to 0 as z -> 0+, which is the correct limit
    with np.errstate(divide="ignore", over="ignore"):
        out[m] = np.exp(1 - 1 / (z * z))
    return out


def dpsi(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    m = x > 0.5
    z = 2 * x[m] - 1
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        v = np.exp(1 - 1 / (z * z)) * 4 / z**3
    out[m] = np.where(np.isfinite(v), v, 0.0)
    return out


def phi(x):
    """sqrt(e) * int_{-inf}^x exp(-t^2/2) dt."""
    return _PHI_SCALE * erfc(-np.asarray(x, dtype=float) / math.sqrt(2))


def dphi(x):
    x = np.asarray(x, dtype=float)
    return _SQRT_E * np.exp(-0.5 * x * x)


def _check(x, T):
    x = np.asarray(x, dtype=float)
    if x.shape != (T,):
        raise InvalidParameter(f"expected a vector of length {T}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidParameter("non-finite input")
    return x


def ft_value(x, T=None) -> float:
    x = np.asarray(x, dtype=float)
    x = _check(x, x.size if T is None else T)
    v = -phi(x[0])  # psi(1) = 1
    if x.size > 1:
        a, b = x[:-1], x[1:]
        v = v + np.sum(psi(-a) * phi(-b) - psi(a) * phi(b))
    return float(v)


def ft_grad(x, T=None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    x = _check(x, x.size if T is None else T)
    g = np.empty_like(x)
    g[0] = -dphi(x[0])
    if x.size > 1:
        a, b = x[:-1], x[1:]
        # derivative w.r.t. the second argument of each link
        g[1:] = -psi(-a) * dphi(-b) - psi(a) * dphi(b)
        # derivative w.r.t. the first argument
        g[:-1] += -dpsi(-a) * phi(-b) - dpsi(a) * phi(b)
    return g


# ------------------------------------------------------------ nonconvex


@dataclass
class NonconvexHard:
    T: int
    lam: float
    L: float
    delta: float
    sigma2: float
    eps: float
    p: float

    @property
    def scale(self) -> float:
        return self.L * self.lam**2 / L1

    def value(self, x):
        return self.scale * ft_value(np.asarray(x, float) / self.lam)

    def gradient(self, x):
        return (self.scale / self.lam) * ft_grad(np.asarray(x, float) / self.lam)

    def problem(self) -> ProblemSpec:
        # f(0) - inf f <= scale * 12 T <= delta; f* is only bounded, so expose
        # the certified lower bound as f_star
        f0 = self.value(np.zeros(self.T))
        return ProblemSpec(self.T, self.value, self.gradient, self.L, np.zeros(self.T),
                           f_star=f0 - self.delta, name=f"ft_hard(T={self.T})")

    def estimator(self):
        return BernoulliEstimator(self.gradient, self.p, self.sigma2)


def make_nonconvex_hard(L, delta, sigma2, eps) -> NonconvexHard:
    if min(L, delta, eps) <= 0 or sigma2 < 0:
        raise InvalidParameter("L, delta, eps must be positive and sigma2 >= 0")
    lam = math.sqrt(2 * eps) * L1 / L
    T = math.floor(delta * L / (2 * eps * L1 * DELTA0))
    if T < 1:
        raise InstanceTooSmall(f"T = {T}: increase delta*L or decrease eps")
    p = 1.0 if sigma2 == 0 else min(2 * eps * GAMMA_INF**2 / sigma2, 1.0)
    return NonconvexHard(T, lam, L, delta, sigma2, eps, p)


# ------------------------------------------------------------ heterogeneous


@dataclass
class HeterogHard:
    """f = (1/n) sum_i f_i with f_i acting only on block i (or only f_n non-zero)."""

    n: int
    T: int
    lams: np.ndarray
    L: float
    ps: np.ndarray
    variant: str = "blocks"
    blocks: list = field(default_factory=list)

    @property
    def d(self):
        return self.T * len(self.blocks)

    def local_value(self, i, x):
        j = self._block_of(i)
        if j is None:
            return 0.0
        lo, hi = self.blocks[j]
        lam = self.lams[j]
        return self.n * self.L * lam**2 / L1 * ft_value(np.asarray(x, float)[lo:hi] / lam)

    def local_gradient(self, i, x):
        g = np.zeros(self.d)
        j = self._block_of(i)
        if j is None:
            return g
        lo, hi = self.blocks[j]
        lam = self.lams[j]
        g[lo:hi] = self.n * self.L * lam / L1 * ft_grad(np.asarray(x, float)[lo:hi] / lam)
        return g

    def _block_of(self, i):
        if self.variant == "blocks":
            return i
        return 0 if i == self.n - 1 else None

    def value(self, x):
        return sum(self.local_value(i, x) for i in range(self.n)) / self.n

    def gradient(self, x):
        return sum(self.local_gradient(i, x) for i in range(self.n)) / self.n

    def problem(self) -> ProblemSpec:
        return ProblemSpec(self.d, self.value, self.gradient, self.L, np.zeros(self.d),
                           name=f"heterog_hard({self.variant}, n={self.n}, T={self.T})")

    def estimators(self):
        out = []
        for i in range(self.n):
            gi = (lambda x, i=i: self.local_gradient(i, x))
            j = self._block_of(i)
            if j is None or self.ps[j] >= 1:
                out.append(ExactEstimator(gi))
            else:
                out.append(BernoulliEstimator(gi, self.ps[j], block=self.blocks[j]))
        return out


def make_heterog_hard(n, L, delta, sigma2, eps, taus, variant="blocks", eta=4.0) -> HeterogHard:
    if n < 1:
        raise InvalidParameter("n must be >= 1")
    taus = np.asarray(taus, dtype=float)
    if taus.shape != (n,) or np.any(taus <= 0) or not np.all(np.isfinite(taus)):
        raise InvalidParameter("need n positive finite delays")
    if variant == "single":
        lam = L1 * math.sqrt(eps) / L
        T = math.floor(delta * L / (L1 * eps * DELTA0))
        if T < 1:
            raise InstanceTooSmall(f"T = {T}")
        return HeterogHard(n, T, np.array([lam]), L, np.array([1.0]), "single", [(0, T)])
    if variant != "blocks":
        raise InvalidParameter(f"unknown variant {variant!r}")
    T = math.floor(delta * L / (eta * eps * L1 * DELTA0))
    if T < 1:
        raise InstanceTooSmall(f"T = {T}")
    tot = float(taus.sum())
    lams = L1 * np.sqrt(eta * eps * taus) / (L * math.sqrt(tot))
    if sigma2 == 0:
        ps = np.ones(n)
    else:
        ps = np.minimum(n**2 * GAMMA_INF**2 * eta * eps * taus / (sigma2 * tot), 1.0)
    blocks = [(i * T, (i + 1) * T) for i in range(n)]
    return HeterogHard(n, T, lams, L, ps, "blocks", blocks)


# ------------------------------------------------------------ convex


def project_simplex(v):
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = ind[u - css / ind > 0][-1]
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0), theta


def project_simplex_bisect(v, iters=200):
    """Same projection by bisection on the threshold; an independent reference."""
    v = np.asarray(v, dtype=float)
    lo, hi = v.min() - 1.0, v.max()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.maximum(v - mid, 0).sum() > 1:
            lo = mid
        else:
            hi = mid
    return np.maximum(v - 0.5 * (lo + hi), 0.0)


def _convex_offsets(dim, l, eta):
    return 5 * l * l * np.arange(dim) / eta


def convex_dual(x, l, eta):
    """Dual weights on the simplex and their threshold for the prox of f~."""
    x = np.asarray(x, dtype=float)
    v = (eta / l) * x - 5 * np.arange(x.size)
    return project_simplex(v)


def convex_prox(x, l, eta):
    """argmin_y max_r(l y_r - 5 l^2 (r-1)/eta) + eta/2 |y - x|^2."""
    if l <= 0 or eta <= 0:
        raise InvalidParameter("l and eta must be positive")
    lam, _ = convex_dual(x, l, eta)
    return np.asarray(x, float) - (l / eta) * lam


def kkt_residual(x, l, eta):
    """Max violation of simplex feasibility and complementary slackness."""
    lam, theta = convex_dual(x, l, eta)
    v = (eta / l) * np.asarray(x, float) - 5 * np.arange(lam.size)
    feas = abs(lam.sum() - 1) + max(0.0, -lam.min())
    slack = np.max(np.abs(lam * (v - theta - lam)))
    dual_feas = max(0.0, float(np.max(v - theta - lam)))
    return float(max(feas, slack, dual_feas))


@dataclass
class ConvexHard:
    T: int
    l: float
    eta: float
    M: float = 0.0
    L: float = 0.0
    eps: float = 0.0

    @property
    def d(self):
        return self.T + 1

    def f_tilde(self, y):
        y = np.asarray(y, float)
        return float(np.max(self.l * y - _convex_offsets(y.size, self.l, self.eta)))

    def value(self, x):
        y = convex_prox(x, self.l, self.eta)
        return self.f_tilde(y) + 0.5 * self.eta * float(np.sum((y - np.asarray(x, float)) ** 2))

    def gradient(self, x):
        lam, _ = convex_dual(x, self.l, self.eta)
        return self.l * lam

    def witness(self):
        return -np.ones(self.d) / math.sqrt(self.d)

    def min_bound(self):
        """Certified upper bound on min over the unit ball."""
        return -self.l / math.sqrt(self.d)

    def problem(self) -> ProblemSpec:
        return ProblemSpec(self.d, self.value, self.gradient, self.eta, np.zeros(self.d),
                           M=self.l, R=1.0, name=f"convex_hard(T={self.T})")


def make_convex_hard(M, L, eps) -> ConvexHard:
    if min(M, L, eps) <= 0:
        raise InvalidParameter("M, L, eps must be positive")
    T = min(math.floor(M * M / (64 * eps * eps) - 1),
            math.floor(math.sqrt(L) / (math.sqrt(80) * math.sqrt(eps)) - 1))
    if T < 1:
        raise InstanceTooSmall(f"T = {T}")
    l = min(M, L / (10 * (T + 1) ** 1.5))
    eta = 10 * (T + 1) ** 1.5 * l
    return ConvexHard(T, l, eta, M, L, eps)


__all__ = [
    "prog", "psi", "phi", "ft_value", "ft_grad", "make_nonconvex_hard", "make_heterog_hard",
    "make_convex_hard", "convex_prox", "project_simplex", "DELTA0", "L1", "GAMMA_INF",
]
