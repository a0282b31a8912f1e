"""Shared domain types: problems, stochastic-gradient estimators, worker pools
and the seeding contract.

Every estimator splits a draw into two halves: ``sample(rng)`` produces the
random sample xi and ``grad(x, xi)`` maps it to a gradient. Oracles record xi
so that traces can be replayed and success counts audited.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np


class InvalidDimension(ValueError):
    pass


class InvalidParameter(ValueError):
    pass


class InvalidConfig(ValueError):
    pass


def prog(x) -> int:
    """Largest 1-based index of a non-zero coordinate, 0 for the zero vector."""
    nz = np.asarray(x).ravel().nonzero()[0]
    return int(nz[-1]) + 1 if nz.size else 0


def check_time(t) -> float:
    t = float(t)
    if not math.isfinite(t) or t < 0:
        raise InvalidParameter(f"virtual time must be finite and >= 0, got {t}")
    return t


@dataclass
class ProblemSpec:
    """A differentiable objective with the constants the theorems consume."""

    d: int
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    L: float
    x0: np.ndarray
    f_star: Optional[float] = None
    M: Optional[float] = None
    R: Optional[float] = None
    name: str = "problem"
    fused: Optional[Callable] = None  # x -> (f, grad), when cheaper than two calls

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.x0.shape != (self.d,):
            raise InvalidDimension(f"x0 has shape {self.x0.shape}, expected ({self.d},)")
        if not self.L > 0:
            raise InvalidParameter("L must be positive")

    def value_and_grad(self, x):
        if self.fused is not None:
            return self.fused(x)
        return float(self.value(x)), self.gradient(x)

    @property
    def delta(self) -> float:
        if self.f_star is None:
            raise InvalidParameter(f"{self.name}: f* unknown, gap undefined")
        return max(float(self.value(self.x0)) - self.f_star, 0.0)


def finite_difference(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


# ---------------------------------------------------------------- problems


def quadratic_problem(d: int, x0=None) -> ProblemSpec:
    """f(x) = 1/2 x^T A x - b^T x with A = tridiag(-1, 2, -1)/4, b = (-1/4, 0, ...).

    The minimizer solves a tridiagonal system in closed form:
    x*_j = -(d + 1 - j) / (d + 1).
    """
    if d < 2:
        raise InvalidDimension(f"quadratic needs d >= 2, got {d}")
    b = np.zeros(d)
    b[0] = -0.25

    def matvec(x):
        y = 0.5 * x
        y[1:] -= 0.25 * x[:-1]
        y[:-1] -= 0.25 * x[1:]
        return y

    def value(x):
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ matvec(x) - b @ x)

    def gradient(x):
        return matvec(np.asarray(x, dtype=float)) - b

    def fused(x):
        x = np.asarray(x, dtype=float)
        g = matvec(x) - b
        return float(0.5 * (x @ g) - 0.5 * (b @ x)), g

    # eigenvalues of tridiag(-1,2,-1)/4 are (2 - 2cos(k pi/(d+1)))/4
    L = 0.25 * (2.0 - 2.0 * math.cos(d * math.pi / (d + 1)))
    j = np.arange(1, d + 1)
    x_star = -(d + 1 - j) / (d + 1)
    f_star = 0.5 * float(b @ x_star) - float(b @ x_star)
    if x0 is None:
        x0 = np.zeros(d)
    spec = ProblemSpec(d, value, gradient, L, x0, f_star=f_star, name=f"quadratic(d={d})",
                       fused=fused)
    spec.A_dense = lambda: 0.25 * (2 * np.eye(d) - np.eye(d, k=1) - np.eye(d, k=-1))
    spec.b = b
    spec.x_star = x_star
    return spec


def shifted_quadratics(d: int, n: int, shift: float = 0.1, seed: int = 0):
    """n local quadratics sharing A, with linear terms b + c_i where sum c_i = 0.

    Returns (global problem, list of local problems). The average of the
    local objectives is exactly the global one.
    """
    base = quadratic_problem(d)
    rng = np.random.default_rng(seed)
    c = rng.standard_normal((n, d)) * shift
    c -= c.mean(axis=0)
    locals_ = []
    for i in range(n):
        ci = c[i].copy()
        locals_.append(
            ProblemSpec(
                d,
                (lambda x, ci=ci: base.value(x) - float(ci @ np.asarray(x, float))),
                (lambda x, ci=ci: base.gradient(x) - ci),
                base.L,
                base.x0,
                name=f"quadratic_local[{i}]",
            )
        )
    return base, locals_


def pseudo_huber_problem(d: int, M: float = 1.0, mu: float = 1.0, radius: float = 1.0) -> ProblemSpec:
    """f(x) = M (sqrt(mu^2 + |x - x*|^2) - mu): convex, M-Lipschitz, (M/mu)-smooth, f* = 0."""
    x_star = np.zeros(d)
    x_star[0] = radius

    def value(x):
        r2 = float(np.sum((np.asarray(x, float) - x_star) ** 2))
        return M * (math.sqrt(mu * mu + r2) - mu)

    def gradient(x):
        z = np.asarray(x, float) - x_star
        return M * z / math.sqrt(mu * mu + float(z @ z))

    return ProblemSpec(d, value, gradient, M / mu, np.zeros(d), f_star=0.0, M=M, R=radius,
                       name=f"pseudo_huber(d={d})")


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _log1pexp(z):
    return np.logaddexp(0.0, z)


def logreg_problem(features, labels, regularization: float = 0.0) -> ProblemSpec:
    """Regularized binary logistic loss (1/N) sum log(1 + exp(-s_i a_i^T w)) + reg/2 |w|^2."""
    A = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if A.ndim != 2 or A.shape[0] == 0:
        raise InvalidParameter("empty dataset")
    if A.shape[0] != y.shape[0]:
        raise InvalidParameter("rows(features) != len(labels)")
    if not np.all((y == 0) | (y == 1)):
        raise InvalidParameter("labels must be in {0, 1}")
    if regularization < 0:
        raise InvalidParameter("regularization must be >= 0")
    s = 2.0 * y - 1.0
    N, d = A.shape

    def batch_value(w, idx=None):
        Ai, si = (A, s) if idx is None else (A[idx], s[idx])
        return float(np.mean(_log1pexp(-si * (Ai @ w)))) + 0.5 * regularization * float(w @ w)

    def batch_grad(w, idx=None):
        Ai, si = (A, s) if idx is None else (A[idx], s[idx])
        r = -si * _sigmoid(-si * (Ai @ w))
        return Ai.T @ r / Ai.shape[0] + regularization * w

    # spectral bound of the Hessian: |A|_2^2 / (4N) + reg
    L = float(np.linalg.norm(A, 2) ** 2) / (4 * N) + regularization
    spec = ProblemSpec(d, lambda w: batch_value(np.asarray(w, float)),
                       lambda w: batch_grad(np.asarray(w, float)),
                       max(L, 1e-12), np.zeros(d), name=f"logreg(N={N}, d={d})")
    spec.batch_grad = batch_grad
    spec.n_samples = N
    return spec


def load_dataset(path):
    """Read `label,f1,f2,...` CSV or LIBSVM-style `label idx:val ...` lines.

    LIBSVM indices are 1-based. Blank lines and lines starting with '#' are
    skipped. Returns (features, labels).
    """
    rows, labels, sparse = [], [], False
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if ":" in line:
                sparse = True
                head, *rest = line.split()
                labels.append(float(head))
                rows.append({int(k): float(v) for k, v in (t.split(":") for t in rest)})
            else:
                vals = [float(v) for v in line.split(",")]
                labels.append(vals[0])
                rows.append(vals[1:])
    if not rows:
        raise InvalidParameter(f"{path}: empty dataset")
    if sparse:
        d = max((max(r) for r in rows if r), default=0)
        X = np.zeros((len(rows), d))
        for i, r in enumerate(rows):
            for k, v in r.items():
                X[i, k - 1] = v
    else:
        X = np.asarray(rows, dtype=float)
    return X, np.asarray(labels)


def save_dataset(path, features, labels, sparse=False):
    with open(path, "w") as fh:
        for row, lab in zip(np.asarray(features), np.asarray(labels)):
            if sparse:
                toks = [f"{j + 1}:{float(v)!r}" for j, v in enumerate(row) if v != 0]
                fh.write(" ".join([repr(float(lab))] + toks) + "\n")
            else:
                fh.write(",".join(repr(float(v)) for v in [lab, *row]) + "\n")


# ---------------------------------------------------------------- estimators


class Estimator:
    """Unbiased stochastic gradient with second central moment <= sigma2."""

    kind = "abstract"
    sigma2 = 0.0

    def sample(self, rng):
        return None

    def grad(self, x, xi):
        raise NotImplementedError

    def draw(self, x, rng):
        return self.grad(x, self.sample(rng))

    def true_grad(self, x):
        raise NotImplementedError


class ExactEstimator(Estimator):
    """Deterministic draws. Also the constant distribution used when sigma2 = 0."""

    kind = "exact"

    def __init__(self, problem_or_grad):
        self._g = getattr(problem_or_grad, "gradient", problem_or_grad)

    def grad(self, x, xi):
        return self._g(x)

    def true_grad(self, x):
        return self._g(x)


class GaussianEstimator(Estimator):
    """grad f(x) + N(0, sigma2/d I); total second central moment sigma2."""

    kind = "gaussian"

    def __init__(self, problem_or_grad, sigma2: float, d: int):
        if sigma2 < 0:
            raise InvalidParameter("sigma2 must be >= 0")
        self._g = getattr(problem_or_grad, "gradient", problem_or_grad)
        self.sigma2 = float(sigma2)
        self.d = d
        self._scale = math.sqrt(self.sigma2 / d)

    def sample(self, rng):
        return rng.standard_normal(self.d)

    def grad(self, x, xi):
        return self._g(x) + self._scale * xi

    def true_grad(self, x):
        return self._g(x)


def bernoulli_sparsified_grad(x, xi, p, base_grad, progress=None):
    """Scale the coordinates past prog(x) by xi/p; the protected prefix is untouched."""
    if not (0 < p <= 1):
        raise InvalidParameter(f"p must lie in (0, 1], got {p}")
    if progress is None:
        progress = prog(x)
    g = np.array(base_grad, dtype=float)
    if xi != 1 or p != 1:
        g[progress:] *= xi / p
    return g


class BernoulliEstimator(Estimator):
    """Bernoulli-sparsified estimator: [g]_j = grad_j f (1 + 1[j > prog](xi/p - 1)).

    ``offset`` shifts the progress threshold, which is how a block-local
    estimator (block i starting at coordinate offset) is expressed; ``block``
    restricts prog to the given slice.
    """

    kind = "bernoulli"

    def __init__(self, problem_or_grad, p: float, sigma2: float = 0.0, block=None):
        if not (0 < p <= 1):
            raise InvalidParameter(f"p must lie in (0, 1], got {p}")
        self._g = getattr(problem_or_grad, "gradient", problem_or_grad)
        self.p = float(p)
        self.sigma2 = float(sigma2)
        self.block = block

    def progress(self, x):
        if self.block is None:
            return prog(x)
        lo, hi = self.block
        return lo + prog(np.asarray(x)[lo:hi])

    def sample(self, rng):
        return int(rng.random() < self.p)

    def grad(self, x, xi):
        return bernoulli_sparsified_grad(x, xi, self.p, self._g(x), self.progress(x))

    def true_grad(self, x):
        return self._g(x)

    def outcomes(self, x):
        """Exact two-outcome distribution [(prob, gradient), ...]."""
        if self.p == 1:
            return [(1.0, self.grad(x, 1))]
        return [(self.p, self.grad(x, 1)), (1 - self.p, self.grad(x, 0))]


class MinibatchEstimator(Estimator):
    """Uniform sampling of ``batch`` rows with replacement from a finite-sum problem.

    With ``batch >= N`` the full dataset is used and the draw is exact.
    """

    kind = "minibatch"

    def __init__(self, problem: ProblemSpec, batch: int):
        if batch < 1:
            raise InvalidParameter("batch must be >= 1")
        self.problem = problem
        self.batch = int(batch)
        self.N = problem.n_samples

    def sample(self, rng):
        if self.batch >= self.N:
            return None
        return rng.integers(0, self.N, size=self.batch)

    def grad(self, x, xi):
        return self.problem.batch_grad(np.asarray(x, float), xi)

    def true_grad(self, x):
        return self.problem.gradient(x)


def estimator_moments(est: Estimator, x, draws: int, seed=0):
    """Empirical mean of draws and mean squared deviation from the true gradient."""
    if draws < 1:
        raise InvalidParameter("draws must be >= 1")
    rng = np.random.default_rng(seed)
    x = np.asarray(x, float)
    g_true = est.true_grad(x)
    total = np.zeros_like(g_true)
    sq = 0.0
    for _ in range(draws):
        g = est.draw(x, rng)
        total += g
        sq += float(np.sum((g - g_true) ** 2))
    return total / draws, sq / draws


# ---------------------------------------------------------------- pools, rng


@dataclass
class WorkerPool:
    taus: Sequence[float]
    sorted_taus: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        t = np.asarray(self.taus, dtype=float)
        if t.ndim != 1 or t.size == 0:
            raise InvalidConfig("worker pool needs at least one delay")
        if not np.all(np.isfinite(t)) or np.any(t <= 0):
            raise InvalidConfig("all delays must be finite and positive")
        self.taus = t
        self.sorted_taus = np.sort(t)

    @property
    def n(self) -> int:
        return int(self.taus.size)

    @classmethod
    def from_rule(cls, rule: str, n: int, value: float = 1.0, taus=None):
        if rule == "sqrt-index":
            return cls(np.sqrt(np.arange(1, n + 1)))
        if rule == "constant":
            return cls(np.full(n, float(value)))
        if rule == "explicit":
            if taus is None or len(taus) != n:
                raise InvalidConfig("explicit tau rule needs a list of length n")
            return cls(taus)
        raise InvalidConfig(f"unknown tau rule {rule!r}")


class RngContract:
    """Per-worker generators derived from one master seed.

    Worker i's stream is SeedSequence(seed, spawn_key=(i,)), so adding workers
    never perturbs existing streams. Stream ``-1`` belongs to the server.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[int, np.random.Generator] = {}

    def worker(self, i: int) -> np.random.Generator:
        g = self._streams.get(i)
        if g is None:
            key = (i,) if i >= 0 else (2**31,)
            g = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=key))
            self._streams[i] = g
        return g

    def server(self) -> np.random.Generator:
        return self.worker(-1)


def as_estimator_list(est: Any, n: int):
    if isinstance(est, (list, tuple)):
        if len(est) != n:
            raise InvalidConfig(f"need {n} estimators, got {len(est)}")
        return list(est)
    return [est] * n
