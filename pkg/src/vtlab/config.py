"""Run configuration: schema, parsing (TOML or JSON) and object builders.

Schema (every table optional except ``problem``, ``pool``, ``method``, ``stop``)::

    [problem]   name = quadratic | pseudo_huber | shifted_quadratics | logreg | ft
                       | convex_hard | heterog_hard
                d, x0 = "zeros" | "e1" | "sqrt-d-e1" | [..]
                data, regularization           (logreg)
                L, delta, eps, sigma2, M       (hard instances)
    [estimator] kind = exact | gaussian | bernoulli | minibatch ; sigma2, p, batch
    [pool]      n, rule = sqrt-index | constant | explicit ; value, taus
    [method]    name = rennala | malenia | m_minibatch | minibatch | async
                       | accelerated_rennala | rennala_convex
                gamma (number or "theorem"), S, m, rule, c_a, eps, average
    [stop]      max_steps, max_time, metric, threshold, diverge_above
    [run]       name, seeds = [..]
    [sweep]     gamma = [..] | "pow2:lo:hi", S = [..], metric, threshold
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Optional

import numpy as np

from . import core, hard
from .core import InvalidConfig
from .optimizers import (AcceleratedRennala, AsyncSGD, Malenia, MMinibatch, Rennala,
                         hyperparams_for)
from .protocol import StopRule

try:  # Python 3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib


@dataclass
class ProblemCfg:
    name: str
    d: int = 2
    x0: Any = "zeros"
    data: Optional[str] = None
    regularization: float = 0.0
    L: float = 1.0
    delta: float = 1.0
    eps: float = 0.1
    sigma2: float = 0.0
    M: float = 1.0
    mu: float = 1.0
    radius: float = 1.0
    shift: float = 0.1
    variant: str = "blocks"


@dataclass
class EstimatorCfg:
    kind: str = "exact"
    sigma2: float = 0.0
    p: float = 1.0
    batch: int = 1


@dataclass
class PoolCfg:
    n: int = 1
    rule: str = "constant"
    value: float = 1.0
    taus: Optional[list] = None


@dataclass
class MethodCfg:
    name: str
    gamma: Any = "theorem"
    S: Optional[int] = None
    m: Optional[int] = None
    rule: str = "constant"
    c_a: float = 0.25
    eps: Optional[float] = None
    average: bool = False


@dataclass
class StopCfg:
    max_steps: Optional[int] = None
    max_time: Optional[float] = None
    metric: Optional[str] = None
    threshold: Optional[float] = None
    diverge_above: Optional[float] = None


@dataclass
class RunCfg:
    name: str = "run"
    seeds: list = field(default_factory=lambda: [0])


@dataclass
class SweepCfg:
    gamma: Any = None
    S: Any = None
    metric: str = "suboptimality"
    threshold: Optional[float] = None


@dataclass
class RunConfig:
    problem: ProblemCfg
    pool: PoolCfg
    method: MethodCfg
    stop: StopCfg
    estimator: EstimatorCfg = field(default_factory=EstimatorCfg)
    run: RunCfg = field(default_factory=RunCfg)
    sweep: Optional[SweepCfg] = None

    def to_dict(self):
        return {k: v for k, v in asdict(self).items() if v is not None}

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_SECTIONS = {"problem": ProblemCfg, "pool": PoolCfg, "method": MethodCfg, "stop": StopCfg,
             "estimator": EstimatorCfg, "run": RunCfg, "sweep": SweepCfg}
_REQUIRED = ("problem", "pool", "method", "stop")


def _section(name, cls, raw):
    if not isinstance(raw, dict):
        raise InvalidConfig(f"[{name}] must be a table")
    known = set(cls.__dataclass_fields__)
    extra = set(raw) - known
    if extra:
        raise InvalidConfig(f"[{name}] unknown field(s): {', '.join(sorted(extra))}")
    try:
        return cls(**raw)
    except TypeError as e:
        raise InvalidConfig(f"[{name}] {e}") from None


def parse_config(text: str, fmt: str = "auto") -> RunConfig:
    if fmt == "auto":
        fmt = "json" if text.lstrip().startswith("{") else "toml"
    try:
        raw = json.loads(text) if fmt == "json" else tomllib.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as e:
        raise InvalidConfig(f"cannot parse config: {e}") from None
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise InvalidConfig(f"unknown section(s): {', '.join(sorted(unknown))}")
    for s in _REQUIRED:
        if s not in raw:
            raise InvalidConfig(f"missing section [{s}]")
    parts = {k: _section(k, _SECTIONS[k], v) for k, v in raw.items()}
    cfg = RunConfig(**parts)
    validate(cfg)
    return cfg


def load_config(path) -> RunConfig:
    with open(path) as fh:
        text = fh.read()
    return parse_config(text, "json" if str(path).endswith(".json") else "auto")


def validate(cfg: RunConfig):
    if cfg.pool.n < 1:
        raise InvalidConfig("[pool] n: must be >= 1")
    if cfg.stop.max_steps is None and cfg.stop.max_time is None and cfg.stop.threshold is None:
        raise InvalidConfig("[stop] needs max_steps, max_time or threshold")
    if cfg.method.name not in BUILDERS:
        raise InvalidConfig(f"[method] name: unknown method {cfg.method.name!r}")
    if cfg.estimator.kind not in ("exact", "gaussian", "bernoulli", "minibatch"):
        raise InvalidConfig(f"[estimator] kind: unknown {cfg.estimator.kind!r}")
    if cfg.method.gamma != "theorem" and not (isinstance(cfg.method.gamma, (int, float))
                                               and cfg.method.gamma > 0):
        raise InvalidConfig("[method] gamma: positive number or \"theorem\"")
    if not cfg.run.seeds:
        raise InvalidConfig("[run] seeds: empty")
    if cfg.sweep is not None:
        for axis in ("gamma", "S"):
            v = getattr(cfg.sweep, axis)
            if v is not None and len(expand_grid(v)) == 0:
                raise InvalidConfig(f"[sweep] {axis}: empty grid")


def expand_grid(spec):
    """A list, or "pow2:lo:hi" for {2^i : lo <= i <= hi}."""
    if isinstance(spec, str):
        if not spec.startswith("pow2:"):
            raise InvalidConfig(f"grid spec {spec!r}: expected a list or pow2:lo:hi")
        lo, hi = (int(v) for v in spec[5:].split(":"))
        return [2.0**i for i in range(lo, hi + 1)]
    return list(spec)


# ------------------------------------------------------------ builders


def _x0(spec, d):
    if isinstance(spec, list):
        x = np.asarray(spec, dtype=float)
        if x.shape != (d,):
            raise InvalidConfig(f"[problem] x0: expected {d} entries")
        return x
    x = np.zeros(d)
    if spec == "zeros":
        return x
    if spec == "e1":
        x[0] = 1.0
        return x
    if spec == "sqrt-d-e1":
        x[0] = math.sqrt(d)
        return x
    raise InvalidConfig(f"[problem] x0: unknown spec {spec!r}")


@dataclass
class Built:
    problem: core.ProblemSpec
    estimators: Any  # single estimator or list per worker
    pool: core.WorkerPool
    sigma2: float
    extra: dict = field(default_factory=dict)


def build(cfg: RunConfig) -> Built:
    pc, ec = cfg.problem, cfg.estimator
    pool = core.WorkerPool.from_rule(cfg.pool.rule, cfg.pool.n, cfg.pool.value, cfg.pool.taus)
    n = pool.n
    locals_ = None
    if pc.name == "quadratic":
        prob = core.quadratic_problem(pc.d)
        prob.x0 = _x0(pc.x0, pc.d)
    elif pc.name == "pseudo_huber":
        prob = core.pseudo_huber_problem(pc.d, pc.M, pc.mu, pc.radius)
    elif pc.name == "shifted_quadratics":
        prob, locals_ = core.shifted_quadratics(pc.d, n, pc.shift)
        prob.x0 = _x0(pc.x0, pc.d)
    elif pc.name == "logreg":
        if not pc.data:
            raise InvalidConfig("[problem] data: logreg needs a dataset path")
        X, y = core.load_dataset(pc.data)
        prob = core.logreg_problem(X, y, pc.regularization)
    elif pc.name == "ft":
        inst = hard.make_nonconvex_hard(pc.L, pc.delta, pc.sigma2, pc.eps)
        return Built(inst.problem(), inst.estimator(), pool, pc.sigma2, {"instance": inst})
    elif pc.name == "convex_hard":
        inst = hard.make_convex_hard(pc.M, pc.L, pc.eps)
        prob = inst.problem()
    elif pc.name == "heterog_hard":
        inst = hard.make_heterog_hard(n, pc.L, pc.delta, pc.sigma2, pc.eps, pool.taus, pc.variant)
        return Built(inst.problem(), inst.estimators(), pool, pc.sigma2, {"instance": inst})
    else:
        raise InvalidConfig(f"[problem] name: unknown problem {pc.name!r}")

    def make(p):
        if ec.kind == "exact" or (ec.kind == "gaussian" and ec.sigma2 == 0):
            return core.ExactEstimator(p)
        if ec.kind == "gaussian":
            return core.GaussianEstimator(p, ec.sigma2, p.d)
        if ec.kind == "bernoulli":
            return core.BernoulliEstimator(p, ec.p)
        if ec.kind == "minibatch":
            return core.MinibatchEstimator(p, ec.batch)
        raise InvalidConfig(f"[estimator] kind: {ec.kind!r}")

    ests = [make(p) for p in locals_] if locals_ else make(prob)
    sigma2 = ec.sigma2 if ec.kind == "gaussian" else 0.0
    return Built(prob, ests, pool, sigma2)


def _theorem(cfg, built, method):
    mc = cfg.method
    eps = mc.eps if mc.eps is not None else cfg.problem.eps
    p = built.problem
    delta = p.delta if p.f_star is not None else None
    R = p.R
    if R is None and getattr(p, "x_star", None) is not None:
        R = float(np.linalg.norm(p.x_star - p.x0))
    return hyperparams_for(method, eps, built.sigma2, L=p.L, delta=delta, M=p.M, R=R,
                           n=built.pool.n, taus=np.sort(built.pool.taus), m=mc.m)


def _build_rennala(cfg, built, gamma=None, S=None):
    mc = cfg.method
    if mc.gamma == "theorem" and gamma is None:
        hp = _theorem(cfg, built, "rennala_convex" if mc.average else "rennala")
        gamma, S = hp.gamma, S or mc.S or hp.S
    return Rennala(built.problem.x0, gamma or mc.gamma, S or mc.S or 1, average=mc.average)


def _build_convex(cfg, built, gamma=None, S=None):
    mc = cfg.method
    if mc.gamma == "theorem" and gamma is None:
        hp = _theorem(cfg, built, "rennala_convex")
        gamma, S = hp.gamma, S or mc.S or hp.S
    return Rennala(built.problem.x0, gamma or mc.gamma, S or mc.S or 1, average=True)


def _build_accel(cfg, built, gamma=None, S=None):
    mc = cfg.method
    if mc.gamma == "theorem" and gamma is None:
        hp = _theorem(cfg, built, "accelerated_rennala")
        gamma, S = hp.gamma, S or mc.S or hp.S
    return AcceleratedRennala(built.problem.x0, gamma or mc.gamma, S or mc.S or 1)


def _build_malenia(cfg, built, gamma=None, S=None):
    mc = cfg.method
    if mc.gamma == "theorem" and gamma is None:
        hp = _theorem(cfg, built, "malenia")
        gamma, S = hp.gamma, S or mc.S or hp.S
    return Malenia(built.problem.x0, gamma or mc.gamma, S or mc.S or built.pool.n, built.pool.n)


def _build_mmb(cfg, built, gamma=None, S=None):
    mc = cfg.method
    m = mc.m
    if mc.gamma == "theorem" and gamma is None:
        hp = _theorem(cfg, built, "m_minibatch")
        gamma, m = hp.gamma, hp.m
    return MMinibatch(built.problem.x0, gamma or mc.gamma, m or built.pool.n)


def _build_minibatch(cfg, built, gamma=None, S=None):
    mc = cfg.method
    if mc.gamma == "theorem" and gamma is None:
        hp = hyperparams_for("m_minibatch", mc.eps or cfg.problem.eps, built.sigma2,
                             L=built.problem.L, delta=built.problem.delta, m=built.pool.n)
        gamma = hp.gamma
    return MMinibatch(built.problem.x0, gamma or mc.gamma, built.pool.n)


def _build_async(cfg, built, gamma=None, S=None):
    mc = cfg.method
    if gamma is None and mc.gamma == "theorem":
        raise InvalidConfig("[method] gamma: async has no theorem prescription, give a number")
    return AsyncSGD(built.problem.x0, gamma or mc.gamma, mc.rule, built.problem.L, mc.c_a)


BUILDERS = {
    "rennala": _build_rennala,
    "rennala_convex": _build_convex,
    "accelerated_rennala": _build_accel,
    "malenia": _build_malenia,
    "m_minibatch": _build_mmb,
    "minibatch": _build_minibatch,
    "async": _build_async,
}


def build_server(cfg: RunConfig, built: Built, gamma=None, S=None):
    return BUILDERS[cfg.method.name](cfg, built, gamma, S)


def build_stop(cfg: RunConfig) -> StopRule:
    s = cfg.stop
    try:
        return StopRule(s.max_steps, s.max_time, s.metric, s.threshold, s.diverge_above)
    except InvalidConfig as e:
        raise InvalidConfig(f"[stop] {e}") from None
