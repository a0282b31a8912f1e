import math

import numpy as np
import pytest

from vtlab.core import (ExactEstimator, GaussianEstimator, InvalidConfig, InvalidParameter,
                        ProblemSpec, WorkerPool, quadratic_problem)
from vtlab.events import des_run
from vtlab.optimizers import (AcceleratedRennala, AsyncSGD, Malenia, MMinibatch, Rennala,
                              grid_search, hyperparams_for, on_boundary, optimal_m)
from vtlab.protocol import StopRule

Q = quadratic_problem(3, x0=np.array([1.0, 0.0, 0.0]))


def half_square():
    return ProblemSpec(1, lambda x: 0.5 * float(x @ x), lambda x: np.array(x, float), 1.0,
                       np.array([1.0]), f_star=0.0)


def const_grad(v):
    return lambda: np.asarray(v, float)


def never():
    raise AssertionError("stale gradient must not be evaluated")


# --- Rennala


def test_rennala_exact_step_hits_minimum():
    p = half_square()
    r = Rennala(p.x0, 1.0, 1)
    r.on_report(1.0, 0, 0, lambda: p.gradient(r.x))
    assert r.k == 1 and r.x.tolist() == [0.0]


def test_rennala_averages_batch():
    r = Rennala(np.zeros(2), 1.0, 2)
    r.on_report(1.0, 0, 0, const_grad([2.0, 0.0]))
    assert r.k == 0
    out = r.on_report(1.0, 1, 0, const_grad([0.0, 4.0]))
    assert r.k == 1 and r.x.tolist() == [-1.0, -2.0]
    assert out == [(1, r.x, 1)]


def test_rennala_ignores_stale_and_reassigns_current_point():
    r = Rennala(np.zeros(2), 1.0, 1)
    r.on_report(1.0, 0, 0, const_grad([1.0, 1.0]))
    out = r.on_report(1.5, 1, 0, never)
    assert r.k == 1
    (w, x, tag), = out
    assert w == 1 and tag == 1 and np.array_equal(x, r.x)


def test_rennala_average_iterate():
    r = Rennala(np.array([4.0]), 0.5, 1, average=True)
    r.on_report(1, 0, 0, const_grad([2.0]))   # x1 = 3
    r.on_report(2, 0, 1, const_grad([2.0]))   # x2 = 2
    assert r.reported_point().tolist() == [3.5]  # mean of x0, x1


def test_rennala_parameter_checks():
    with pytest.raises(InvalidParameter):
        Rennala(np.zeros(1), 0.0, 1)
    with pytest.raises(InvalidParameter):
        Rennala(np.zeros(1), 1.0, 0)


def test_rennala_slow_worker_report_is_discarded():
    r = Rennala(Q.x0, 0.1, 1)
    tr = des_run(r, WorkerPool([1.0, 3.0]), ExactEstimator(Q), Q, StopRule(max_time=7))
    assert tr.cols["t"] == [float(i) for i in range(8)]
    assert set(tr.cols["worker"][1:]) == {0}


# --- Malenia


def test_malenia_guard_waits_for_every_worker():
    m = Malenia(np.zeros(1), 1.0, 2, 2)
    m.on_report(1, 0, 0, const_grad([1.0]))
    assert m.harmonic() == 0 and m.k == 0


def test_malenia_guard_fires_on_harmonic_mean():
    m = Malenia(np.zeros(1), 1.0, 2, 2)
    m.on_report(1, 0, 0, const_grad([1.0]))
    m.on_report(2, 1, 0, const_grad([3.0]))
    assert m.k == 1 and m.x.tolist() == [-2.0]


def test_malenia_exact_direction_is_full_gradient():
    a = np.array([1.0, 2.0, 0.0])
    b = np.array([0.0, -1.0, 5.0])
    m = Malenia(np.zeros(3), 1.0, 1, 2)
    m.on_report(1, 0, 0, const_grad(a))
    m.on_report(1, 0, 0, const_grad(a))
    m.on_report(1, 1, 0, const_grad(b))
    assert np.allclose(m.x, -(a + b) / 2)


# --- m-Minibatch and async


def test_m_minibatch_round_time_uses_fastest_workers():
    m = MMinibatch(Q.x0, 0.1, 1, fastest=None)
    tr = des_run(m, WorkerPool([4.0, 1.0]), ExactEstimator(Q), Q, StopRule(max_steps=3))
    assert tr.cols["t"] == [0.0, 1.0, 2.0, 3.0]


def test_m_minibatch_step_is_mean_of_draws():
    m = MMinibatch(np.zeros(2), 0.5, 2)
    m.start(2)
    assert m.on_report(1, 0, 0, const_grad([2.0, 0.0])) == []
    m.on_report(1, 1, 0, const_grad([0.0, 2.0]))
    assert m.x.tolist() == [-0.5, -0.5]


def test_m_minibatch_rejects_m_above_n():
    with pytest.raises(InvalidParameter):
        MMinibatch(np.zeros(1), 0.1, 3).start(2)


def test_async_single_worker_is_sgd():
    a = AsyncSGD(Q.x0, 0.1)
    a.delays = []
    des_run(a, WorkerPool([1.0]), ExactEstimator(Q), Q, StopRule(max_steps=5))
    assert {d for _, d in a.delays} == {0}


def test_async_delays_two_workers():
    a = AsyncSGD(Q.x0, 0.1)
    a.delays = []
    des_run(a, WorkerPool([1.0, 3.0]), ExactEstimator(Q), Q, StopRule(max_time=9))
    # ties at t = 3 go to the lower worker index, so the slow report sees three steps
    assert a.delays[:4] == [(0, 0), (0, 0), (0, 0), (1, 3)]
    assert [d for w, d in a.delays if w == 1] == [3, 3, 3]


def test_async_delays_bounded_for_equal_speeds():
    a = AsyncSGD(Q.x0, 0.01)
    a.delays = []
    n = 5
    des_run(a, WorkerPool([2.0] * n), ExactEstimator(Q), Q, StopRule(max_time=40))
    assert max(d for _, d in a.delays) <= n - 1


def test_delay_adaptive_cap():
    a = AsyncSGD(np.zeros(1), 1.0, "delay-adaptive", L=2.0, c_a=0.25)
    for d in range(20):
        assert a.stepsize(d) == min(1.0, 0.25 / (2.0 * (d + 1)))
    with pytest.raises(InvalidParameter):
        AsyncSGD(np.zeros(1), 1.0, "delay-adaptive")


# --- accelerated


def test_accelerated_first_step():
    acc = AcceleratedRennala(np.array([1.0, 2.0]), 0.5, 1)
    assert np.array_equal(acc.query, acc.x)  # alpha_1 = 1 gives y = u = x
    acc.on_report(1, 0, 0, const_grad([1.0, -1.0]))
    assert acc.u.tolist() == [0.5, 2.5]
    assert np.array_equal(acc.x, acc.u)


def test_accelerated_beats_plain_on_noiseless_quadratic():
    q = quadratic_problem(50, x0=np.eye(50)[0] * 5)
    pool = WorkerPool([1.0])
    stop = StopRule(max_steps=200)
    plain = des_run(Rennala(q.x0, 1 / q.L, 1), pool, ExactEstimator(q), q, stop)
    fast = des_run(AcceleratedRennala(q.x0, 1 / (4 * q.L), 1), pool, ExactEstimator(q), q, stop)
    assert fast.cols["f"][-1] - q.f_star < 0.5 * (plain.cols["f"][-1] - q.f_star)


# --- theorem hyperparameters


def test_rennala_prescription():
    hp = hyperparams_for("rennala", eps=0.1, sigma2=1.0, L=1.0, delta=1.0)
    assert (hp.S, hp.gamma) == (10, 0.5)
    hp = hyperparams_for("rennala", eps=0.1, sigma2=0.0, L=2.0, delta=1.0)
    assert (hp.S, hp.gamma) == (1, 0.5)


def test_malenia_prescription_n_floor():
    hp = hyperparams_for("malenia", eps=0.25, sigma2=1.0, L=1.0, delta=1.0, n=8)
    assert hp.S == 8


def test_missing_constants_is_a_config_error():
    with pytest.raises(InvalidConfig):
        hyperparams_for("rennala", eps=0.1, sigma2=1.0, L=1.0)
    with pytest.raises(InvalidConfig):
        hyperparams_for("nope", eps=0.1, sigma2=1.0)


@pytest.mark.parametrize("taus, s2eps, expected", [([1, 10], 100, 1), ([1, 2, 3], 0, 1),
                                                   ([2, 2, 2, 2], 5, 4)])
def test_optimal_m(taus, s2eps, expected):
    assert optimal_m(taus, s2eps, 1.0) == expected


def test_optimal_m_rejects_unsorted():
    with pytest.raises(InvalidParameter):
        optimal_m([2, 1], 1, 1)


def test_ceil_guard_on_float_noise():
    assert 0.9 / 0.03 > 30  # 30.000000000000004
    assert hyperparams_for("rennala", eps=0.03, sigma2=0.9, L=1.0, delta=1.0).S == 30
    assert hyperparams_for("rennala", eps=0.1, sigma2=1.15, L=1.0, delta=1.0).S == 12


# --- grid search


def test_grid_search_and_boundary():
    grids = {"gamma": [2.0**i for i in range(-3, 4)]}
    best, score, results = grid_search(lambda gamma: (gamma - 1.0) ** 2, grids, lambda s: s)
    assert best == {"gamma": 1.0} and score == 0 and len(results) == 7
    assert on_boundary(best, grids) == []
    best, _, _ = grid_search(lambda gamma: -gamma, grids, lambda s: s)
    assert on_boundary(best, grids) == ["gamma"]


def test_grid_search_rejects_empty():
    with pytest.raises(InvalidConfig):
        grid_search(lambda **k: 0, {"gamma": []}, lambda s: s)


def test_noisy_rennala_converges_in_expectation():
    q = quadratic_problem(5, x0=np.eye(5)[0])
    est = GaussianEstimator(q, 1.0, 5)
    pool = WorkerPool.from_rule("sqrt-index", 4)
    finals = [des_run(Rennala(q.x0, 0.5, 8), pool, est, q, StopRule(max_steps=150), seed=s)
              .cols["f"][-1] - q.f_star for s in range(5)]
    assert math.fsum(finals) / 5 < 0.25 * (q.value(q.x0) - q.f_star)
