import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vtlab import acceptance, hard
from vtlab.core import InvalidParameter, finite_difference, prog


def test_psi_phi_reference_values():
    assert hard.psi(np.array([0.5, 0.3, 1.0])).tolist() == [0.0, 0.0, 1.0]
    assert hard.phi(np.array([0.0]))[0] == pytest.approx(math.sqrt(math.e) * math.sqrt(math.pi / 2))
    assert hard.phi(np.array([50.0]))[0] == pytest.approx(math.sqrt(2 * math.pi * math.e))
    assert hard.dphi(np.array([0.0]))[0] == pytest.approx(math.sqrt(math.e))


def test_gradient_at_zero():
    g = hard.ft_grad(np.zeros(6))
    assert g[0] == pytest.approx(-math.sqrt(math.e))
    assert not g[1:].any()
    assert np.linalg.norm(g) == pytest.approx(1.6487, abs=1e-4)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 10), st.integers(0, 2**31 - 1))
def test_ft_gradient_matches_finite_differences(T, seed):
    x = np.random.default_rng(seed).uniform(-2, 2, T)
    fd = finite_difference(hard.ft_value, x, 1e-6)
    assert np.allclose(hard.ft_grad(x), fd, atol=1e-5)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12), st.integers(0, 12), st.integers(0, 2**31 - 1))
def test_gradient_progresses_at_most_one_coordinate(T, k, seed):
    x = np.zeros(T)
    k = min(k, T)
    x[:k] = np.random.default_rng(seed).uniform(-3, 3, k)
    assert prog(hard.ft_grad(x)) <= prog(x) + 1
    assert np.abs(hard.ft_grad(x)).max() <= hard.GAMMA_INF


def test_ft_rejects_nonfinite():
    with pytest.raises(InvalidParameter):
        hard.ft_value(np.array([0.0, np.nan]))


# --- scaled nonconvex instance


def test_nonconvex_instance_parameters():
    inst = hard.make_nonconvex_hard(L=1.0, delta=1.0, sigma2=1.0, eps=1e-4)
    assert inst.T == math.floor(1.0 / (2e-4 * 152 * 12))
    assert inst.lam == pytest.approx(math.sqrt(2e-4) * 152)
    assert inst.p == pytest.approx(min(2e-4 * 23**2, 1.0))
    prob = inst.problem()
    assert prob.f_star == pytest.approx(prob.value(np.zeros(inst.T)) - 1.0)


def test_nonconvex_instance_too_small():
    with pytest.raises(hard.InstanceTooSmall):
        hard.make_nonconvex_hard(1.0, 1.0, 0.0, 0.1)


def test_gradient_large_before_full_progress():
    inst = hard.make_nonconvex_hard(1.0, 1.0, 1.0, 2e-5)
    rng = np.random.default_rng(0)
    for _ in range(200):
        x = np.zeros(inst.T)
        k = int(rng.integers(0, inst.T))
        x[:k] = rng.uniform(-3, 3, k) * inst.lam
        assert float(inst.gradient(x) @ inst.gradient(x)) > 2 * inst.eps


def test_nonconvex_gap_bounded_by_delta():
    inst = hard.make_nonconvex_hard(1.0, 1.0, 1.0, 2e-5)
    f0 = inst.value(np.zeros(inst.T))
    rng = np.random.default_rng(1)
    for _ in range(300):
        x = (np.abs(rng.normal(size=inst.T)) + 1) * inst.lam
        assert f0 - inst.value(x) <= inst.delta


def test_estimator_variance_closed_form():
    inst = hard.make_nonconvex_hard(1.0, 1.0, 0.5, 2e-5)
    est = inst.estimator()
    x = np.zeros(inst.T)
    x[:3] = inst.lam
    g = inst.gradient(x)
    var = sum(p * float(np.sum((v - g) ** 2)) for p, v in est.outcomes(x))
    assert var <= inst.sigma2 * (1 + 1e-12)


# --- heterogeneous


def test_heterog_blocks_gradient_is_block_local():
    inst = hard.make_heterog_hard(3, 1.0, 1.0, 1.0, 1e-5, [1.0, 2.0, 3.0])
    x = np.random.default_rng(0).normal(size=inst.d)
    for i in range(3):
        g = inst.local_gradient(i, x)
        lo, hi = inst.blocks[i]
        assert not np.delete(g, np.arange(lo, hi)).any()
    assert np.allclose(inst.gradient(x), sum(inst.local_gradient(i, x) for i in range(3)) / 3)


def test_heterog_single_variant_gradient_scale():
    n = 4
    inst = hard.make_heterog_hard(n, 1.0, 1.0, 0.0, 1e-5, [1.0] * n, variant="single")
    x = np.zeros(inst.d)
    assert np.allclose(inst.gradient(x), inst.local_gradient(n - 1, x) / n)
    rng = np.random.default_rng(2)
    for _ in range(100):
        x = np.zeros(inst.d)
        k = int(rng.integers(0, inst.T))
        x[:k] = rng.uniform(-3, 3, k) * inst.lams[0]
        assert np.linalg.norm(inst.gradient(x)) > math.sqrt(1e-5)


def test_heterog_smoothness_numerically():
    inst = hard.make_heterog_hard(3, 2.0, 1.0, 1.0, 1e-5, [1.0, 1.5, 4.0])
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(200):
        x = rng.normal(size=inst.d) * 0.05
        y = x + rng.normal(size=inst.d) * 1e-3
        worst = max(worst, np.linalg.norm(inst.gradient(x) - inst.gradient(y)) /
                    np.linalg.norm(x - y))
    assert worst <= inst.L


def test_heterog_gap_at_zero():
    inst = hard.make_heterog_hard(2, 1.0, 1.0, 1.0, 1e-5, [1.0, 2.0])
    f0 = inst.value(np.zeros(inst.d))
    rng = np.random.default_rng(4)
    lam = inst.lams.max()
    for _ in range(200):
        x = (np.abs(rng.normal(size=inst.d)) + 1) * lam * 3
        assert f0 - inst.value(x) <= 1.0


# --- convex


def test_convex_dimension_one_hand_case():
    c = hard.ConvexHard(T=0, l=1.0, eta=1.0)
    assert c.value(np.zeros(1)) == pytest.approx(-0.5)
    assert c.gradient(np.zeros(1)).tolist() == [1.0]
    assert hard.convex_prox(np.zeros(1), 1.0, 1.0).tolist() == [-1.0]


def test_convex_gradient_matches_finite_differences():
    c = hard.make_convex_hard(1.0, 1.0, 5e-4)
    rng = np.random.default_rng(0)
    for _ in range(100):
        x = rng.normal(size=c.d) * 0.3
        assert np.allclose(c.gradient(x), finite_difference(c.value, x, 1e-7), atol=1e-5)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 30), st.integers(0, 2**31 - 1))
def test_simplex_projection_agrees_with_bisection(d, seed):
    v = np.random.default_rng(seed).normal(size=d) * 3
    lam, _ = hard.project_simplex(v)
    assert lam.sum() == pytest.approx(1.0)
    assert np.allclose(lam, hard.project_simplex_bisect(v), atol=1e-9)


def test_convex_prox_kkt_and_progress():
    c = hard.make_convex_hard(1.0, 1.0, 5e-4)
    rng = np.random.default_rng(1)
    for _ in range(100):
        x = np.zeros(c.d)
        k = int(rng.integers(0, c.d))
        x[:k] = rng.normal(size=k)
        assert hard.kkt_residual(x, c.l, c.eta) < 1e-9
        assert prog(hard.convex_prox(x, c.l, c.eta)) <= prog(x) + 1


def test_convex_lipschitz_and_minimum_witness():
    c = hard.make_convex_hard(1.0, 1.0, 5e-4)
    rng = np.random.default_rng(2)
    for _ in range(100):
        x = rng.normal(size=c.d)
        x /= max(1.0, np.linalg.norm(x))
        assert np.linalg.norm(c.gradient(x)) <= c.l * (1 + 1e-12) <= c.M
    assert c.value(c.witness()) <= c.min_bound()


def test_convex_suboptimal_before_full_progress():
    c = hard.make_convex_hard(1.0, 1.0, 5e-4)
    rng = np.random.default_rng(3)
    for _ in range(200):
        x = np.zeros(c.d)
        k = int(rng.integers(0, c.T))
        x[:k] = rng.normal(size=k)
        x /= max(1.0, np.linalg.norm(x))
        assert c.value(x) - c.min_bound() > 2 * c.eps


# --- the invariant check itself, and a mutation canary


def test_invariant_check_passes_small():
    ok, m = acceptance.hard_instance_invariants(T=8, count=200)
    assert ok, m


def test_tampered_psi_is_caught(monkeypatch):
    real = hard.psi
    monkeypatch.setattr(hard, "psi", lambda x: 3.0 * real(x))
    ok, m = acceptance.hard_instance_invariants(T=8, count=200)
    assert not ok
    res = acceptance.Result("hard_instance_invariants", ok, m)
    assert res.line().startswith("[FAIL] hard_instance_invariants")
