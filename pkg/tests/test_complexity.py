import json
import math
from fractions import Fraction

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from vtlab.complexity import (convex_bounds, lemma_tau_check, lemma_tau_sync_check, t_prime,
                              t_prime_min, time_bounds)
from vtlab.core import InvalidParameter

taus_st = st.lists(st.floats(0.05, 100), min_size=1, max_size=20).map(sorted)


def test_t_prime_hand_values():
    assert t_prime([1, 4], 2, 1) == 3
    assert t_prime([1, 4], 2, 2) == pytest.approx(3.2)
    assert t_prime_min([1, 4], 2) == (3, 1)
    assert t_prime_min([2, 2, 2, 2], 4) == (4, 4)
    assert t_prime([3.0], 5, 1) == 3.0 * 6


def test_t_prime_rejects_unsorted_and_bad_index():
    with pytest.raises(InvalidParameter):
        t_prime_min([4, 1], 2)
    with pytest.raises(InvalidParameter):
        t_prime([1, 2], 1, 3)


def test_time_bounds_equal_delays():
    rep = time_bounds([1.0, 1.0], 1, 1, 1, 1)
    assert rep.values["async"] == 1.5
    assert rep.values["rennala"] == 1.5 and rep.argmins["rennala"] == 2
    assert rep.values["minibatch"] == 1.5


def test_time_bounds_noiseless_uses_fastest_worker():
    rep = time_bounds([2.0, 3.0, 7.0], 1.5, 2.0, 0.0, 0.1)
    assert rep.argmins["rennala"] == 1
    assert rep.values["rennala"] == pytest.approx(2.0 * 1.5 * 2.0 / 0.1)


def test_heterog_bound_with_equal_delays():
    tau, n, L, D, s2, eps = 2.5, 4, 1.0, 3.0, 2.0, 0.5
    rep = time_bounds([tau] * n, L, D, s2, eps)
    assert rep.values["heterog"] == pytest.approx(tau * (L * D / eps + s2 * L * D / (n * eps**2)))


def test_exact_arithmetic_with_fractions():
    rep = time_bounds([Fraction(1), Fraction(1)], 1, 1, 1, 1)
    assert rep.values["async"] == Fraction(3, 2)


def test_report_serialises():
    rep = time_bounds([1.0, 2.0], 1, 1, 1, 0.1)
    data = json.loads(rep.to_json())
    assert set(data["values"]) == {"minibatch", "async", "rennala", "heterog", "sync"}
    assert "constants" in data["note"]
    assert "rennala" in rep.table()


@settings(max_examples=200, deadline=None)
@given(taus_st, st.floats(0.1, 10), st.floats(0, 10), st.floats(0.01, 1))
def test_homogeneous_bound_below_minibatch_and_async(taus, L, s2, eps):
    rep = time_bounds(taus, L, 1.0, s2, eps)
    v = rep.values
    assert v["rennala"] <= v["minibatch"] * (1 + 1e-12)
    assert v["rennala"] <= v["async"] * (1 + 1e-12)
    assert all(x > 0 and math.isfinite(x) for x in v.values())


@settings(max_examples=200, deadline=None)
@given(taus_st, st.integers(0, 19), st.floats(0.5, 1.0))
def test_bounds_monotone_in_delays(taus, i, shrink):
    assume(i < len(taus))
    faster = sorted(taus[:i] + [taus[i] * shrink] + taus[i + 1:])
    a = time_bounds(taus, 1.0, 1.0, 2.0, 0.1).values
    b = time_bounds(faster, 1.0, 1.0, 2.0, 0.1).values
    for k in a:
        assert b[k] <= a[k] * (1 + 1e-12)


def test_convex_bound_min_structure():
    rep = convex_bounds([1.0], 1.0, math.inf, 1.0, 0.0, 0.01)
    assert rep.values["convex"] == pytest.approx(10.0)
    rep = convex_bounds([2.0], 1.0, 1.0, 1.0, 1.0, 0.5)
    assert rep.values["convex"] == pytest.approx(rep.values["graph_oracle"])


def test_graph_oracle_ratio_grows_like_quarter_power():
    ratios = []
    for n in (16, 256, 4096):
        taus = [math.sqrt(i) for i in range(1, n + 1)]
        ratios.append(convex_bounds(taus, 1.0, 1e12, 1.0, math.sqrt(n), 1.0).values["ratio"])
    assert ratios[0] < ratios[1] < ratios[2]
    # each step multiplies n by 16, so n^{1/4} predicts a factor 2
    for a, b in zip(ratios, ratios[1:]):
        assert 1.5 < b / a < 2.5


def test_lemma_examples():
    assert lemma_tau_check([1, 1], 1) == (0.5, 1.5)
    t1, t2 = lemma_tau_check([3.0], 2)
    assert (t1, t2) == (6.0, 9.0)
    t1, t2 = lemma_tau_sync_check([1.0, 5.0, 9.0], 1)
    assert t1 == 1.0 and t2 == 2.0


def test_lemma_preconditions():
    with pytest.raises(InvalidParameter):
        lemma_tau_check([1.0], 0.2)
    with pytest.raises(InvalidParameter):
        lemma_tau_sync_check([1.0], 1.5)


@settings(max_examples=300, deadline=None)
@given(taus_st, st.floats(0.25, 500))
def test_lemma_sandwich(taus, S):
    t1, t2 = lemma_tau_check(taus, S)
    assert t1 <= t2 * (1 + 1e-12) and t2 <= 6 * t1 * (1 + 1e-12)


@settings(max_examples=300, deadline=None)
@given(taus_st, st.integers(1, 300))
def test_sync_lemma_sandwich(taus, eta):
    t1, t2 = lemma_tau_sync_check(taus, eta)
    assert t1 <= t2 * (1 + 1e-12) and t2 <= 2 * t1 * (1 + 1e-12)
