import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hetqueue.symfunc import (
    NegativeValue,
    esp_all,
    esp_excluding,
    falling_esp,
    falling_esp_leave_one_out,
)

from conftest import brute_esp

positive = st.floats(1e-3, 1e3, allow_nan=False, allow_infinity=False)
value_lists = st.lists(positive, min_size=0, max_size=10)


def test_empty():
    assert esp_all([]).e == (1.0,)


def test_identical_values():
    assert esp_all([0.5] * 3).e == pytest.approx([1, 1.5, 0.75, 0.125], abs=1e-15)


def test_two_values():
    assert esp_all([0.5, 1.0]).e == pytest.approx([1, 1.5, 0.5], abs=1e-15)


def test_excluding_examples():
    assert esp_excluding([0.5, 1.0, 2.0], {2}).e == pytest.approx([1, 1.5, 0.5], abs=1e-15)
    assert esp_excluding([0.5, 1.0, 2.0], {0, 1, 2}).e == (1.0,)
    assert esp_excluding([0.5, 1.0, 2.0], set()) == esp_all([0.5, 1.0, 2.0])


def test_out_of_range_orders_are_zero():
    t = esp_all([1.0, 2.0])
    assert t[-1] == 0.0
    assert t[3] == 0.0
    assert t[0] == 1.0


def test_errors():
    with pytest.raises(NegativeValue):
        esp_all([1.0, 0.0])
    with pytest.raises(NegativeValue):
        esp_all([1.0, -2.0])
    with pytest.raises(IndexError):
        esp_excluding([1.0, 2.0], {2})


@settings(max_examples=200)
@given(st.lists(positive, min_size=0, max_size=12))
def test_matches_enumeration(values):
    e = esp_all(values).e
    for k in range(len(values) + 1):
        assert e[k] == pytest.approx(brute_esp(values, k), rel=1e-12)


@given(st.lists(positive, min_size=1, max_size=10), st.data())
def test_split_identity(values, data):
    # P(W, k) = P(W \ {w}, k) + w P(W \ {w}, k-1)
    i = data.draw(st.integers(0, len(values) - 1))
    full = esp_all(values)
    rest = esp_excluding(values, {i})
    w = values[i]
    for k in range(len(values) + 2):
        assert full[k] == pytest.approx(rest[k] + w * rest[k - 1], rel=1e-12, abs=0)


@given(value_lists, st.randoms(use_true_random=False))
def test_permutation_invariance(values, rnd):
    shuffled = list(values)
    rnd.shuffle(shuffled)
    a, b = esp_all(values).e, esp_all(shuffled).e
    for x, y in zip(a, b):
        assert x == pytest.approx(y, rel=1e-13)


@given(value_lists)
def test_nonnegative(values):
    assert all(v >= 0 for v in esp_all(values).e)


def falling(m, k):
    return math.prod(range(m - k + 1, m + 1))


@given(st.lists(positive, min_size=0, max_size=12))
def test_falling_esp_matches_definition(values):
    m = len(values)
    u = falling_esp(values)
    for k in range(m + 1):
        assert u[k] == pytest.approx(brute_esp(values, k) / falling(m, k), rel=1e-12)


@given(st.lists(positive, min_size=1, max_size=10))
def test_falling_esp_log_domain(values):
    u = falling_esp(values)
    lu = falling_esp(values, log=True)
    assert np.exp(lu) == pytest.approx(u, rel=1e-12)


@given(st.lists(positive, min_size=1, max_size=9))
def test_leave_one_out_matches_rebuild(values):
    n = len(values)
    loo = falling_esp_leave_one_out(values)
    assert loo.shape == (n, n)
    for l in range(n):
        rest = [v for j, v in enumerate(values) if j != l]
        assert loo[l] == pytest.approx(falling_esp(rest), rel=1e-12)
    lloo = falling_esp_leave_one_out(values, log=True)
    assert np.exp(lloo) == pytest.approx(loo, rel=1e-12)


def test_falling_esp_stays_finite_where_plain_overflows():
    values = [400.0] * 400
    with np.errstate(over="ignore"):
        assert not math.isfinite(esp_all(values)[200])
    u = falling_esp(values)
    assert np.all(np.isfinite(u))
    # homogeneous values: e_k / (m)_k = x^k / k!
    assert u[3] == pytest.approx(400.0**3 / 6, rel=1e-12)
