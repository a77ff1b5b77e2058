import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
import sympy

from hetqueue.model import SystemConfig


def brute_esp(values, k):
    """Sum of products over all size-k subsets, by enumeration."""
    if k < 0 or k > len(values):
        return 0.0
    return math.fsum(math.prod(c) for c in itertools.combinations(values, k))


def erlang_c(c, a):
    """Textbook M|M|c quantities for offered load a = lam/mu: (p0, P(wait))."""
    top = a**c / math.factorial(c) * c / (c - a)
    head = math.fsum(a**k / math.factorial(k) for k in range(c))
    return 1 / (head + top), top / (head + top)


def exact_boundary(lam, mu):
    """Exact rational stationary probabilities, solved from the transition rules.

    Builds the boundary chain (arrivals split evenly over idle servers,
    per-server completions) as a sympy matrix over the rationals. Flow
    across the cut between the all-busy state and the first tail level
    balances, so the boundary chain is solved on its own and the tail is
    appended as a geometric series. Independent of the product form.
    Returns (boundary probabilities by binary index, tail mass).
    """
    lam = sympy.Rational(Fraction(lam))
    mu = [sympy.Rational(Fraction(m)) for m in mu]
    n = len(mu)
    size = 2**n
    Q = sympy.zeros(size, size)
    for i in range(size):
        busy = [s for s in range(n) if i >> (n - 1 - s) & 1]
        idle = [s for s in range(n) if s not in busy]
        for s in idle:
            Q[i, i | 1 << (n - 1 - s)] += lam / len(idle)
        for s in busy:
            Q[i, i ^ 1 << (n - 1 - s)] += mu[s]
    for i in range(size):
        Q[i, i] = -sum(Q[i, j] for j in range(size) if j != i)
    A = Q.T
    A[0, :] = sympy.ones(1, size)
    b = sympy.zeros(size, 1)
    b[0] = 1
    pi = A.LUsolve(b)
    rho = lam / sum(mu)
    tail = pi[size - 1] * rho / (1 - rho)
    total = sum(pi) + tail
    return [p / total for p in pi], tail / total


def random_config(rng, n, rho_range=(0.05, 0.95), ratio_max=100.0):
    mu = np.exp(rng.uniform(0.0, math.log(ratio_max), n))
    rho = rng.uniform(*rho_range)
    return SystemConfig(float(rho * mu.sum()), tuple(mu.tolist()))


@pytest.fixture
def example():
    """The two-server worked example: lam = 1, mu = (2, 1)."""
    return SystemConfig(1.0, (2.0, 1.0))


_ACCEPTANCE = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
