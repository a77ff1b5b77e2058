"""Brute-force CTMC oracle for the heterogeneous M|M|n queue.

Enumerates all ``2 ** n`` boundary states plus ``K`` tail levels, builds
the generator from the transition rules directly (arrivals split evenly
over idle servers, each busy server completes at its own rate), solves for
the stationary vector and sums it over the relevant state sets. Nothing
here uses the product-form solution, so it serves as an independent check
on :mod:`hetqueue.closed_form`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .model import BoundaryState, MetricsReport, SystemConfig, TailState, validate

MAX_SERVERS = 20
DENSE_LIMIT = 5000


class TooManyServers(ValueError):
    pass


class BadTruncation(ValueError):
    pass


class SingularSystem(RuntimeError):
    pass


def default_truncation(rho: float) -> int:
    """Tail depth with ``rho ** K < 1e-14``, at least 30."""
    return max(30, math.ceil(math.log(1e-14) / math.log(rho)))


@dataclass(frozen=True)
class StateSpace:
    """Positions ``0 .. 2**n - 1`` are boundary states in binary-index order;
    position ``2**n - 1 + q`` is the tail level with ``q`` waiting."""

    n: int
    K: int

    @property
    def size(self) -> int:
        return 2**self.n + self.K

    @property
    def full(self) -> int:
        return 2**self.n - 1

    def position(self, state: BoundaryState | TailState) -> int:
        if isinstance(state, TailState) and state.queue_len > self.K:
            raise IndexError(f"queue length {state.queue_len} beyond truncation {self.K}")
        return state.index

    def state(self, pos: int) -> BoundaryState | TailState:
        if not 0 <= pos < self.size:
            raise IndexError(pos)
        if pos <= self.full:
            return BoundaryState.from_index(self.n, pos)
        return TailState(self.n, pos - self.full)

    def __iter__(self) -> Iterator[BoundaryState | TailState]:
        return (self.state(i) for i in range(self.size))

    def busy_count(self) -> np.ndarray:
        c = np.full(self.size, self.n)
        c[: self.full + 1] = np.bitwise_count(np.arange(self.full + 1))
        return c

    def queue_length(self) -> np.ndarray:
        q = np.zeros(self.size, dtype=int)
        q[self.full + 1 :] = np.arange(1, self.K + 1)
        return q

    def busy_indicator(self, server: int) -> np.ndarray:
        """Boolean vector: is ``server`` busy in each state."""
        bit = 1 << (self.n - 1 - server)
        out = np.ones(self.size, dtype=bool)
        out[: self.full + 1] = (np.arange(self.full + 1) & bit) != 0
        return out

    def components(self, pos: int) -> tuple[int, ...]:
        """The ``(x_1, ..., x_n, x_f)`` tuple of a position."""
        if pos <= self.full:
            return tuple((pos >> (self.n - 1 - s)) & 1 for s in range(self.n)) + (0,)
        return (1,) * self.n + (pos - self.full,)


def build(config: SystemConfig, K: int | None = None) -> tuple[StateSpace, sp.csr_matrix]:
    """State space and generator ``Q`` (rows sum to zero).

    Arrivals at the deepest tail level ``K`` are blocked, which keeps ``Q``
    a proper generator; the mass lost relative to the infinite chain is of
    order ``rho ** K``.
    """
    config = validate(config)
    n = config.n
    if n > MAX_SERVERS:
        raise TooManyServers(f"state enumeration is limited to {MAX_SERVERS} servers, got {n}")
    if K is None:
        K = default_truncation(config.rho)
    if K < 1:
        raise BadTruncation(f"truncation depth must be >= 1, got {K}")
    space = StateSpace(n, K)
    lam, mu = config.lam, config.mu
    masks = np.arange(space.full + 1)
    idle = n - np.bitwise_count(masks)

    rows, cols, rates = [], [], []
    for s in range(n):
        bit = 1 << (n - 1 - s)
        free = masks[(masks & bit) == 0]
        rows.append(free)
        cols.append(free | bit)
        rates.append(lam / idle[free])
        taken = masks[(masks & bit) != 0]
        rows.append(taken)
        cols.append(taken ^ bit)
        rates.append(np.full(len(taken), mu[s]))

    total = math.fsum(mu)
    up = np.arange(space.full, space.full + K)
    rows += [up, up + 1]
    cols += [up + 1, up]
    rates += [np.full(K, lam), np.full(K, total)]

    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(rates)
    off = sp.csr_matrix((v, (r, c)), shape=(space.size, space.size))
    Q = off - sp.diags(np.asarray(off.sum(axis=1)).ravel())
    return space, Q.tocsr()


def stationary(Q: sp.spmatrix) -> np.ndarray:
    """Solve ``pi Q = 0, sum(pi) = 1``.

    The balance equation of state 0 (the empty system) is replaced by the
    normalization row.
    """
    size = Q.shape[0]
    A = sp.csr_matrix(Q.T).tolil()
    A[0, :] = np.ones(size)
    b = np.zeros(size)
    b[0] = 1.0
    if size <= DENSE_LIMIT:
        try:
            pi = scipy.linalg.solve(A.toarray(), b)
        except scipy.linalg.LinAlgError as exc:
            raise SingularSystem(str(exc)) from exc
    else:
        pi = spla.spsolve(A.tocsc(), b)
    if not np.all(np.isfinite(pi)):
        raise SingularSystem("non-finite stationary vector")
    pi = np.maximum(pi, 0.0)
    return pi / pi.sum()


def residual(Q: sp.spmatrix, pi: np.ndarray) -> float:
    """``max |pi Q|``."""
    return float(np.max(np.abs(Q.T @ pi)))


def aggregate(space: StateSpace, pi: np.ndarray, config: SystemConfig) -> MetricsReport:
    """Sum the stationary vector into the same report the closed form produces."""
    n = space.n
    mu = np.asarray(config.mu)
    busy_sets = [space.busy_indicator(s) for s in range(n)]
    busy = np.array([pi[b].sum() for b in busy_sets])
    busy_idle = np.zeros((n, n))
    for l in range(n):
        for m in range(n):
            if l != m:
                busy_idle[l, m] = pi[busy_sets[l] & ~busy_sets[m]].sum()
    count = space.busy_count()
    q = space.queue_length()
    boundary = slice(0, space.full + 1)
    p_k = np.bincount(count[boundary], weights=pi[boundary], minlength=n + 1)
    all_busy = pi[space.full :].sum()
    # decay ratio of the tail, read off the first two levels of the solution
    ratio = pi[space.full + 1] / pi[space.full]
    return MetricsReport(
        config=config,
        p0=float(pi[0]),
        busy=tuple(busy.tolist()),
        busy_idle=tuple(tuple(r) for r in busy_idle.tolist()),
        effective_rate=tuple((mu * busy).tolist()),
        prob_all_busy=float(all_busy),
        p_k=tuple(p_k.tolist()),
        tail_ratio=float(ratio),
        mean_customers=float(np.dot(count + q, pi)),
    )


def solve_metrics(config: SystemConfig, K: int | None = None) -> tuple[MetricsReport, float]:
    """Build, solve and aggregate; returns the report and ``max |pi Q|``."""
    space, Q = build(config, K)
    pi = stationary(Q)
    return aggregate(space, pi, config), residual(Q, pi)


def balance_residual(config: SystemConfig, dist) -> float:
    """Largest relative violation of the global balance equations.

    ``dist`` is a closed-form :class:`~hetqueue.closed_form.StationaryDistribution`;
    its boundary probabilities and first tail level are substituted into
    the balance equation of every boundary state and of tail level 1
    (which also covers the tail recursion). Each residual is divided by
    the outflow term of its equation.
    """
    from .closed_form import boundary_state_prob, tail_prob

    config = validate(config)
    n = config.n
    if n > MAX_SERVERS:
        raise TooManyServers(f"state enumeration is limited to {MAX_SERVERS} servers, got {n}")
    lam = config.lam
    mu = np.asarray(config.mu)
    total = math.fsum(config.mu)
    full = 2**n - 1
    masks = np.arange(full + 1)
    bits = ((masks[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1).astype(bool)
    size = bits.sum(axis=1)

    # product form evaluated state by state from the closed-form object
    p = np.array([boundary_state_prob(dist, np.flatnonzero(row)) for row in bits])
    p1 = tail_prob(dist, 1)
    p2 = tail_prob(dist, 2)

    out = (lam + bits @ mu) * p
    inflow = np.zeros(full + 1)
    for s in range(n):
        bit = 1 << (n - 1 - s)
        has = (masks & bit) != 0
        # arrival into s from the state where s was idle
        src = masks[has] ^ bit
        inflow[has] += lam / (n - size[src]) * p[src]
        # departure of s from the state where s was busy
        src = masks[~has] | bit
        inflow[~has] += mu[s] * p[src]
    inflow[full] += total * p1
    rel = np.abs(out - inflow) / out
    tail_out = (lam + total) * p1
    tail_rel = abs(tail_out - (lam * p[full] + total * p2)) / tail_out
    return float(max(rel.max(), tail_rel))
