"""Product-form steady state of the heterogeneous M|M|n queue with random routing.

With ``x_j = lam / mu_j`` a boundary state with busy set ``S`` has
probability ``prod(x_j for j in S) / (n)_|S| * p0`` where ``(n)_k`` is the
falling factorial ``n (n-1) ... (n-k+1)``. Above the boundary the queue
length is geometric with ratio ``rho = lam / sum(mu)``. Every aggregate is
a weighted sum of elementary symmetric polynomials of ``x`` (or ``x`` with
one or two servers removed), which :mod:`hetqueue.symfunc` supplies already
divided by the matching falling factorial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.special import logsumexp

from .model import BoundaryState, MetricsReport, SystemConfig, validate
from .symfunc import falling_esp, falling_esp_leave_one_out

# above this many servers the normalization runs in log space
LOG_DOMAIN_THRESHOLD = 200


class SameServer(ValueError):
    pass


@dataclass(frozen=True)
class StationaryDistribution:
    """Normalized product-form solution.

    ``a[k]`` is the probability of exactly ``k`` customers for ``k = 0..n``;
    ``a[n]`` is also the probability of the all-busy state with an empty
    queue, the base of the geometric tail.
    """

    config: SystemConfig
    p0: float
    rho: float
    a: tuple[float, ...]
    log_norm: float
    log_domain: bool

    @property
    def n(self) -> int:
        return self.config.n

    @property
    def ratios(self) -> np.ndarray:
        return np.array([self.config.lam / m for m in self.config.mu])

    def tail_mass(self) -> float:
        """Probability of at least one waiting customer."""
        return self.a[-1] * self.rho / (1.0 - self.rho)


def solve(config: SystemConfig) -> StationaryDistribution:
    config = validate(config)
    n = config.n
    rho = config.rho
    use_log = n > LOG_DOMAIN_THRESHOLD
    u = falling_esp(config.lam / np.asarray(config.mu), log=use_log)
    if use_log:
        tail = u[n] - math.log1p(-rho)
        log_norm = float(logsumexp(np.append(u[:n], tail)))
        a = np.exp(u - log_norm)
    else:
        norm = math.fsum(u[:n]) + u[n] / (1.0 - rho)
        log_norm = math.log(norm)
        a = u / norm
    return StationaryDistribution(
        config=config,
        p0=float(a[0]),
        rho=rho,
        a=tuple(a.tolist()),
        log_norm=log_norm,
        log_domain=use_log,
    )


def _busy_set(dist: StationaryDistribution, busy) -> list[int]:
    if isinstance(busy, BoundaryState):
        if busy.n != dist.n:
            raise ValueError(f"state has n={busy.n}, distribution has n={dist.n}")
        return sorted(busy.busy)
    idx = sorted(set(int(s) for s in busy))
    if any(s < 0 or s >= dist.n for s in idx):
        raise IndexError(f"server index out of range: {idx}")
    return idx


def boundary_state_prob(dist: StationaryDistribution, busy: BoundaryState | Iterable[int]) -> float:
    """Probability of the given busy set with nobody waiting."""
    s = _busy_set(dist, busy)
    n = dist.n
    x = dist.ratios
    log_p = sum(math.log(x[j]) for j in s) - sum(math.log(n - i) for i in range(len(s)))
    return math.exp(log_p - dist.log_norm)


def tail_prob(dist: StationaryDistribution, queue_len: int) -> float:
    """Probability of all servers busy with exactly ``queue_len`` waiting."""
    if queue_len < 1:
        raise ValueError("queue_len must be >= 1")
    return dist.a[-1] * dist.rho**queue_len


def prob_all_busy(dist: StationaryDistribution) -> float:
    return dist.a[-1] / (1.0 - dist.rho)


def _check_server(dist: StationaryDistribution, *servers: int) -> None:
    for s in servers:
        if not 0 <= s < dist.n:
            raise IndexError(f"server {s} out of range for n={dist.n}")


def _scale(dist: StationaryDistribution, lead: float, s: float) -> float:
    # lead * s * p0, where s is a log-sum in log mode
    if dist.log_domain:
        return math.exp(math.log(lead) + s - dist.log_norm) if s > -math.inf else 0.0
    return lead * s * dist.p0


def _wsum(u: np.ndarray, w: np.ndarray, log: bool) -> float:
    if len(u) == 0:
        return -math.inf if log else 0.0
    if log:
        with np.errstate(divide="ignore"):
            return float(logsumexp(u + np.log(w)))
    return math.fsum(u * w)


def _pair_weights(n: int) -> np.ndarray:
    # e_{k-1}(x without l,m) / (n)_k for k = 1..n-1, in terms of the
    # table normalized by (n-2)_{k-1}
    j = np.arange(n - 1)
    return (n - 1 - j) / (n * (n - 1.0))


def _pair_sum(dist: StationaryDistribution, l: int, m: int) -> float:
    x = dist.ratios
    rest = np.delete(x, [l, m])
    u = falling_esp(rest, log=dist.log_domain)
    return _wsum(u, _pair_weights(dist.n), dist.log_domain)


def busy_idle_probability(dist: StationaryDistribution, l: int, m: int) -> float:
    """Probability that server ``l`` is busy while server ``m`` is idle."""
    if l == m:
        raise SameServer(f"l and m must differ, both are {l}")
    _check_server(dist, l, m)
    return _scale(dist, dist.ratios[l], _pair_sum(dist, l, m))


def busy_probability(dist: StationaryDistribution, l: int) -> float:
    """Long-run probability that server ``l`` is busy.

    Sums the boundary states where ``l`` is busy but some server is idle
    (``k = 1..n-1`` busy servers) and adds the all-busy probability. For
    ``n = 1`` the first sum is empty.
    """
    _check_server(dist, l)
    n = dist.n
    rest = np.delete(dist.ratios, l)
    u = falling_esp(rest, log=dist.log_domain)[: n - 1]
    partial = _scale(dist, dist.ratios[l], _wsum(u, np.full(len(u), 1.0 / n), dist.log_domain))
    return partial + prob_all_busy(dist)


def busy_probabilities(dist: StationaryDistribution) -> np.ndarray:
    """:func:`busy_probability` for every server at once."""
    n = dist.n
    x = dist.ratios
    if n == 1:
        return np.array([prob_all_busy(dist)])
    u = falling_esp_leave_one_out(x, log=dist.log_domain)[:, : n - 1]
    if dist.log_domain:
        s = logsumexp(u, axis=1) - math.log(n)
        partial = np.exp(np.log(x) + s - dist.log_norm)
    else:
        partial = x * u.sum(axis=1) / n * dist.p0
    return partial + prob_all_busy(dist)


def busy_idle_matrix(dist: StationaryDistribution) -> np.ndarray:
    """Matrix of :func:`busy_idle_probability`; the diagonal is zero."""
    n = dist.n
    x = dist.ratios
    out = np.zeros((n, n))
    if n < 2:
        return out
    w = _pair_weights(n)
    for l in range(n):
        rest = np.delete(x, l)
        u = falling_esp_leave_one_out(rest, log=dist.log_domain)
        if dist.log_domain:
            s = logsumexp(u + np.log(w), axis=1)
            vals = np.exp(math.log(x[l]) + s - dist.log_norm)
        else:
            vals = x[l] * (u @ w) * dist.p0
        out[l, np.arange(n) != l] = vals
    return out


def effective_rate(dist: StationaryDistribution, l: int) -> float:
    """Throughput of server ``l``: its rate times its busy probability."""
    return dist.config.mu[l] * busy_probability(dist, l)


def mean_customers(dist: StationaryDistribution) -> float:
    n, rho = dist.n, dist.rho
    a = dist.a
    boundary = math.fsum(k * a[k] for k in range(n + 1))
    tail = a[n] * (n * rho / (1.0 - rho) + rho / (1.0 - rho) ** 2)
    return boundary + tail


def metrics(dist: StationaryDistribution) -> MetricsReport:
    busy = busy_probabilities(dist)
    mu = np.asarray(dist.config.mu)
    return MetricsReport(
        config=dist.config,
        p0=dist.p0,
        busy=tuple(busy.tolist()),
        busy_idle=tuple(tuple(r) for r in busy_idle_matrix(dist).tolist()),
        effective_rate=tuple((mu * busy).tolist()),
        prob_all_busy=prob_all_busy(dist),
        p_k=dist.a,
        tail_ratio=dist.rho,
        mean_customers=mean_customers(dist),
    )


def analyze(config: SystemConfig) -> MetricsReport:
    return metrics(solve(config))


@dataclass(frozen=True)
class PairGaps:
    """Structured forms of the two pairwise differences for servers l, m.

    ``busy_gap`` is ``P_m - P_l`` written as ``(x_m - x_l) * S * p0``;
    ``rate_gap`` is ``mu_l P_l - mu_m P_m`` written as
    ``lam (x_m - x_l) T p0 + (mu_l - mu_m) P_all``. Both are free of
    cancellation, so their signs are reliable even when the direct
    differences are tiny.
    """

    busy_gap: float
    rate_gap: float


def pair_gaps(dist: StationaryDistribution, l: int, m: int) -> PairGaps:
    if l == m:
        raise SameServer(f"l and m must differ, both are {l}")
    _check_server(dist, l, m)
    n = dist.n
    x = dist.ratios
    lam, mu = dist.config.lam, dist.config.mu
    u = falling_esp(np.delete(x, [l, m]), log=dist.log_domain)
    dx = x[m] - x[l]
    s = _wsum(u, _pair_weights(n), dist.log_domain)
    # e_{k-2}(x without l,m) / (n)_k for k = 2..n-1
    t = _wsum(u[: n - 2], np.full(n - 2, 1.0 / (n * (n - 1.0))), dist.log_domain)
    sign = math.copysign(1.0, dx) if dx != 0 else 0.0
    busy_gap = sign * _scale(dist, abs(dx), s) if dx != 0 else 0.0
    rate_gap = sign * _scale(dist, lam * abs(dx), t) if dx != 0 else 0.0
    rate_gap += (mu[l] - mu[m]) * prob_all_busy(dist)
    return PairGaps(busy_gap=float(busy_gap), rate_gap=float(rate_gap))


@dataclass(frozen=True)
class PairVerdict:
    """Outcome for one pair with ``mu[fast] > mu[slow]``.

    Margins are positive when the corresponding inequality holds:
    ``busy_margin = P_slow - P_fast``,
    ``rate_margin = mu_fast P_fast - mu_slow P_slow``,
    ``lower_margin = P_fast - (mu_slow / mu_fast) P_slow``;
    the upper sandwich margin equals ``busy_margin``.
    """

    fast: int
    slow: int
    busy_fast: float
    busy_slow: float
    busy_margin: float
    rate_margin: float
    lower_margin: float

    @property
    def upper_margin(self) -> float:
        return self.busy_margin

    @property
    def holds(self) -> bool:
        return self.busy_margin > 0 and self.rate_margin > 0 and self.lower_margin > 0

    def to_dict(self) -> dict:
        return {
            "fast": self.fast,
            "slow": self.slow,
            "busy_fast": self.busy_fast,
            "busy_slow": self.busy_slow,
            "busy_margin": self.busy_margin,
            "rate_margin": self.rate_margin,
            "lower_margin": self.lower_margin,
            "upper_margin": self.upper_margin,
            "holds": self.holds,
        }


def theorem_check(dist: StationaryDistribution, busy: np.ndarray | None = None) -> list[PairVerdict]:
    """Check the slow-server inequalities for every strictly ordered pair.

    Pairs with equal rates are skipped. Ordering of the result is by
    ``(fast, slow)`` index.
    """
    mu = dist.config.mu
    if busy is None:
        busy = busy_probabilities(dist)
    out = []
    for l in range(dist.n):
        for m in range(dist.n):
            if not mu[l] > mu[m]:
                continue
            pl, pm = float(busy[l]), float(busy[m])
            out.append(
                PairVerdict(
                    fast=l,
                    slow=m,
                    busy_fast=pl,
                    busy_slow=pm,
                    busy_margin=pm - pl,
                    rate_margin=mu[l] * pl - mu[m] * pm,
                    lower_margin=pl - mu[m] / mu[l] * pm,
                )
            )
    return out
