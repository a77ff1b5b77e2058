"""Input configuration and shared domain types.

Servers are identified by 0-based position in the rate vector. A boundary
state (empty queue) is a set of busy servers; its state index follows the
usual binary encoding where server 0 is the most significant bit, so for
``n`` servers the index is ``sum(2 ** (n - 1 - s) for s in busy)``.
Tail states (all servers busy, ``q >= 1`` waiting) take index
``2 ** n - 1 + q``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence


class ConfigError(ValueError):
    """Base class for configuration validation failures."""

    kind = "invalid"


class NonPositiveRate(ConfigError):
    kind = "non-positive rate"


class Unstable(ConfigError):
    kind = "unstable"


class EmptyServerList(ConfigError):
    kind = "empty server list"


@dataclass(frozen=True)
class SystemConfig:
    """Arrival rate and per-server service rates of an M|M|n queue.

    Construct through :func:`validate` or directly; both enforce the same
    checks. ``mu`` is stored as a tuple so instances are hashable and
    immutable.
    """

    lam: float
    mu: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "mu", tuple(float(m) for m in self.mu))
        _check(self.lam, self.mu)

    @property
    def n(self) -> int:
        return len(self.mu)

    @property
    def total_rate(self) -> float:
        """Aggregate service capacity ``sum(mu)``."""
        return math.fsum(self.mu)

    @property
    def rho(self) -> float:
        """Traffic intensity ``lam / sum(mu)``; always in (0, 1)."""
        return self.lam / self.total_rate

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "mu": list(self.mu)}


def _check(lam: float, mu: Sequence[float]) -> None:
    if len(mu) == 0:
        raise EmptyServerList("at least one server is required")
    if not all(math.isfinite(m) for m in mu) or not math.isfinite(lam):
        raise NonPositiveRate("rates must be finite")
    if lam <= 0:
        raise NonPositiveRate(f"arrival rate must be positive, got {lam!r}")
    bad = [j for j, m in enumerate(mu) if m <= 0]
    if bad:
        raise NonPositiveRate(
            f"service rates must be positive; server(s) {bad} have "
            f"{[mu[j] for j in bad]}"
        )
    total = math.fsum(mu)
    if lam >= total:
        raise Unstable(
            f"arrival rate {lam!r} >= total service rate {total!r}"
        )


def validate(lam: float | SystemConfig, mu: Iterable[float] | None = None) -> SystemConfig:
    """Validate raw rates and return a :class:`SystemConfig`.

    Passing an existing :class:`SystemConfig` returns it unchanged.

    Raises:
        EmptyServerList: no service rates given.
        NonPositiveRate: ``lam <= 0`` or some ``mu[j] <= 0``.
        Unstable: ``lam >= sum(mu)``.
    """
    if isinstance(lam, SystemConfig):
        return lam
    if mu is None:
        raise EmptyServerList("at least one server is required")
    return SystemConfig(lam, tuple(mu))


@dataclass(frozen=True)
class BoundaryState:
    """Set of busy servers with an empty queue."""

    n: int
    busy: frozenset[int]

    def __post_init__(self) -> None:
        busy = frozenset(int(s) for s in self.busy)
        if any(s < 0 or s >= self.n for s in busy):
            raise IndexError(f"server index out of range for n={self.n}: {sorted(busy)}")
        object.__setattr__(self, "busy", busy)

    @classmethod
    def from_index(cls, n: int, index: int) -> "BoundaryState":
        if not 0 <= index < 2**n:
            raise IndexError(f"boundary index {index} out of range for n={n}")
        return cls(n, frozenset(s for s in range(n) if index >> (n - 1 - s) & 1))

    @property
    def index(self) -> int:
        return sum(1 << (self.n - 1 - s) for s in self.busy)

    @property
    def size(self) -> int:
        return len(self.busy)

    @property
    def idle(self) -> frozenset[int]:
        return frozenset(range(self.n)) - self.busy


@dataclass(frozen=True)
class TailState:
    """All servers busy with ``queue_len >= 1`` customers waiting."""

    n: int
    queue_len: int

    def __post_init__(self) -> None:
        if self.queue_len < 1:
            raise ValueError("tail states need a positive queue length")

    @property
    def index(self) -> int:
        return 2**self.n - 1 + self.queue_len


@dataclass(frozen=True)
class MetricsReport:
    """Steady-state metrics for one configuration.

    ``p_k`` holds the probability of exactly ``k`` customers for
    ``k = 0..n``; the mass above ``n`` is ``p_k[n] * tail_ratio / (1 - tail_ratio)``.
    ``busy_idle[l][m]`` is the probability that server ``l`` is busy while
    ``m`` is idle; its diagonal is 0.
    """

    config: SystemConfig
    p0: float
    busy: tuple[float, ...]
    busy_idle: tuple[tuple[float, ...], ...]
    effective_rate: tuple[float, ...]
    prob_all_busy: float
    p_k: tuple[float, ...]
    tail_ratio: float
    mean_customers: float
    mean_sojourn: float = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "mean_sojourn", self.mean_customers / self.config.lam)

    def to_dict(self) -> dict:
        return {
            "lambda": self.config.lam,
            "mu": list(self.config.mu),
            "p0": self.p0,
            "busy": list(self.busy),
            "busy_idle": [list(row) for row in self.busy_idle],
            "effective_rate": list(self.effective_rate),
            "prob_all_busy": self.prob_all_busy,
            "p_k": list(self.p_k),
            "tail_ratio": self.tail_ratio,
            "mean_customers": self.mean_customers,
            "mean_sojourn": self.mean_sojourn,
        }

    def flat(self) -> dict[str, float]:
        """Every scalar entry keyed by a stable name, for entrywise comparison."""
        out = {
            "p0": self.p0,
            "prob_all_busy": self.prob_all_busy,
            "tail_ratio": self.tail_ratio,
            "mean_customers": self.mean_customers,
            "mean_sojourn": self.mean_sojourn,
        }
        n = self.config.n
        for l in range(n):
            out[f"busy[{l}]"] = self.busy[l]
            out[f"effective_rate[{l}]"] = self.effective_rate[l]
            for m in range(n):
                if l != m:
                    out[f"busy_idle[{l}][{m}]"] = self.busy_idle[l][m]
        for k, p in enumerate(self.p_k):
            out[f"p_k[{k}]"] = p
        return out
