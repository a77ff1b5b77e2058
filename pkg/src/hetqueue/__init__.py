"""Steady-state analysis of M|M|n queues with heterogeneous servers and
uninformed customers (random routing among idle servers)."""

from .closed_form import (
    StationaryDistribution,
    analyze,
    busy_idle_probability,
    busy_probability,
    effective_rate,
    metrics,
    prob_all_busy,
    solve,
    theorem_check,
)
from .model import (
    BoundaryState,
    ConfigError,
    EmptyServerList,
    MetricsReport,
    NonPositiveRate,
    SystemConfig,
    TailState,
    Unstable,
    validate,
)

__version__ = "0.1.0"
