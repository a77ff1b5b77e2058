"""Elementary symmetric polynomials over sets of positive reals.

``e[k]`` is the sum over all size-``k`` subsets of the product of their
elements. Tables are built one element at a time with
``e'[k] = e[k] + x * e[k-1]``; every term is nonnegative so there is no
cancellation. Exclusions are always rebuilt from the retained elements,
never deflated out of a larger table.

The queue formulas need ``e[k] / m(m-1)...(m-k+1)`` where ``m`` is the
number of elements. :func:`falling_esp` builds that ratio directly so the
intermediate values stay bounded even when ``e[k]`` itself would overflow.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class NegativeValue(ValueError):
    pass


@dataclass(frozen=True)
class EspTable:
    values: tuple[float, ...]
    e: tuple[float, ...]

    def __getitem__(self, k: int) -> float:
        # out-of-range orders are 0, including k = -1
        if 0 <= k < len(self.e):
            return self.e[k]
        return 0.0

    def __len__(self) -> int:
        return len(self.e)


def _positive(values: Iterable[float]) -> np.ndarray:
    arr = np.asarray(list(values), dtype=float)
    if arr.ndim != 1:
        raise ValueError("values must be one-dimensional")
    if np.any(~(arr > 0)):
        raise NegativeValue(f"values must be positive, got {arr[~(arr > 0)].tolist()}")
    return arr


def _build(arr: np.ndarray) -> np.ndarray:
    e = np.zeros(len(arr) + 1)
    e[0] = 1.0
    for i, x in enumerate(arr, start=1):
        e[1 : i + 1] += x * e[0:i].copy()
    return e


def esp_all(values: Sequence[float]) -> EspTable:
    """Table of ``e[0..n]`` for ``values`` in O(n^2)."""
    arr = _positive(values)
    return EspTable(tuple(arr.tolist()), tuple(_build(arr).tolist()))


def esp_excluding(values: Sequence[float], excluded: Iterable[int]) -> EspTable:
    """Table over ``values`` with the positions in ``excluded`` removed."""
    arr = _positive(values)
    drop = set(int(i) for i in excluded)
    if any(i < 0 or i >= len(arr) for i in drop):
        raise IndexError(f"excluded indices {sorted(drop)} out of range for {len(arr)} values")
    kept = arr[[i for i in range(len(arr)) if i not in drop]]
    return EspTable(tuple(kept.tolist()), tuple(_build(kept).tolist()))


def falling_esp(values: Sequence[float], log: bool = False) -> np.ndarray:
    """``e[k] / (m)_k`` for ``k = 0..m``, with ``(m)_k`` the falling factorial.

    Uses the bounded recurrence
    ``u'[k] = ((j - k) * u[k] + x * u[k-1]) / j`` after adding the j-th
    element. With ``log=True`` the same recurrence runs on logarithms
    (entries that are exactly zero become ``-inf``).
    """
    return falling_esp_rows(np.asarray(values, dtype=float)[None, :], log=log)[0]


def falling_esp_rows(values: np.ndarray, log: bool = False) -> np.ndarray:
    """Row-wise :func:`falling_esp` for a 2-D array of equal-length rows."""
    x = np.asarray(values, dtype=float)
    if x.ndim != 2:
        raise ValueError("expected a 2-D array")
    if np.any(~(x > 0)):
        raise NegativeValue("values must be positive")
    rows, m = x.shape
    u = _start(rows, m, log)
    for j in range(m):
        _advance(u, x[:, j : j + 1], float(j + 1), log)
    return u


def falling_esp_leave_one_out(values: Sequence[float], log: bool = False) -> np.ndarray:
    """Row ``l`` holds :func:`falling_esp` of ``values`` with position ``l`` removed.

    Result has shape ``(n, n)``; each row is rebuilt from scratch over its
    ``n - 1`` retained elements, all rows advanced together.
    """
    x = _positive(values)
    n = len(x)
    if n == 0:
        return np.zeros((0, 0))
    u = _start(n, n - 1, log)
    for j in range(n):
        # rows before j have now seen j elements, rows after j have seen j + 1
        c = np.full((n, 1), j + 1.0)
        c[:j] = j
        c[j] = 1.0  # row j skips element j and is restored below
        saved = u[j].copy()
        _advance(u, x[j], c, log)
        u[j] = saved
    return u


def _start(rows: int, width: int, log: bool) -> np.ndarray:
    if log:
        u = np.full((rows, width + 1), -np.inf)
        u[:, 0] = 0.0
    else:
        u = np.zeros((rows, width + 1))
        u[:, 0] = 1.0
    return u


def _advance(u: np.ndarray, x, c, log: bool) -> None:
    # in-place: u now covers c elements, the newest being x
    width = u.shape[1] - 1
    if width == 0:
        return
    k = np.arange(1, width + 1, dtype=float)
    stay_w = np.maximum(c - k, 0.0) / c
    with np.errstate(divide="ignore", invalid="ignore"):
        if log:
            grow = np.log(x / c) + u[:, :-1]
            u[:, 1:] = np.logaddexp(np.log(stay_w) + u[:, 1:], grow)
        else:
            u[:, 1:] = stay_w * u[:, 1:] + (x / c) * u[:, :-1]
