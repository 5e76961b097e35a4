"""Walker/Vose alias method for O(1) categorical sampling."""
from dataclasses import dataclass

import numpy as np
from numba import njit

from ._rng import next_u64

_S32 = np.uint64(32)
_LOW32 = np.uint64(0xFFFFFFFF)
_INV32 = 1.0 / 4294967296.0


@dataclass(frozen=True)
class AliasTable:
    """Alias table for a fixed categorical distribution.

    Attributes
    ----------
    prob : ndarray of float64
        Probability of keeping column ``i`` when it is drawn.
    alias : ndarray of int64
        Fallback index for column ``i``.
    """
    prob: np.ndarray
    alias: np.ndarray

    @property
    def size(self) -> int:
        return len(self.prob)

    def probabilities(self) -> np.ndarray:
        """Reconstruct the distribution encoded by the table."""
        n = self.size
        mass = self.prob.astype(np.float64).copy()
        np.add.at(mass, self.alias, 1.0 - self.prob)
        return mass / n


@njit(cache=True)
def fill_alias(weights, prob, alias):
    """Vose's construction, writing into ``prob``/``alias`` (same length as weights)."""
    n = weights.shape[0]
    total = 0.0
    for i in range(n):
        total += weights[i]
    scaled = np.empty(n)
    small = np.empty(n, dtype=np.int64)
    large = np.empty(n, dtype=np.int64)
    ns = 0
    nl = 0
    for i in range(n):
        scaled[i] = weights[i] * n / total
        alias[i] = i
        if scaled[i] < 1.0:
            small[ns] = i
            ns += 1
        else:
            large[nl] = i
            nl += 1
    while ns > 0 and nl > 0:
        ns -= 1
        s = small[ns]
        g = large[nl - 1]
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] = (scaled[g] + scaled[s]) - 1.0
        if scaled[g] < 1.0:
            nl -= 1
            small[ns] = g
            ns += 1
    # leftovers are 1 up to rounding; a zero weight must never be kept
    top = 0
    for i in range(n):
        if weights[i] > weights[top]:
            top = i
    for k in range(nl):
        prob[large[k]] = 1.0
    for k in range(ns):
        i = small[k]
        if weights[i] > 0.0:
            prob[i] = 1.0
        else:
            prob[i] = 0.0
            alias[i] = top


@njit(cache=True, inline="always")
def draw_alias(prob, alias, offset, size, state):
    # high 32 bits pick the column, low 32 bits are the coin
    z = next_u64(state)
    i = np.int64(((z >> _S32) * np.uint64(size)) >> _S32)
    if np.float64(z & _LOW32) * _INV32 < prob[offset + i]:
        return i
    return alias[offset + i]


def build_alias_table(weights) -> AliasTable:
    """Build an alias table for ``weights / sum(weights)``.

    Raises
    ------
    ValueError
        If any weight is negative or non-finite, or all are zero.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty 1-d array")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and nonnegative")
    if not np.any(w > 0):
        raise ValueError("at least one weight must be positive")
    prob = np.zeros(w.size)
    alias = np.zeros(w.size, dtype=np.int64)
    fill_alias(w, prob, alias)
    return AliasTable(prob, alias)


def sample_alias(table: AliasTable, rng: np.random.Generator, size=None):
    """Draw index(es) from ``table`` using ``rng``.

    With ``size=None`` a single int is returned, otherwise an int64 array.
    """
    n = table.size
    if size is None:
        i = int(rng.integers(n))
        return i if rng.random() < table.prob[i] else int(table.alias[i])
    idx = rng.integers(n, size=size)
    keep = rng.random(size) < table.prob[idx]
    return np.where(keep, idx, table.alias[idx])
