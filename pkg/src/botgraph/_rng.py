"""Counter-based random streams usable inside numba kernels.

Every walk / training chunk derives its own stream from a tuple of integers,
so results never depend on thread scheduling.
"""
import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit(cache=True)
def stream_seed(seed, a, b):
    """Hash three integers into a 64-bit stream state."""
    s = mix64(np.uint64(seed) + _GOLDEN)
    s = mix64(s ^ (np.uint64(a) + _GOLDEN))
    s = mix64(s ^ (np.uint64(b) + _GOLDEN))
    return s


@njit(cache=True, inline="always")
def next_u64(state):
    """Advance a one-element uint64 state array and return the next output."""
    state[0] += _GOLDEN
    return mix64(state[0])


@njit(cache=True, inline="always")
def next_double(state):
    return np.float64(next_u64(state) >> _S11) * _INV53


@njit(cache=True, inline="always")
def next_below(state, n):
    # 53-bit uniform scaled to [0, n); bias is negligible for graph-sized n
    return np.int64(next_double(state) * n)


def new_state(seed, a=0, b=0):
    return np.array([stream_seed(np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(a), np.uint64(b))],
                    dtype=np.uint64)
