"""Counter-based random numbers.

Every random quantity in the package is a pure function of a 64-bit key and
a counter.  The mixing function is the splitmix64 finalizer (Steele, Lea and
Flood 2014); each of its three stages (xor-shift, odd multiply, xor-shift)
is a bijection of the 64-bit integers.

Walkers draw from ``uniform(key, k)`` for k = 0, 1, 2, ...; a walker's key is
derived from the run key and its index with :func:`derive`, so results do not
depend on how walkers are scheduled.
"""

import numpy as np
from numba import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)
MASK64 = (1 << 64) - 1

_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> _S30)) * MIX1
    z = (z ^ (z >> _S27)) * MIX2
    return z ^ (z >> _S31)


@njit(cache=True, inline="always")
def to_unit(h):
    """Map 64 random bits to a double in the open interval (0, 1)."""
    return (np.float64(h >> _S11) + 0.5) * _INV53


@njit(cache=True, inline="always")
def uniform(key, counter):
    return to_unit(mix64(key + counter * GOLDEN))


@njit(cache=True, inline="always")
def derive(key, index):
    return mix64(key ^ mix64(np.uint64(index) + GOLDEN))


def mix64_py(z):
    """Pure-Python splitmix64 finalizer, used for key setup and as a test reference."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_py(key, index):
    return mix64_py(key ^ mix64_py((index + 0x9E3779B97F4A7C15) & MASK64))


def stream_key(seed, *indices):
    """64-bit stream key for ``seed`` refined by a sequence of integer ids.

    ``stream_key(run_seed, 3, 17)`` is the stream of walker 17 in sub-run 3.
    """
    key = mix64_py((int(seed) & MASK64) ^ 0x243F6A8885A308D3)
    for i in indices:
        key = derive_py(key, int(i) & MASK64)
    return key
