"""Counter-based random streams and the per-trial draw kernels.

Every uniform is a pure function of ``(master_seed, trial_index, draw_index)``::

    key        = mix64(master_seed mod 2**64)
    trial_key  = mix64(key + (trial_index + 1) * GAMMA)
    word       = mix64(trial_key + (draw_index + 1) * GAMMA)
    u          = (word >> 11) * 2**-53            # in [0, 1)

where ``mix64`` is the SplitMix64 finalizer and ``GAMMA`` the 64-bit golden
ratio constant; all arithmetic wraps modulo 2**64. Trial indices are 0-based
here (the public records are 1-based). Because no state is carried between
trials, any block of trials can be generated in any order or on any worker.

Normal variates use Box-Muller on consecutive draw pairs:
``sqrt(-2 ln(1 - u[2k])) * cos(2 pi u[2k+1])``.

Each kernel exists twice: a numba loop (``*_nb``) and a vectorized numpy
version (``*_np``). The module-level names pick one according to
:data:`covlab._accel.USE_NUMBA`.
"""

import numpy as np

from covlab._accel import USE_NUMBA, njit

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S11 = np.uint64(11)
_S27 = np.uint64(27)
_S30 = np.uint64(30)
_S31 = np.uint64(31)
_ONE = np.uint64(1)
_TWO_M53 = 2.0**-53
_TWO_PI = 2.0 * np.pi

_MASK64 = (1 << 64) - 1


def mix64_int(z):
    """SplitMix64 finalizer on a Python int (reference, used for seeds)."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def seed_key(seed):
    return np.uint64(mix64_int(int(seed)))


def uniform_reference(seed, trial, draw):
    """Scalar pure-Python evaluation of one stream value; slow, for tests."""
    tk = mix64_int(mix64_int(int(seed)) + (trial + 1) * 0x9E3779B97F4A7C15)
    word = mix64_int(tk + (draw + 1) * 0x9E3779B97F4A7C15)
    return (word >> 11) * _TWO_M53


# numpy path ---------------------------------------------------------------


def _mix64_np(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def uniform_block_np(key, start, count, width):
    idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        tk = _mix64_np(key + idx * GAMMA)
        offs = np.arange(1, width + 1, dtype=np.uint64) * GAMMA
        words = _mix64_np(tk[:, None] + offs[None, :])
    return (words >> _S11).astype(np.float64) * _TWO_M53


def normal_block_np(key, start, count, width):
    u = uniform_block_np(key, start, count, 2 * width)
    radius = np.sqrt(-2.0 * np.log1p(-u[:, 0::2]))
    return radius * np.cos(_TWO_PI * u[:, 1::2])


# numba path ---------------------------------------------------------------


@njit(cache=True, nogil=True)
def _mix64_nb(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def uniform_block_nb(key, start, count, width):
    out = np.empty((count, width), dtype=np.float64)
    for t in range(count):
        tk = _mix64_nb(key + np.uint64(start + t + 1) * GAMMA)
        for j in range(width):
            word = _mix64_nb(tk + np.uint64(j + 1) * GAMMA)
            out[t, j] = np.float64(word >> _S11) * _TWO_M53
    return out


@njit(cache=True, nogil=True)
def normal_block_nb(key, start, count, width):
    out = np.empty((count, width), dtype=np.float64)
    for t in range(count):
        tk = _mix64_nb(key + np.uint64(start + t + 1) * GAMMA)
        for k in range(width):
            w1 = _mix64_nb(tk + np.uint64(2 * k + 1) * GAMMA)
            w2 = _mix64_nb(tk + np.uint64(2 * k + 2) * GAMMA)
            u1 = np.float64(w1 >> _S11) * _TWO_M53
            u2 = np.float64(w2 >> _S11) * _TWO_M53
            out[t, k] = np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(_TWO_PI * u2)
    return out


if USE_NUMBA:
    uniform_block = uniform_block_nb
    normal_block = normal_block_nb
else:
    uniform_block = uniform_block_np
    normal_block = normal_block_np
