"""Counter-based random numbers.

Every draw is a pure function of ``(key, counter)``:

    u64    = splitmix64_mix(key + counter * 0x9E3779B97F4A7C15)   (mod 2**64)
    uniform = ((u64 >> 11) + 0.5) * 2**-53                          in (0, 1)

Normals use the Marsaglia polar transform. Uniforms are consumed in pairs
``(u1, u2)`` at consecutive counters; a rejected pair is skipped, an
accepted pair yields two normals in order ``(x1, x2)``. When an odd count is
requested the second normal of the final pair is discarded.

Stream keys are derived from a 64-bit seed and a small integer stream id, so
teacher init, student init, inputs and dropout masks never share counters.
The simulation kernels address the inputs of step ``m`` at counter
``m << STEP_SHIFT`` of the input stream, which makes each step's input
independent of how many uniforms earlier steps rejected.
"""
from __future__ import annotations

import numba as nb
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
STEP_SHIFT = 32

# stream ids
TEACHER = 1
STUDENT = 2
INPUT = 3
MASK = 4
THERMO_INIT = 5
THERMO_STEP = 6
MONTE_CARLO = 7
VERIFY = 8

_MASK64 = (1 << 64) - 1


@nb.njit(inline="always")
def mix64(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@nb.njit(inline="always")
def uniform_at(key, counter):
    x = mix64(key + np.uint64(counter) * GOLDEN)
    return (np.float64(x >> np.uint64(11)) + 0.5) * (1.0 / 9007199254740992.0)


@nb.njit(nogil=True, cache=True)
def fill_uniform(key, counter, out):
    c = np.uint64(counter)
    for j in range(out.shape[0]):
        out[j] = uniform_at(key, c)
        c += np.uint64(1)
    return c


@nb.njit(nogil=True, cache=True)
def fill_normal(key, counter, out):
    """Polar-method normals into ``out``; returns the next unused counter."""
    c = np.uint64(counter)
    n = out.shape[0]
    j = 0
    while j < n:
        u1 = 2.0 * uniform_at(key, c) - 1.0
        u2 = 2.0 * uniform_at(key, c + np.uint64(1)) - 1.0
        c += np.uint64(2)
        s = u1 * u1 + u2 * u2
        if s >= 1.0 or s == 0.0:
            continue
        scale = np.sqrt(-2.0 * np.log(s) / s)
        out[j] = u1 * scale
        if j + 1 < n:
            out[j + 1] = u2 * scale
        j += 2
    return c


@nb.njit(nogil=True, cache=True)
def fill_sign(key, counter, out):
    c = np.uint64(counter)
    for j in range(out.shape[0]):
        out[j] = 1.0 if uniform_at(key, c) < 0.5 else -1.0
        c += np.uint64(1)
    return c


def _mix64_int(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_key(seed: int, stream: int) -> np.uint64:
    """Mix a user seed and a stream id into a 64-bit generator key."""
    a = _mix64_int((seed & _MASK64) ^ 0x5851F42D4C957F2D)
    b = _mix64_int((stream & _MASK64) + int(GOLDEN))
    return np.uint64(_mix64_int(a + b))


class CounterRNG:
    """Sequential view onto one counter-based stream."""

    def __init__(self, seed: int, stream: int = 0, counter: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        self.key = derive_key(self.seed, self.stream)
        self.counter = np.uint64(counter)

    def spawn(self, stream: int) -> "CounterRNG":
        return CounterRNG(self.seed, stream)

    def at(self, counter: int) -> "CounterRNG":
        rng = CounterRNG(self.seed, self.stream)
        rng.counter = np.uint64(counter)
        return rng

    def at_step(self, m: int) -> "CounterRNG":
        return self.at(m << STEP_SHIFT)

    def _shape(self, size) -> tuple:
        return (size,) if np.isscalar(size) else tuple(size)

    def uniform(self, size=1) -> np.ndarray:
        shape = self._shape(size)
        out = np.empty(int(np.prod(shape)))
        self.counter = fill_uniform(self.key, self.counter, out)
        return out.reshape(shape)

    def normal(self, size=1) -> np.ndarray:
        shape = self._shape(size)
        out = np.empty(int(np.prod(shape)))
        self.counter = fill_normal(self.key, self.counter, out)
        return out.reshape(shape)

    def rademacher(self, size=1) -> np.ndarray:
        shape = self._shape(size)
        out = np.empty(int(np.prod(shape)))
        self.counter = fill_sign(self.key, self.counter, out)
        return out.reshape(shape)

    def __repr__(self) -> str:
        return f"CounterRNG(seed={self.seed}, stream={self.stream}, counter={int(self.counter)})"
