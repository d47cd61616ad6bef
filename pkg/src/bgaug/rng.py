"""Counter-based reproducible random streams built on SplitMix64.

Every random decision in a dataset build comes from a stream derived from
``(seed, epoch, index, purpose)``. Streams never depend on the order in which
samples are generated or on the worker that generates them.
"""

from __future__ import annotations

import enum
import functools
import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

# Field salts keep epoch/index/purpose in separate domains, so that
# (epoch=a, index=b) and (epoch=b, index=a) derive different streams.
_EPOCH_SALT = 0xD1B54A32D192ED03
_INDEX_SALT = 0x8CB92BA72F3D8DD7
_PURPOSE_SALT = 0xABC98388FB8FAC03

_TWO_PI = 2.0 * math.pi
_INV_2_53 = 1.0 / (1 << 53)


class Purpose(enum.IntEnum):
    BACKGROUND = 1
    PITCH = 2
    PHOTOMETRIC = 3
    NOISE = 4
    SPLIT = 5


# Number of draws each purpose consumes per sample. Part of the replay format.
DRAWS_PER_PURPOSE = {
    Purpose.BACKGROUND: 3,
    Purpose.PITCH: 1,
    Purpose.PHOTOMETRIC: 8,
}
NOISE_DRAWS_PER_PIXEL = 2


def mix64(z: int) -> int:
    """SplitMix64 finalizer (a bijection on 64-bit integers)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _mix64_inplace(z: np.ndarray) -> np.ndarray:
    z ^= z >> np.uint64(30)
    z *= np.uint64(0xBF58476D1CE4E5B9)
    z ^= z >> np.uint64(27)
    z *= np.uint64(0x94D049BB133111EB)
    z ^= z >> np.uint64(31)
    return z


@functools.lru_cache(maxsize=4)
def _gamma_offsets(n: int) -> np.ndarray:
    # k * GOLDEN_GAMMA mod 2**64 for k = 1..n
    with np.errstate(over="ignore"):
        out = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(GOLDEN_GAMMA)
    out.setflags(write=False)
    return out


def parse_seed(text: str) -> int:
    """Parse a decimal or ``0x``-prefixed hexadecimal seed into 64 bits."""
    text = text.strip().lower()
    value = int(text, 16) if text.startswith("0x") else int(text, 10)
    if not 0 <= value <= MASK64:
        raise ValueError(f"seed {text!r} does not fit in 64 unsigned bits")
    return value


class RngStream:
    """A single-owner SplitMix64 stream.

    ``state`` is the generator state before the next draw, ``counter`` the
    number of 64-bit words drawn so far. Do not share one stream across
    threads; derive one per consumer instead.
    """

    __slots__ = ("state", "counter")

    def __init__(self, state: int, counter: int = 0):
        self.state = state & MASK64
        self.counter = counter

    def __repr__(self) -> str:
        return f"RngStream(state=0x{self.state:016x}, counter={self.counter})"

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        self.counter += 1
        return mix64(self.state)

    def next_u64_array(self, n: int) -> np.ndarray:
        """Draw ``n`` words at once; identical to ``n`` calls of :meth:`next_u64`."""
        with np.errstate(over="ignore"):
            out = _mix64_inplace(_gamma_offsets(n) + np.uint64(self.state))
        self.state = (self.state + n * GOLDEN_GAMMA) & MASK64
        self.counter += n
        return out

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of mantissa."""
        return (self.next_u64() >> 11) * _INV_2_53

    def random_array(self, n: int) -> np.ndarray:
        words = self.next_u64_array(n)
        words >>= np.uint64(11)
        out = words.astype(np.float64)
        out *= _INV_2_53
        return out

    def uniform(self, lo: float, hi: float) -> float:
        if not lo <= hi:
            raise ValueError(f"invalid uniform range [{lo}, {hi}]")
        u = self.random()
        if lo == hi:
            return lo
        return lo + (hi - lo) * u

    def integers(self, lo: int, hi: int) -> int:
        """Uniform integer in the closed range [lo, hi], without modulo bias."""
        if not lo <= hi:
            raise ValueError(f"invalid integer range [{lo}, {hi}]")
        span = hi - lo + 1
        if span > MASK64:
            raise ValueError("integer range wider than 64 bits")
        # Accept only words below the largest multiple of span.
        limit = (1 << 64) - ((1 << 64) % span)
        while True:
            word = self.next_u64()
            if word < limit:
                return lo + word % span

    def normal(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        """Box-Muller normal; always consumes exactly two draws."""
        if sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {sigma}")
        u1 = 1.0 - self.random()  # (0, 1], keeps log finite
        u2 = self.random()
        z = math.sqrt(-2.0 * math.log(u1)) * math.cos(_TWO_PI * u2)
        return mu + sigma * z

    def normal_array(self, n: int) -> np.ndarray:
        """``n`` standard normals; element i uses draws 2i and 2i+1."""
        u = self.random_array(NOISE_DRAWS_PER_PIXEL * n).reshape(n, 2)
        radius = np.subtract(1.0, u[:, 0])
        np.log(radius, out=radius)
        radius *= -2.0
        np.sqrt(radius, out=radius)
        angle = u[:, 1] * _TWO_PI
        np.cos(angle, out=angle)
        radius *= angle
        return radius


def derive_substream(seed: int, epoch: int, index: int, purpose: Purpose) -> RngStream:
    """Derive the stream owned by one (seed, epoch, index, purpose) tuple."""
    key = (
        (seed & MASK64)
        ^ mix64((epoch & MASK64) ^ _EPOCH_SALT)
        ^ mix64((index & MASK64) ^ _INDEX_SALT)
        ^ mix64(int(purpose) ^ _PURPOSE_SALT)
    )
    return RngStream(mix64(key))


def draw_uniform(stream: RngStream, lo: float, hi: float) -> float:
    return stream.uniform(lo, hi)


def draw_uniform_int(stream: RngStream, lo: int, hi: int) -> int:
    return stream.integers(lo, hi)


def draw_normal(stream: RngStream, mu: float, sigma: float) -> float:
    return stream.normal(mu, sigma)
