"""Counter-based random numbers.

Every uniform variate is a pure function of a 64-bit key and integer
counters, built from the SplitMix64 finalizer.  Nothing is stateful, so a
trajectory can be regenerated from ``(seed, index)`` alone and vertex classes
of a random field are looked up without ever storing the field.

The compiled kernels reimplement exactly these formulas; keep them in sync.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MUL1 = 0xBF58476D1CE4E5B9
MUL2 = 0x94D049BB133111EB
SITE_DOMAIN = 0x5BD1E9955BD1E995
STREAM_DOMAIN = 0x2545F4914F6CDD1D
INV_2_53 = 1.0 / (1 << 53)


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * MUL1) & MASK64
    z = ((z ^ (z >> 27)) * MUL2) & MASK64
    return z ^ (z >> 31)


def absorb(h: int, value: int) -> int:
    """Fold a (possibly negative) integer into the running hash."""
    return mix64(((int(h) ^ (int(value) & MASK64)) + GOLDEN) & MASK64)


def to_unit(h: int) -> float:
    return (h >> 11) * INV_2_53


def site_uniform(seed: int, coords) -> float:
    h = mix64(seed ^ SITE_DOMAIN)
    for c in coords:
        h = absorb(h, int(c))
    return to_unit(h)


def stream_key(seed: int, index: int) -> int:
    return absorb(mix64(seed ^ STREAM_DOMAIN), index)


def stream_uniform(seed: int, index: int, step: int) -> float:
    return to_unit(absorb(stream_key(seed, index), step))


# vectorized versions; uint64 array arithmetic wraps modulo 2**64

def _mix64_arr(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(MUL1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(MUL2)
    return z ^ (z >> np.uint64(31))


def _absorb_arr(h: np.ndarray, values: np.ndarray) -> np.ndarray:
    return _mix64_arr((h ^ values.astype(np.int64).view(np.uint64)) + np.uint64(GOLDEN))


def _to_unit_arr(h: np.ndarray) -> np.ndarray:
    return (h >> np.uint64(11)).astype(np.float64) * INV_2_53


def site_uniform_array(seed: int, coords: np.ndarray) -> np.ndarray:
    """``site_uniform`` for every row of an ``(M, d)`` integer array."""
    coords = np.atleast_2d(np.asarray(coords, dtype=np.int64))
    h = np.full(coords.shape[0], mix64(seed ^ SITE_DOMAIN), dtype=np.uint64)
    for axis in range(coords.shape[1]):
        h = _absorb_arr(h, coords[:, axis])
    return _to_unit_arr(h)


def stream_keys(seed: int, indices: np.ndarray) -> np.ndarray:
    base = np.full(len(indices), mix64(seed ^ STREAM_DOMAIN), dtype=np.uint64)
    return _absorb_arr(base, np.asarray(indices, dtype=np.int64))


def stream_uniform_array(keys: np.ndarray, step: int) -> np.ndarray:
    steps = np.full(len(keys), step, dtype=np.int64)
    return _to_unit_arr(_absorb_arr(keys, steps))


@dataclass(frozen=True)
class RngStream:
    """Independent substream ``index`` of a master seed.

    ``uniform(step)`` is the variate consumed by trajectory step ``step``.
    """

    seed: int
    index: int

    def uniform(self, step: int) -> float:
        return stream_uniform(self.seed, self.index, step)
