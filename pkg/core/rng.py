"""
Deterministic counter-based random numbers.

The generator is splitmix64 evaluated at consecutive counters:

    z = seed + (counter + 1) * 0x9E3779B97F4A7C15          (mod 2**64)
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9               (mod 2**64)
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB               (mod 2**64)
    z = z ^ (z >> 31)

Uniforms are ((z >> 11) + 1) * 2**-53, in (0, 1]. Standard normals come from
Box-Muller on consecutive uniform pairs (u1, u2):

    r = sqrt(-2 ln u1);  n0 = r cos(2 pi u2);  n1 = r sin(2 pi u2)

An RngState is immutable; every draw returns the values together with the
advanced state, so (seed, counter) always identifies the same sequence.
"""
from dataclasses import dataclass

import numpy as np

from .exceptions import require

GOLDEN_GAMMA = np.uint64(0x9E3779B97F4A7C15)
MIX_1 = np.uint64(0xBF58476D1CE4E5B9)
MIX_2 = np.uint64(0x94D049BB133111EB)
MASK_64 = (1 << 64) - 1


def splitmix64(seed, counters):
    """splitmix64 outputs for an array of counters (uint64, wrapping arithmetic)."""
    counters = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over='ignore'):
        z = np.uint64(seed) + (counters + np.uint64(1)) * GOLDEN_GAMMA
        z = (z ^ (z >> np.uint64(30))) * MIX_1
        z = (z ^ (z >> np.uint64(27))) * MIX_2
    return z ^ (z >> np.uint64(31))


def mix_seed(seed, *keys):
    """Derive an independent 64-bit seed from a base seed and integer or string keys."""
    value = int(seed) & MASK_64
    for key in keys:
        if isinstance(key, str):
            key = int.from_bytes(key.encode('utf-8')[:8].ljust(8, b'\0'), 'little')
        value = int(splitmix64(value ^ (int(key) & MASK_64), [0])[0])
    return value


@dataclass(frozen=True)
class RngState:
    seed: int
    counter: int = 0

    def __post_init__(self):
        require(0 <= self.seed <= MASK_64, f"seed out of 64-bit range: {self.seed}")
        require(0 <= self.counter <= MASK_64, f"counter out of range: {self.counter}")

    def spawn(self, *keys):
        """Independent child stream, e.g. rng.spawn('crossover', stage)."""
        return RngState(mix_seed(self.seed, self.counter, *keys), 0)

    def advanced(self, n):
        return RngState(self.seed, self.counter + n)

    def raw(self, n):
        """n raw 64-bit outputs and the advanced state."""
        counters = np.arange(self.counter, self.counter + n, dtype=np.uint64)
        return splitmix64(self.seed, counters), self.advanced(n)

    def uniform(self, n):
        """n uniforms in (0, 1] and the advanced state."""
        bits, state = self.raw(n)
        return ((bits >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0 ** -53, state

    def normal(self, n):
        """n standard normals (Box-Muller) and the advanced state."""
        pairs = (n + 1) // 2
        u, state = self.uniform(2 * pairs)
        u1, u2 = u[0::2], u[1::2]
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        out = np.empty(2 * pairs)
        out[0::2] = radius * np.cos(angle)
        out[1::2] = radius * np.sin(angle)
        return out[:n], state

    def permutation(self, n):
        """Random permutation of range(n) and the advanced state."""
        bits, state = self.raw(n)
        return np.argsort(bits, kind='stable'), state


def gaussian_vector(rng, n):
    """n i.i.d. standard normal samples drawn at rng's current position."""
    require(n >= 1, f"gaussian_vector needs n >= 1, got {n}")
    samples, _ = rng.normal(n)
    return samples
