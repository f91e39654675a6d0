"""Counter-based random streams (Philox4x32-10) vectorised over substreams.

Every draw is a pure function of ``(seed, replication, purpose, ensemble,
particle, counter)``, so results do not depend on how work is split across
processes or on the order in which particles are visited.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)

# purpose tags, stored in the low bits of the last counter word
NOISE = 0
INITIAL = 1
REFERENCE = 2
_PURPOSE_BITS = 2


def philox4x32(counter, key, rounds: int = 10):
    """Apply Philox4x32 to broadcastable counter words.

    Parameters
    ----------
    counter : sequence of four integer arrays (values < 2**32)
    key : pair of ints (< 2**32)

    Returns
    -------
    tuple of four ``uint64`` arrays holding 32-bit outputs.
    """
    c0, c1, c2, c3 = np.broadcast_arrays(*[np.asarray(c, dtype=np.uint64) for c in counter])
    c0, c1, c2, c3 = c0.copy(), c1.copy(), c2.copy(), c3.copy()
    k0, k1 = int(key[0]) & 0xFFFFFFFF, int(key[1]) & 0xFFFFFFFF
    for r in range(rounds):
        if r:
            k0 = (k0 + _W0) & 0xFFFFFFFF
            k1 = (k1 + _W1) & 0xFFFFFFFF
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0 = p0 >> _SHIFT32
        hi1 = p1 >> _SHIFT32
        c0 = hi1 ^ c1 ^ np.uint64(k0)
        c1 = p1 & _MASK32
        c2 = hi0 ^ c3 ^ np.uint64(k1)
        c3 = p0 & _MASK32
    return c0, c1, c2, c3


def _unit(hi, lo):
    # 53-bit uniform strictly inside (0, 1)
    bits = ((hi << _SHIFT32) | lo) >> np.uint64(11)
    return (bits.astype(np.float64) + 0.5) * 2.0**-53


@dataclass(frozen=True)
class RngStream:
    """Family of independent substreams keyed by ``(ensemble, particle)``.

    ``seed`` is the 64-bit Philox key; ``replication`` separates independent
    repetitions of a whole experiment.
    """

    seed: int
    replication: int = 0

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if not 0 <= self.replication < 2 ** (32 - _PURPOSE_BITS):
            raise ValueError(f"replication index out of range: {self.replication}")

    @property
    def key(self) -> tuple[int, int]:
        return self.seed & 0xFFFFFFFF, self.seed >> 32

    def _words(self, purpose, counter, ensembles, particles):
        tag = (self.replication << _PURPOSE_BITS) | purpose
        return philox4x32((counter, particles, ensembles, tag), self.key)

    def uniforms(self, purpose: int, counter, ensembles, particles) -> np.ndarray:
        """Two uniforms per (counter, ensemble, particle); trailing axis of size 2."""
        w0, w1, w2, w3 = self._words(purpose, counter, ensembles, particles)
        return np.stack([_unit(w0, w1), _unit(w2, w3)], axis=-1)

    def normals(self, purpose: int, step: int, ensembles, particles, k: int = 1) -> np.ndarray:
        """Standard normals of shape ``broadcast(ensembles, particles) + (k,)``.

        Coordinates ``2b`` and ``2b+1`` come from block ``step * ceil(k/2) + b``.
        """
        ensembles = np.asarray(ensembles, dtype=np.uint64)
        particles = np.asarray(particles, dtype=np.uint64)
        blocks = -(-k // 2)
        out = []
        for b in range(blocks):
            u = self.uniforms(purpose, np.uint64(step * blocks + b), ensembles, particles)
            radius = np.sqrt(-2.0 * np.log(u[..., 0]))
            angle = 2.0 * np.pi * u[..., 1]
            out.append(radius * np.cos(angle))
            out.append(radius * np.sin(angle))
        return np.stack(out[:k], axis=-1)
