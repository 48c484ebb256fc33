"""Counter-based random streams.

Every random draw in the package comes from the Philox family of
counter-based generators (Salmon et al., Random123):

* numpy-side draws (initial conditions, pair subsampling, geometric
  sampling) use ``numpy.random.Philox`` (Philox4x64-10) keyed by
  :func:`derive_key`;
* draws inside compiled kernels use :func:`philox4x32`, Philox4x32-10,
  with the 64-bit stream key split into two 32-bit words and a 128-bit
  counter ``(draw, step, cell_lo, cell_hi)``.

A stream is identified by ``(master_seed, label)``.  Keys are derived by
hashing, so the set of streams a run uses does not depend on the order in
which they are created.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numba as nb
import numpy as np

_MASK32 = 0xFFFFFFFF


def derive_key(master_seed: int, label: str) -> int:
    """64-bit stream key for ``(master_seed, label)``."""
    if not 0 <= int(master_seed) < 2**64:
        raise ValueError("master_seed must be a 64-bit unsigned integer")
    digest = hashlib.blake2b(
        f"{int(master_seed)}/{label}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class RNGStream:
    """A labelled stream derived from a master seed."""

    master_seed: int
    label: str

    @property
    def key(self) -> int:
        return derive_key(self.master_seed, self.label)

    def key32(self) -> tuple[np.uint32, np.uint32]:
        k = self.key
        return np.uint32(k & _MASK32), np.uint32(k >> 32)

    def child(self, label: str) -> "RNGStream":
        return RNGStream(self.master_seed, f"{self.label}/{label}")

    def generator(self, counter: int = 0) -> np.random.Generator:
        """numpy Generator on Philox4x64 with this stream's key.

        ``counter`` selects an independent block of the stream, e.g. one
        per diagnostics checkpoint.
        """
        k = self.key
        bitgen = np.random.Philox(
            key=np.array([k, 0], dtype=np.uint64),
            counter=np.array([0, 0, int(counter) & (2**64 - 1), 0], dtype=np.uint64),
        )
        return np.random.Generator(bitgen)


@nb.njit(cache=True, inline="always")
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Philox4x32-10 block function; all arguments are uint32."""
    for _ in range(10):
        p0 = np.uint64(0xD2511F53) * np.uint64(c0)
        p1 = np.uint64(0xCD9E8D57) * np.uint64(c2)
        hi0 = np.uint32(p0 >> np.uint64(32))
        lo0 = np.uint32(p0 & np.uint64(0xFFFFFFFF))
        hi1 = np.uint32(p1 >> np.uint64(32))
        lo1 = np.uint32(p1 & np.uint64(0xFFFFFFFF))
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        k0 = np.uint32(k0 + np.uint32(0x9E3779B9))
        k1 = np.uint32(k1 + np.uint32(0xBB67AE85))
    return c0, c1, c2, c3


@nb.njit(cache=True, inline="always")
def _to_unit(hi, lo):
    # 53 random bits -> double in [0, 1)
    bits = (np.uint64(hi) << np.uint64(21)) ^ (np.uint64(lo) >> np.uint64(11))
    return float(bits & np.uint64((1 << 53) - 1)) * (1.0 / 9007199254740992.0)


@nb.njit(cache=True, inline="always")
def uniform_pair(draw, step, cell_lo, cell_hi, k0, k1):
    """Two independent uniforms on [0, 1) for counter ``(draw, step, cell)``."""
    r0, r1, r2, r3 = philox4x32(
        np.uint32(draw), np.uint32(step), cell_lo, cell_hi, k0, k1
    )
    return _to_unit(r0, r1), _to_unit(r2, r3)


@nb.njit(cache=True, inline="always")
def splitmix64(z):
    z = np.uint64(z) + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@nb.njit(cache=True)
def cell_counter_words(coords):
    """Hash integer cell coordinates to two uint32 counter words."""
    h = np.uint64(0x6A09E667F3BCC909)
    for k in range(coords.shape[0]):
        h = splitmix64(h ^ np.uint64(np.int64(coords[k])))
    return np.uint32(h & np.uint64(0xFFFFFFFF)), np.uint32(h >> np.uint64(32))
