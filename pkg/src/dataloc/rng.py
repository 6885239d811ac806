"""Platform-stable randomness: seed derivation and a counter-based stream.

Every random decision in the package goes through this module so results
depend only on integer seeds, never on numpy/Python generator versions.

The stream is SplitMix64 evaluated at counter values ``1, 2, 3, ...``: the
k-th draw of a stream seeded with ``s`` is ``mix64(s + k * GOLDEN)``. Because
draw k is a pure function of (s, k) the stream can be generated in bulk.
Bounded integers take the top 32 bits ``u`` of a draw and map them to
``(u * bound) >> 32``; bounds must stay below 2**32.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def derive_seed(*parts) -> int:
    """Hash an arbitrary tuple of ints/strings into a 64-bit sub-seed."""
    text = "\x1f".join(f"{type(p).__name__}:{p}" for p in parts)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def stream(seed: int, count: int, offset: int = 0) -> np.ndarray:
    """Return draws ``offset+1 .. offset+count`` of the stream as uint64."""
    k = np.arange(offset + 1, offset + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed & _MASK) + k * np.uint64(GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
        z = z ^ (z >> np.uint64(31))
    return z


def draw(seed: int, k: int) -> int:
    """Scalar form of the stream (draw number ``k``, 1-based)."""
    z = (seed + k * GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * _M1) & _MASK
    z = ((z ^ (z >> 27)) * _M2) & _MASK
    return z ^ (z >> 31)


def bounded(draws: np.ndarray, bounds) -> np.ndarray:
    """Map uint64 draws to integers in ``[0, bound)`` elementwise."""
    hi = draws >> np.uint64(32)
    return ((hi * np.asarray(bounds, dtype=np.uint64)) >> np.uint64(32)).astype(np.int64)


def fisher_yates_swaps(seed: int, n: int) -> list[int]:
    """Swap partners for a descending Fisher-Yates pass over ``n`` items.

    Element ``t`` of the result is the partner ``j`` of position
    ``i = n - 1 - t`` and uses draw ``t + 1``.
    """
    if n < 2:
        return []
    bounds = np.arange(n, 1, -1, dtype=np.uint64)  # i + 1 for i = n-1 .. 1
    return bounded(stream(seed, n - 1), bounds).tolist()


def permutation(seed: int, n: int) -> list[int]:
    """Fisher-Yates shuffle of ``range(n)``."""
    perm = list(range(n))
    for i, j in zip(range(n - 1, 0, -1), fisher_yates_swaps(seed, n)):
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def choose(seed: int, n: int, k: int) -> list[int]:
    """``k`` distinct indices from ``range(n)`` by a partial ascending shuffle."""
    if k >= n:
        return list(range(n))
    pool = list(range(n))
    bounds = np.arange(n, n - k, -1, dtype=np.uint64)
    for i, r in enumerate(bounded(stream(seed, k), bounds).tolist()):
        j = i + r
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:k]


def integers(seed: int, n: int, bound: int) -> np.ndarray:
    """``n`` independent draws in ``[0, bound)`` (sampling with replacement)."""
    return bounded(stream(seed, n), bound)
