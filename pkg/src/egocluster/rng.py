"""Counter-based randomness keyed by (seed, member id).

Every random decision about a member is a pure function of the global seed,
a stream constant and the member's id, so results do not depend on the
order in which members are processed or on how work is split across threads.
"""
from __future__ import annotations

import hashlib

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

# stream constants, one per kind of decision
EGO_VARIANT_STREAM = 0x45474F5F56415231
ALTER_TIE_STREAM = 0x414C545F54494531
LEAKAGE_STREAM = 0x4C45414B5F415353


def splitmix64(x: np.ndarray) -> np.ndarray:
    """splitmix64 finaliser applied elementwise to a uint64 array."""
    z = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        z = z ^ (z >> np.uint64(31))
    return z


def member_keys(ids: np.ndarray) -> np.ndarray:
    """Stable 64-bit key per member id.

    Integer ids map to their two's-complement bit pattern; string ids to the
    first 8 bytes of their BLAKE2b digest (little endian).
    """
    ids = np.asarray(ids)
    if ids.dtype.kind in "iu":
        return ids.astype(np.int64).view(np.uint64)
    out = np.empty(len(ids), dtype=np.uint64)
    for i, s in enumerate(ids):
        digest = hashlib.blake2b(str(s).encode("utf-8"), digest_size=8).digest()
        out[i] = int.from_bytes(digest, "little")
    return out


def stream_uniforms(keys: np.ndarray, seed: int, stream: int) -> np.ndarray:
    """Uniform [0, 1) draws, one per key, for the given seed and stream."""
    base = splitmix64(np.array([(int(seed) ^ stream) & _MASK], dtype=np.uint64))[0]
    z = splitmix64(splitmix64(np.asarray(keys, dtype=np.uint64) ^ base))
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
