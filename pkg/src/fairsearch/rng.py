"""Deterministic seed derivation.

Every stochastic component draws from a numpy Generator whose seed is a
stable hash of (parent seed, purpose tag, ...). Python's builtin hash() is
salted per process, so we hash a canonical byte encoding with SHA-256
instead; the derived streams are identical across processes, platforms and
parallel schedules.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _encode(part) -> bytes:
    if isinstance(part, bytes):
        return b"b" + part
    if isinstance(part, str):
        return b"s" + part.encode("utf-8")
    if isinstance(part, bool):
        return b"o" + (b"1" if part else b"0")
    if isinstance(part, (int, np.integer)):
        return b"i" + str(int(part)).encode()
    if isinstance(part, float):
        return b"f" + part.hex().encode()
    if part is None:
        return b"n"
    if isinstance(part, (tuple, list)):
        inner = b"".join(_encode(p) + b"," for p in part)
        return b"(" + inner + b")"
    raise TypeError(f"cannot derive a seed from {type(part).__name__!r}")


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from hashable parts (ints, floats, strings, tuples)."""
    digest = hashlib.sha256(b"|".join(_encode(p) for p in parts)).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)


def rng_from(*parts) -> np.random.Generator:
    """A fresh PCG64 Generator seeded by :func:`derive_seed` of the parts."""
    return np.random.Generator(np.random.PCG64(derive_seed(*parts)))
