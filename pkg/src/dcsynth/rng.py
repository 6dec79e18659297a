"""Seed discipline shared by every stochastic component.

All randomness flows from a single 64-bit seed through numpy's PCG64
generator. Sub-streams for grid cells, folds, segments, etc. are derived
with :func:`derive_seed`, which hashes the base seed together with a
sequence of string/int coordinates via SHA-256. Both choices are fixed and
platform independent; changing either invalidates recorded results.
"""

from __future__ import annotations

import hashlib

import numpy as np

_SEED_MASK = (1 << 63) - 1


def make_rng(seed: int) -> np.random.Generator:
    """Build the project-wide generator (PCG64) for a 64-bit seed."""
    return np.random.Generator(np.random.PCG64(int(seed) & _SEED_MASK))


def derive_seed(base_seed: int, *parts: object) -> int:
    """Derive an independent child seed from a base seed and coordinates.

    Coordinates are joined into a canonical byte string and hashed with
    SHA-256; the top 63 bits of the digest become the child seed. Distinct
    coordinate tuples give independent streams, identical ones reproduce
    the same stream.
    """
    payload = repr((int(base_seed),) + tuple(_canonical(p) for p in parts))
    digest = hashlib.sha256(payload.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") & _SEED_MASK


def _canonical(part: object) -> object:
    if isinstance(part, (bool, np.bool_)):
        return bool(part)
    if isinstance(part, (int, np.integer)):
        return int(part)
    if isinstance(part, (float, np.floating)):
        # floats enter via noise levels and thresholds; repr is exact for them
        return repr(float(part))
    if isinstance(part, str):
        return part
    if isinstance(part, (tuple, list)):
        return tuple(_canonical(p) for p in part)
    raise TypeError(f"cannot derive seed from {type(part).__name__!r} coordinate")
