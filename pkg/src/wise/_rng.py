"""Deterministic hashing and seed derivation.

Every random decision in the package flows through the splitmix64
finalizer below, either directly (counter-based uniform draws for the
sampling hashes) or indirectly (derived integer seeds handed to
``numpy.random.default_rng``).  Keeping this in one place is what makes
runs byte-identical across platforms and worker-pool sizes.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1

_GOLDEN = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x00000100000001B3


def mix64(x: int) -> int:
    """splitmix64 finalizer on a python int, reduced mod 2**64."""
    z = (x + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * _MIX_A) & MASK64
    z = ((z ^ (z >> 27)) * _MIX_B) & MASK64
    return z ^ (z >> 31)


def mix64_array(x: np.ndarray) -> np.ndarray:
    """Vectorised splitmix64 finalizer over a uint64 array."""
    with np.errstate(over="ignore"):
        z = x + np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX_A)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX_B)
        return z ^ (z >> np.uint64(31))


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash of a byte string."""
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & MASK64
    return h


def _token_int(token) -> int:
    if isinstance(token, str):
        return fnv1a64(token.encode("utf-8"))
    if isinstance(token, (int, np.integer)):
        return int(token) & MASK64
    raise TypeError(f"seed tokens must be str or int, got {type(token).__name__}")


def derive_seed(master: int, *tokens) -> int:
    """Derive a child seed from a master seed and a token path.

    Children for distinct token paths are statistically independent, and
    the derivation is order-sensitive, so ("lofo", 3) and ("tree", 3)
    land in unrelated streams.
    """
    state = mix64(int(master) & MASK64)
    for token in tokens:
        state = mix64(state ^ _token_int(token))
    return state


def unit_from_bits(z: np.ndarray) -> np.ndarray:
    """Map uint64 words to floats in the open interval (0, 1).

    52 bits, not 53: with 53 the top word rounds to exactly 1.0, which
    would break the -log(u) transforms downstream.
    """
    return ((z >> np.uint64(12)).astype(np.float64) + 0.5) * 2.0**-52


def keyed_uniform_grid(seed: int, lane: int, hash_ids: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Counter-based uniforms over a (hash, coordinate) grid.

    Returns an array of shape ``(len(hash_ids), len(coords))`` whose
    entries depend only on ``(seed, lane, hash_id, coord)``, never on
    evaluation order.  ``lane`` separates the independent draws a single
    hash needs.
    """
    inner = mix64(derive_seed(seed, "lane", lane))
    with np.errstate(over="ignore"):
        hkey = mix64_array(
            (hash_ids.astype(np.uint64) + np.uint64(1)) * np.uint64(_GOLDEN)
            ^ np.uint64(inner)
        )
        ckey = (coords.astype(np.uint64) + np.uint64(1)) * np.uint64(_MIX_A)
        z = mix64_array(ckey[None, :] ^ hkey[:, None])
    return unit_from_bits(z)
