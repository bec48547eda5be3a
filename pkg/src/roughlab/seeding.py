"""Deterministic per-member seed derivation."""

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One round of the splitmix64 output function (a bijection on uint64)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def seed_fanout(base_seed: int, member_index: int) -> int:
    """Map ``(base_seed, member_index)`` to a 64-bit member seed.

    For a fixed base the map is injective in ``member_index`` (a bijection
    applied to distinct residues mod 2**64), and it uses only integer
    arithmetic, so it is identical on every platform.
    """
    if member_index < 0:
        raise ValueError("member_index must be nonnegative")
    return splitmix64((splitmix64(int(base_seed) & _MASK) + int(member_index)) & _MASK)


def member_rng(base_seed: int, member_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_fanout(base_seed, member_index)))


def member_seeds(base_seed: int, n: int, offset: int = 0) -> np.ndarray:
    return np.array([seed_fanout(base_seed, offset + i) for i in range(n)], dtype=np.uint64)
