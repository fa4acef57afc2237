"""Per-scene random streams derived from a single master seed.

The derivation is ``key = mix64(mix64(master_seed) ^ scene_index)`` where
``mix64`` is the SplitMix64 finalizer::

    z = (x + 0x9E3779B97F4A7C15) mod 2**64
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 mod 2**64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB mod 2**64
    return z ^ (z >> 31)

``key`` seeds numpy's PCG64 bit generator, whose output is specified
bit-for-bit and therefore identical on every platform.
"""

import numpy as np

MASK64 = (1 << 64) - 1


def mix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def scene_key(master_seed: int, scene_index: int) -> int:
    if not 0 <= master_seed <= MASK64:
        raise ValueError(f"master_seed must be a 64-bit unsigned int, got {master_seed}")
    if scene_index < 0:
        raise ValueError(f"scene_index must be non-negative, got {scene_index}")
    return mix64(mix64(master_seed) ^ (scene_index & MASK64))


def derive_scene_rng(master_seed: int, scene_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(scene_key(master_seed, scene_index)))
