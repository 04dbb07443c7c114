"""Small shared helpers: deterministic RNG stream derivation, clamping."""

from __future__ import annotations

import hashlib
import random


def derive_seed(global_seed: int, *parts: str) -> int:
    """Stable 64-bit seed for an independent stream named by `parts`.

    Streams derived this way are insensitive to the order devices are
    advanced in, which is what keeps whole-scenario runs reproducible.
    """
    material = f"{global_seed}|" + "|".join(parts)
    digest = hashlib.sha256(material.encode()).digest()
    return int.from_bytes(digest[:8], "big")


def derive_rng(global_seed: int, *parts: str) -> random.Random:
    return random.Random(derive_seed(global_seed, *parts))


def clamp(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else hi if x > hi else x
