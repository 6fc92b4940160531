"""Stable seed derivation and canonical hashing helpers.

Every random draw in the project flows through a numpy Generator seeded via
`derive_seed`, so results depend only on the logical inputs (master seed plus
string tags), never on scheduling or platform hash salts.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

import numpy as np


def derive_seed(master: int, *tags: object) -> int:
    """Derive a 64-bit child seed from a master seed and arbitrary tags."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(master)).encode())
    for tag in tags:
        h.update(b"\x1f")
        h.update(str(tag).encode())
    return int.from_bytes(h.digest(), "little")


def rng_for(master: int, *tags: object) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(master, *tags)))


def canonical_json(obj: Any) -> str:
    """Serialize with sorted keys and no whitespace; floats keep full precision."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def text_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
