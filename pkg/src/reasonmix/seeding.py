"""Deterministic seed substreams.

All randomness in a run flows from one root seed; stages and per-item work
derive child seeds from stable string/int tags (never builtin ``hash``,
which is salted per process).
"""

from __future__ import annotations

import zlib

import numpy as np


def _stable_int(part: object) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    return zlib.crc32(str(part).encode("utf-8"))


def derive_seed(root: int, *parts: object) -> int:
    """Child seed for a named substream; stable across processes and runs."""
    seq = np.random.SeedSequence([int(root) & 0xFFFFFFFF] + [_stable_int(p) for p in parts])
    return int(seq.generate_state(1, dtype=np.uint64)[0] & 0x7FFFFFFFFFFFFFFF)


def rng_for(root: int, *parts: object) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, *parts))
