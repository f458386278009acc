"""Deterministic seed derivation.

Python's builtin ``hash`` is salted per process, so reproducible seeds are
derived from blake2b digests of the canonical text of their ingredients.
"""

from __future__ import annotations

import hashlib

_SEED_BITS = 63  # keep seeds in the non-negative int64 range


def stable_hash(*parts: object) -> int:
    """A process-independent hash of the canonical text of ``parts``."""
    h = hashlib.blake2b(digest_size=16)
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest()[:8], "little") & ((1 << _SEED_BITS) - 1)


def derive_eval_seed(experiment_seed: int, subset_text: str, draw_index: int) -> int:
    """Seed for one oracle evaluation: stable in (experiment, subset, draw)."""
    return stable_hash("eval", experiment_seed, subset_text, draw_index)
