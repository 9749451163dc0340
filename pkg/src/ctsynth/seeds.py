"""Deterministic seed derivation.

Python's builtin ``hash`` is salted per process, so derived seeds go through
SHA-256 instead: stable across processes, platforms, and sessions. Items of
a stream get ``derive_seed(global_seed, "stream", index)`` and are therefore
random-access reproducible.
"""
from __future__ import annotations

import hashlib


def derive_seed(*parts) -> int:
    """Collapse arbitrary (repr-stable) parts into a 64-bit seed."""
    text = "\x1f".join(repr(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")
