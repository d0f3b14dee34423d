"""Digest type and the single hash primitive used everywhere."""

from __future__ import annotations

import hashlib
from typing import NewType

Digest = NewType("Digest", bytes)

DIGEST_LEN = 32
ZERO_DIGEST = Digest(b"\x00" * DIGEST_LEN)


def hash_bytes(data: bytes) -> Digest:
    """SHA-256 of raw bytes."""
    return Digest(hashlib.sha256(data).digest())


def as_digest(raw: bytes) -> Digest:
    if len(raw) != DIGEST_LEN:
        raise ValueError(f"digest must be {DIGEST_LEN} bytes, got {len(raw)}")
    return Digest(bytes(raw))
