"""Deterministic seed derivation.

Component seeds are mixed from a master seed plus string tags so that
every random stream in a run is reproducible and independent of
evaluation order. SHA-256 is used instead of hash() because the latter
is salted per process.
"""

from __future__ import annotations

import hashlib


def derive_seed(*parts) -> int:
    """Mix arbitrary parts into a stable unsigned 64-bit seed."""
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")
