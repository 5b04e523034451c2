"""Seeding and config-hash helpers shared across modules."""

from __future__ import annotations

import hashlib
import json
from typing import Any

_SEED_MASK = (1 << 63) - 1


def derive_seed(root: int, *parts: Any) -> int:
    """Derive a stable sub-seed from a root seed and a component path.

    The derivation is a SHA-256 hash of the textual path, so it is stable
    across processes, platforms and Python versions.  Distinct paths give
    independent streams; the same path always gives the same seed.
    """
    text = str(int(root)) + "".join("/" + str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & _SEED_MASK


def canonical_json(obj: Any) -> str:
    """Serialize to JSON with sorted keys and no incidental whitespace."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(obj: Any) -> str:
    """Hex digest identifying a resolved configuration."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()[:16]
