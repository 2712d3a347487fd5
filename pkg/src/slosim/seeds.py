"""Stable seed derivation.

All randomness in a run flows from one base seed; component streams use
hash-derived sub-seeds keyed by name so adding a component never perturbs
the streams of existing ones. SHA-256 keeps the derivation stable across
processes and Python versions (built-in ``hash`` is salted per process).
"""

from __future__ import annotations

import hashlib


def derive_seed(base: int, *parts: object) -> int:
    key = "|".join([str(base), *(str(p) for p in parts)])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")
