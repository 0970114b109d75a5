"""Deterministic seed derivation.

Every run consumes randomness from a single master seed. Sub-streams are
derived by hashing the master seed together with a label path, so results
never depend on scheduling or on how many worker threads execute a step.

Labels used across the package:

* ``("table", kind)``            -- reference-table generation (kind: train/valid/test/pool/...)
* ("tree", b, "bootstrap")       -- bootstrap draw of tree *b*
* ("tree", b, "grow")            -- node-level feature subsets of tree *b*
* ("split",), ("noise",), ...    -- one-off draws named at the call site
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(master: int, *labels: object) -> int:
    """Derive a 63-bit sub-seed from a master seed and a label path."""
    h = hashlib.sha256()
    h.update(str(int(master)).encode())
    for part in labels:
        h.update(b"/")
        h.update(str(part).encode())
    return int.from_bytes(h.digest()[:8], "little") >> 1


def rng_for(master: int, *labels: object) -> np.random.Generator:
    """A numpy Generator on its own stream, independent of all other labels."""
    return np.random.default_rng(derive_seed(master, *labels))


def mix64(seed: int) -> int:
    """SplitMix64 finalizer; expands small integers into well-spread 64-bit states."""
    z = (int(seed) + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64
