"""Deterministic random streams.

All randomness in a run flows from one integer seed.  Components draw from
labeled sub-streams ("init", "shuffle", "dropout", "generator", ...) so any
one of them can be reproduced in isolation without replaying the others.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _label_entropy(label: str) -> int:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def substream(seed: int, label: str) -> np.random.Generator:
    """Return an independent generator for (seed, label).

    The same pair always yields the same stream, on any platform.
    """
    return np.random.default_rng(np.random.SeedSequence([seed, _label_entropy(label)]))
