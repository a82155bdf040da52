"""Counter-based seed derivation.

Every consumer of randomness names its stage; the stage name and any
per-item counters are appended to the root seed, so adding a new stage
never shifts the draws of an existing one.
"""

from __future__ import annotations

import zlib
from typing import Tuple


def stage_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def derive_seed(root: int, stage: str, *counters: int) -> Tuple[int, ...]:
    if root < 0 or any(c < 0 for c in counters):
        raise ValueError("seeds and counters must be non-negative")
    return (root, stage_key(stage)) + tuple(counters)
