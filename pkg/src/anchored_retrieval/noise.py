"""Seeded character-level recall noise.

Each character is independently deleted, swapped with its right
neighbour, or replaced, according to the level's rates. Replacement
stands in for homophone confusion: a CJK ideograph is swapped for
another member of its *confusion group* (a fixed block of
``CONFUSION_GROUP`` consecutive code points), ASCII letters and digits
for another letter or digit of the same kind. Other characters are
left alone when drawn for replacement.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Sequence, Union

import numpy as np

CJK_START, CJK_END = 0x4E00, 0x9FFF
CONFUSION_GROUP = 4

Seed = Union[int, Sequence[int]]


@dataclass(frozen=True)
class NoiseLevel:
    label: str
    char_sub_rate: float
    char_del_rate: float
    char_transpose_rate: float
    target_editsim: float

    def __post_init__(self) -> None:
        rates = (self.char_sub_rate, self.char_del_rate, self.char_transpose_rate)
        if any(not 0.0 <= r <= 1.0 for r in rates):
            raise ValueError(f"{self.label}: rates must lie in [0, 1]")
        if sum(rates) > 1.0 + 1e-12:
            raise ValueError(f"{self.label}: rates sum to more than 1")

    @property
    def is_identity(self) -> bool:
        return self.char_sub_rate == self.char_del_rate == self.char_transpose_rate == 0.0


# Calibrated on 10-character synthetic CJK lines (see demos/calibrate_noise.py);
# the targets are the per-level mean EditSim values the channel should reproduce.
LEVELS: Dict[str, NoiseLevel] = {
    "L1": NoiseLevel("L1", char_sub_rate=0.092, char_del_rate=0.01, char_transpose_rate=0.01, target_editsim=0.881),
    "L2": NoiseLevel("L2", char_sub_rate=0.197, char_del_rate=0.02, char_transpose_rate=0.02, target_editsim=0.754),
    "L3": NoiseLevel("L3", char_sub_rate=0.64, char_del_rate=0.06, char_transpose_rate=0.04, target_editsim=0.269),
}

IDENTITY = NoiseLevel("L0", 0.0, 0.0, 0.0, target_editsim=1.0)


def get_level(label: str) -> NoiseLevel:
    try:
        return LEVELS[label]
    except KeyError:
        raise ValueError(f"unknown noise level {label!r}; expected one of {sorted(LEVELS)}") from None


def substitute_char(ch: str, rng: np.random.Generator, group: int = CONFUSION_GROUP) -> str:
    cp = ord(ch)
    if CJK_START <= cp <= CJK_END:
        lo = CJK_START + (cp - CJK_START) // group * group
        members = [c for c in range(lo, min(lo + group, CJK_END + 1)) if c != cp]
        return chr(members[rng.integers(len(members))]) if members else ch
    for alphabet in ("abcdefghijklmnopqrstuvwxyz", "ABCDEFGHIJKLMNOPQRSTUVWXYZ", "0123456789"):
        if ch in alphabet:
            others = alphabet.replace(ch, "")
            return others[rng.integers(len(others))]
    return ch


def corrupt_query(text: str, level: NoiseLevel, seed: Seed, group: int = CONFUSION_GROUP) -> str:
    """Pass ``text`` through the noise channel; deterministic in (text, level, seed)."""
    if not text:
        raise ValueError("cannot corrupt an empty string")
    if level.is_identity:
        return text
    rng = np.random.default_rng(seed)
    p_del = level.char_del_rate
    p_swap = p_del + level.char_transpose_rate
    p_sub = p_swap + level.char_sub_rate

    out = []
    remaining = len(text)  # length of the string if no further deletions happen
    i = 0
    while i < len(text):
        u = rng.random()
        if u < p_del:
            if remaining > 1:
                remaining -= 1
                i += 1
                continue
            out.append(text[i])
        elif u < p_swap:
            if i + 1 < len(text):
                out.append(text[i + 1])
                out.append(text[i])
                i += 2
                continue
            out.append(text[i])
        elif u < p_sub:
            out.append(substitute_char(text[i], rng, group))
        else:
            out.append(text[i])
        i += 1
    return "".join(out)
