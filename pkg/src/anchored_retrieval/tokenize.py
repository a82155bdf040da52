"""Tokenizers for the lexical index.

Three modes:

``unicode-words``
    ``\\w+`` runs, so an unsegmented CJK line becomes a single token.
``cjk-char-bigrams``
    every word run is cut into overlapping character bigrams; a run of
    length one yields its single character.
``mixed``
    CJK runs are cut into bigrams, everything else stays a word.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import List

MODES = ("unicode-words", "cjk-char-bigrams", "mixed")

_WORD = re.compile(r"\w+", re.UNICODE)

# Han, Hiragana/Katakana, Hangul syllables and the CJK compatibility block
_CJK_RANGES = (
    (0x3040, 0x30FF),
    (0x3400, 0x4DBF),
    (0x4E00, 0x9FFF),
    (0xAC00, 0xD7AF),
    (0xF900, 0xFAFF),
    (0x20000, 0x2FA1F),
)


def is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


def char_bigrams(run: str) -> List[str]:
    if len(run) == 1:
        return [run]
    return [run[i : i + 2] for i in range(len(run) - 1)]


def _split_script(word: str) -> List[str]:
    """Split a word run into maximal CJK / non-CJK pieces."""
    pieces: List[str] = []
    start = 0
    for i in range(1, len(word) + 1):
        if i == len(word) or is_cjk(word[i]) != is_cjk(word[start]):
            pieces.append(word[start:i])
            start = i
    return pieces


@dataclass(frozen=True)
class Tokenizer:
    mode: str = "mixed"
    lowercase: bool = True

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown tokenizer mode {self.mode!r}; expected one of {MODES}")

    def __call__(self, text: str) -> List[str]:
        if self.lowercase:
            text = text.lower()
        words = _WORD.findall(text)
        if self.mode == "unicode-words":
            return words
        tokens: List[str] = []
        if self.mode == "cjk-char-bigrams":
            for w in words:
                tokens.extend(char_bigrams(w))
            return tokens
        for w in words:
            for piece in _split_script(w):
                if is_cjk(piece[0]):
                    tokens.extend(char_bigrams(piece))
                else:
                    tokens.append(piece)
        return tokens

    def to_dict(self) -> dict:
        return {"mode": self.mode, "lowercase": self.lowercase}
