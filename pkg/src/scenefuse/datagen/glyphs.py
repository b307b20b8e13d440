"""Randomized binary glyphs for rendering synthetic words.

Each letter gets a seeded 8x8 binary bitmap; the corruption glyph is the
all-zero bitmap, distinct from every letter by construction (letters must
switch on a minimum number of pixels).
"""

from __future__ import annotations

import string

import numpy as np

from scenefuse.errors import GenerationError

GLYPH_SIZE = 8
_MIN_ON_PIXELS = 16
CORRUPT_CHAR = "\x00"  # internal key for the blanked glyph


class GlyphTable:
    """Letter -> 8x8 binary bitmap mapping, plus the all-zero corruption glyph."""

    def __init__(self, glyphs: dict[str, np.ndarray], seed: int):
        self.seed = seed
        self.glyphs = {}
        seen: set[bytes] = set()
        for char, bitmap in glyphs.items():
            arr = np.asarray(bitmap, dtype=np.uint8)
            if arr.shape != (GLYPH_SIZE, GLYPH_SIZE) or not np.isin(arr, (0, 1)).all():
                raise GenerationError(f"glyph {char!r} is not an 8x8 binary bitmap")
            key = arr.tobytes()
            if key in seen:
                raise GenerationError(f"glyph {char!r} duplicates another glyph")
            if char != CORRUPT_CHAR and arr.sum() == 0:
                raise GenerationError(f"letter glyph {char!r} is blank")
            seen.add(key)
            self.glyphs[char] = arr
        if CORRUPT_CHAR not in self.glyphs:
            self.glyphs[CORRUPT_CHAR] = np.zeros((GLYPH_SIZE, GLYPH_SIZE), dtype=np.uint8)

    @classmethod
    def from_seed(cls, seed: int, alphabet: str = string.ascii_lowercase) -> "GlyphTable":
        rng = np.random.default_rng(seed)
        glyphs: dict[str, np.ndarray] = {}
        seen: set[bytes] = set()
        for char in alphabet:
            for _ in range(1000):
                bitmap = (rng.random((GLYPH_SIZE, GLYPH_SIZE)) < 0.5).astype(np.uint8)
                if bitmap.sum() < _MIN_ON_PIXELS:
                    continue
                key = bitmap.tobytes()
                if key in seen:
                    continue
                seen.add(key)
                glyphs[char] = bitmap
                break
            else:
                raise GenerationError(f"could not sample a distinct glyph for {char!r}")
        return cls(glyphs, seed)

    def bitmap(self, char: str) -> np.ndarray:
        if char not in self.glyphs:
            raise GenerationError(f"no glyph for character {char!r}")
        return self.glyphs[char]

    def render_word(self, word: str, corrupt_slot: int | None = None) -> np.ndarray:
        """Render to a float32 ``[8, 8*len]`` bitmap in {0, 1}.

        ``corrupt_slot`` blanks that position with the corruption glyph.
        """
        if corrupt_slot is not None and not (0 <= corrupt_slot < len(word)):
            raise GenerationError(
                f"corrupt slot {corrupt_slot} outside word of length {len(word)}"
            )
        columns = []
        for i, char in enumerate(word):
            key = CORRUPT_CHAR if i == corrupt_slot else char
            columns.append(self.bitmap(key))
        return np.concatenate(columns, axis=1).astype(np.float32)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "glyphs": {
                ("corrupt" if c == CORRUPT_CHAR else c): arr.flatten().tolist()
                for c, arr in self.glyphs.items()
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GlyphTable":
        glyphs = {}
        for char, flat in data["glyphs"].items():
            key = CORRUPT_CHAR if char == "corrupt" else char
            glyphs[key] = np.asarray(flat, dtype=np.uint8).reshape(GLYPH_SIZE, GLYPH_SIZE)
        return cls(glyphs, data["seed"])
