"""Context specifications: discriminating letters, stems, and tints.

A context spec defines ``C`` scene contexts.  Context ``c`` is marked by an
injective discriminating letter ``sigma(c)`` and a background tint level.
Words come from stems: fixed letters with one designated slot that is filled
with the current context's discriminating letter.  Uniqueness rules make
the Bayes ceilings exact:

* visible patterns (the stem with its slot masked) are unique across the
  in-vocabulary and out-of-vocabulary pools together, so a blanked crop
  identifies its stem but nothing else;
* ``sigma`` is injective, so the ``C`` completions of a stem are distinct
  and a crop-only recognizer can do no better than ``1/C`` on blanked slots,
  while the context resolves the word uniquely.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field

import numpy as np

from scenefuse.errors import GenerationError

SLOT_CHAR = "_"


@dataclass(frozen=True)
class Stem:
    """A word template with exactly one designated slot, e.g. ``"ca_t"``."""

    pattern: str

    def __post_init__(self):
        if self.pattern.count(SLOT_CHAR) != 1:
            raise GenerationError(
                f"stem {self.pattern!r} must contain exactly one slot {SLOT_CHAR!r}"
            )
        fixed = self.pattern.replace(SLOT_CHAR, "")
        if not fixed.isascii() or not fixed.islower() or not fixed.isalpha():
            raise GenerationError(f"stem {self.pattern!r} must use lowercase ascii letters")

    @property
    def slot(self) -> int:
        return self.pattern.index(SLOT_CHAR)

    def fill(self, letter: str) -> str:
        return self.pattern.replace(SLOT_CHAR, letter)

    def matches(self, word: str) -> bool:
        """Does ``word`` agree with this stem everywhere except the slot?"""
        if len(word) != len(self.pattern):
            return False
        return all(
            p == SLOT_CHAR or p == w for p, w in zip(self.pattern, word)
        )


@dataclass(frozen=True)
class ContextSpec:
    n_contexts: int
    sigma: tuple[str, ...]
    stems: tuple[Stem, ...]
    oov_stems: tuple[Stem, ...]
    tint_levels: tuple[int, ...]
    word_len: int = 4

    def __post_init__(self):
        validate_context_spec(self)

    def completions(self, stem: Stem) -> list[str]:
        return [stem.fill(letter) for letter in self.sigma]

    def pool(self, vocab: str) -> tuple[Stem, ...]:
        if vocab == "iv":
            return self.stems
        if vocab == "oov":
            return self.oov_stems
        raise GenerationError(f"unknown vocabulary flag {vocab!r}")

    def to_dict(self) -> dict:
        return {
            "n_contexts": self.n_contexts,
            "sigma": list(self.sigma),
            "stems": [s.pattern for s in self.stems],
            "oov_stems": [s.pattern for s in self.oov_stems],
            "tint_levels": list(self.tint_levels),
            "word_len": self.word_len,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ContextSpec":
        return cls(
            n_contexts=data["n_contexts"],
            sigma=tuple(data["sigma"]),
            stems=tuple(Stem(p) for p in data["stems"]),
            oov_stems=tuple(Stem(p) for p in data["oov_stems"]),
            tint_levels=tuple(data["tint_levels"]),
            word_len=data["word_len"],
        )


def validate_context_spec(spec: ContextSpec) -> None:
    if spec.n_contexts < 1:
        raise GenerationError(f"need at least one context, got {spec.n_contexts}")
    if len(spec.sigma) != spec.n_contexts:
        raise GenerationError(
            f"{spec.n_contexts} contexts need {spec.n_contexts} discriminating letters, "
            f"got {len(spec.sigma)}"
        )
    if len(set(spec.sigma)) != len(spec.sigma):
        raise GenerationError("discriminating letters must be injective across contexts")
    for letter in spec.sigma:
        if len(letter) != 1 or letter not in string.ascii_lowercase:
            raise GenerationError(f"bad discriminating letter {letter!r}")
    if len(spec.tint_levels) != spec.n_contexts:
        raise GenerationError("need one tint level per context")
    if len(set(spec.tint_levels)) != len(spec.tint_levels):
        raise GenerationError("tint levels must be distinct across contexts")
    for t in spec.tint_levels:
        if not (0 <= t <= 220):
            raise GenerationError(f"tint level {t} outside [0, 220]")
    patterns = [s.pattern for s in spec.stems + spec.oov_stems]
    if len(set(patterns)) != len(patterns):
        raise GenerationError("stem visible patterns must be unique across both pools")
    for stem in spec.stems + spec.oov_stems:
        if len(stem.pattern) != spec.word_len:
            raise GenerationError(
                f"stem {stem.pattern!r} length {len(stem.pattern)} != word length {spec.word_len}"
            )


def build_context_spec(
    n_contexts: int,
    n_stems: int,
    n_oov_stems: int,
    seed: int,
    word_len: int = 4,
) -> ContextSpec:
    """Sample a valid context spec: injective letters, unique stems, tints."""
    if n_contexts < 1 or n_contexts > 26:
        raise GenerationError(f"contexts must be in [1, 26], got {n_contexts}")
    if word_len < 2:
        raise GenerationError(f"word length must be >= 2, got {word_len}")
    rng = np.random.default_rng([seed, 0xC0])
    letters = list(string.ascii_lowercase)
    sigma = tuple(rng.choice(letters, size=n_contexts, replace=False).tolist())

    seen: set[str] = set()

    def sample_stems(count: int) -> tuple[Stem, ...]:
        stems = []
        for _ in range(count):
            for _attempt in range(10_000):
                chars = rng.choice(letters, size=word_len).tolist()
                slot = int(rng.integers(word_len))
                chars[slot] = SLOT_CHAR
                pattern = "".join(chars)
                if pattern in seen:
                    continue
                seen.add(pattern)
                stems.append(Stem(pattern))
                break
            else:
                raise GenerationError(
                    f"could not sample {count} unique stems of length {word_len}"
                )
        return tuple(stems)

    stems = sample_stems(n_stems)
    oov_stems = sample_stems(n_oov_stems)
    if n_contexts == 1:
        tints = (0,)
    else:
        step = 200 // (n_contexts - 1)
        tints = tuple(i * step for i in range(n_contexts))
    return ContextSpec(
        n_contexts=n_contexts,
        sigma=sigma,
        stems=stems,
        oov_stems=oov_stems,
        tint_levels=tints,
        word_len=word_len,
    )
