"""Character vocabulary and greedy transcript decoding.

Ids 0-25 are the letters a-z.  Three special ids follow: EOS (26) ends a
transcript, PAD (27) fills targets past the EOS, and BLANKOUT (28) is an
input-side-only symbol standing for an absent glyph (it seeds the
autoregressive decoder's first step).  Recognizer logits cover the 27
emittable classes: the letters plus EOS.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from scenefuse.errors import ConfigurationError

LETTERS = "abcdefghijklmnopqrstuvwxyz"
EOS_ID = 26
PAD_ID = 27
BLANKOUT_ID = 28
N_LOGITS = 27  # letters + EOS
VOCAB_SIZE = 29


def encode_word(word: str) -> list[int]:
    ids = []
    for char in word:
        idx = LETTERS.find(char)
        if idx < 0:
            raise ConfigurationError(f"character {char!r} outside the vocabulary")
        ids.append(idx)
    return ids


def char_for(idx: int) -> str:
    if 0 <= idx < len(LETTERS):
        return LETTERS[idx]
    raise ConfigurationError(f"id {idx} is not a letter")


def make_targets(words: list[str], length: int) -> torch.Tensor:
    """Teacher-forcing targets ``[B, length]``: letters, EOS, then PAD."""
    batch = []
    for word in words:
        ids = encode_word(word)
        if len(ids) + 1 > length:
            raise ConfigurationError(
                f"word {word!r} (+EOS) does not fit target length {length}"
            )
        row = ids + [EOS_ID] + [PAD_ID] * (length - len(ids) - 1)
        batch.append(row)
    return torch.tensor(batch, dtype=torch.long)


@dataclass(frozen=True)
class Transcript:
    """A decoded word: the characters before the first EOS."""

    text: str

    def __len__(self) -> int:
        return len(self.text)


def argmax_lowest(row: torch.Tensor) -> int:
    """Index of the maximum value; ties resolve to the lowest index."""
    return int(torch.nonzero(row == row.max(), as_tuple=False)[0])


def argmax_lowest_batch(logits: torch.Tensor) -> torch.Tensor:
    """Row-wise argmax over the last axis with ties resolving to the lowest index."""
    classes = logits.shape[-1]
    is_max = logits == logits.max(dim=-1, keepdim=True).values
    # weight earlier positions higher so the first maximal index wins
    weights = torch.arange(classes, 0, -1, device=logits.device)
    return (is_max.long() * weights).argmax(dim=-1)


def decode_greedy(logits: torch.Tensor) -> Transcript:
    """Greedy decode ``[steps, 27]`` logits; EOS terminates, the rest is ignored."""
    if logits.dim() != 2 or logits.shape[1] != N_LOGITS:
        raise ConfigurationError(
            f"expected [steps, {N_LOGITS}] logits, got shape {tuple(logits.shape)}"
        )
    chars = []
    for row in logits:
        idx = argmax_lowest(row)
        if idx == EOS_ID:
            break
        chars.append(LETTERS[idx])
    return Transcript("".join(chars))


def decode_batch(logits: torch.Tensor) -> list[Transcript]:
    """Greedy decode ``[B, steps, 27]`` logits row by row."""
    if logits.dim() != 3:
        raise ConfigurationError(f"expected [B, steps, classes], got {tuple(logits.shape)}")
    return [decode_greedy(sample) for sample in logits]
