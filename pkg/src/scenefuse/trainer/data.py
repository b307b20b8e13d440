"""Batching and subsampling helpers shared by the training loops."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from scenefuse.datagen.generate import SceneSample, crop_pixels
from scenefuse.errors import ConfigurationError
from scenefuse.recognizers.vocab import make_targets


def subsample_scenes(
    samples: list[SceneSample], fraction: float, seed: int
) -> list[SceneSample]:
    """Deterministic fraction of a scene list.

    Uses a seeded permutation prefix, so for a fixed seed smaller fractions
    are nested inside larger ones.  Fractions outside (0, 1] are errors, as
    is a fraction yielding less than one full scene (= one training batch).
    """
    if not 0.0 < fraction <= 1.0:
        raise ConfigurationError(f"data fraction must be in (0, 1], got {fraction}")
    count = math.ceil(fraction * len(samples))
    if count < 1:
        raise ConfigurationError(
            f"data fraction {fraction} of {len(samples)} scenes yields less than one batch"
        )
    order = np.random.default_rng([seed, 0x5AB5]).permutation(len(samples))
    return [samples[i] for i in order[:count]]


@dataclass
class CropBatches:
    """Per-scene crop tensors, targets, and flags, precomputed once."""

    scenes: list[SceneSample]
    crops: list[torch.Tensor]       # [words, 1, H, W] float32 per scene
    targets: list[torch.Tensor]     # [words, target_len] long per scene
    corrupted: list[torch.Tensor]   # [words] bool per scene

    def __len__(self) -> int:
        return len(self.scenes)

    def gather(self, indices: list[int]):
        """Concatenate the listed scenes into flat crop/target/flag tensors."""
        crops = torch.cat([self.crops[i] for i in indices])
        targets = torch.cat([self.targets[i] for i in indices])
        corrupted = torch.cat([self.corrupted[i] for i in indices])
        return crops, targets, corrupted


def scene_crop_batches(samples: list[SceneSample], target_len: int) -> CropBatches:
    if not samples:
        raise ConfigurationError("no scenes to batch")
    crops, targets, corrupted = [], [], []
    for sample in samples:
        tensors = [
            torch.from_numpy(np.ascontiguousarray(crop_pixels(sample.pixels, w.box)))
            for w in sample.words
        ]
        crops.append(torch.stack(tensors).unsqueeze(1).to(torch.float32))
        targets.append(make_targets([w.text for w in sample.words], target_len))
        corrupted.append(torch.tensor([w.corrupted for w in sample.words]))
    return CropBatches(list(samples), crops, targets, corrupted)
