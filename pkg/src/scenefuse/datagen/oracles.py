"""Bayes-optimal accuracy ceilings for the synthetic benchmark.

The crop-only oracle sees a crop's pixels and nothing else.  It enumerates
every stem whose visible glyphs match and every context's completion of
those stems, weighing candidates by the uniform generative priors; its
accuracy on a crop is the maximum posterior mass of any single word.  The
context-aware oracle additionally knows the scene context, under which each
blanked slot resolves uniquely.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

from scenefuse.datagen.generate import SceneDataset, SceneSample, WordPlacement
from scenefuse.errors import ConfigurationError, GenerationError


@dataclass
class OracleReport:
    split: str
    n_crops: int
    n_corrupted: int
    corrupted_bound: float
    uncorrupted_bound: float

    @property
    def overall_bound(self) -> float:
        if self.n_crops == 0:
            return 0.0
        n_clean = self.n_crops - self.n_corrupted
        return (
            self.corrupted_bound * self.n_corrupted
            + self.uncorrupted_bound * n_clean
        ) / self.n_crops


def _matching_stems(dataset: SceneDataset, word: WordPlacement):
    """Stems (from both pools) whose visible pattern matches the crop."""
    spec = dataset.spec
    masked = list(word.text)
    if word.corrupt_slot is not None:
        masked[word.corrupt_slot] = "_"
    visible = "".join(masked)
    matches = []
    for stem in spec.stems + spec.oov_stems:
        if word.corrupt_slot is None:
            if stem.matches(word.text):
                matches.append(stem)
        elif stem.pattern == visible:
            matches.append(stem)
    return matches


def _crop_posterior_max(dataset: SceneDataset, word: WordPlacement) -> float:
    """Max posterior word probability for one crop, by enumeration."""
    spec = dataset.spec
    if word.corrupt_slot is None:
        return 1.0  # fully visible glyphs identify the word
    stems = _matching_stems(dataset, word)
    if len(stems) != 1:
        raise GenerationError(
            f"crop {word.text!r} (slot {word.corrupt_slot}) matches {len(stems)} stems; "
            "the context spec violates visible-pattern uniqueness"
        )
    stem = stems[0]
    posterior: dict[str, float] = defaultdict(float)
    for letter in spec.sigma:  # contexts are uniform a priori
        posterior[stem.fill(letter)] += 1.0 / spec.n_contexts
    return max(posterior.values())


def _iter_crops(dataset: SceneDataset, split: str) -> list[tuple[SceneSample, WordPlacement]]:
    samples = dataset.split(split)
    if not samples:
        raise ConfigurationError(f"split {split!r} is empty")
    return [(s, w) for s in samples for w in s.words]


def crop_only_ceiling(dataset: SceneDataset, split: str = "eval") -> OracleReport:
    """Best possible word accuracy for any recognizer that sees only crops."""
    crops = _iter_crops(dataset, split)
    corrupted = [(s, w) for s, w in crops if w.corrupted]
    clean_total = len(crops) - len(corrupted)
    corrupted_mass = sum(_crop_posterior_max(dataset, w) for _, w in corrupted)
    clean_mass = sum(_crop_posterior_max(dataset, w) for s, w in crops if not w.corrupted)
    return OracleReport(
        split=split,
        n_crops=len(crops),
        n_corrupted=len(corrupted),
        corrupted_bound=corrupted_mass / len(corrupted) if corrupted else 0.0,
        uncorrupted_bound=clean_mass / clean_total if clean_total else 0.0,
    )


def context_aware_ceiling(dataset: SceneDataset, split: str = "eval") -> OracleReport:
    """Best possible accuracy when the scene context is known exactly."""
    crops = _iter_crops(dataset, split)
    n_corrupted = 0
    for sample, word in crops:
        if not word.corrupted:
            continue
        n_corrupted += 1
        stems = _matching_stems(dataset, word)
        if len(stems) != 1:
            raise GenerationError(
                f"corrupted crop {word.text!r} matches {len(stems)} stems"
            )
        completion = stems[0].fill(dataset.spec.sigma[sample.context])
        if completion != word.text:
            raise GenerationError(
                f"scene {sample.scene_id}: context completion {completion!r} "
                f"disagrees with ground truth {word.text!r}"
            )
    return OracleReport(
        split=split,
        n_crops=len(crops),
        n_corrupted=n_corrupted,
        corrupted_bound=1.0,
        uncorrupted_bound=1.0,
    )
