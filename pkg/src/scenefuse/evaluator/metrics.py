"""Word-accuracy aggregation over splits and slices.

An evaluation runs greedy decoding over every crop of the requested splits
and aggregates exact-match word accuracy overall and sliced by corruption
and vocabulary.  The cross-split summary reports both the unweighted mean
of split accuracies and the weighted accuracy, which is exactly
``total correct / total words``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import torch

from scenefuse.datagen.generate import SceneDataset
from scenefuse.encoder.pooling import pool_tokens
from scenefuse.encoder.vit import SceneEncoder
from scenefuse.errors import ConfigurationError
from scenefuse.recognizers.fused import FusedRecognizer
from scenefuse.recognizers.vocab import decode_batch
from scenefuse.trainer.data import scene_crop_batches


@dataclass(frozen=True)
class CropOutcome:
    """One crop's evaluation outcome."""

    split: str
    vocab: str      # "iv" or "oov"
    corrupted: bool
    correct: bool


@dataclass
class GroupStats:
    words: int = 0
    correct: int = 0

    def add(self, hit: bool) -> None:
        self.words += 1
        self.correct += int(hit)

    @property
    def accuracy(self) -> float:
        return self.correct / self.words if self.words else 0.0

    def to_dict(self) -> dict:
        return {"words": self.words, "correct": self.correct, "accuracy": self.accuracy}


@dataclass
class SplitReport:
    split: str
    error: str | None = None
    overall: GroupStats = field(default_factory=GroupStats)
    corrupted: GroupStats = field(default_factory=GroupStats)
    uncorrupted: GroupStats = field(default_factory=GroupStats)
    iv: GroupStats = field(default_factory=GroupStats)
    oov: GroupStats = field(default_factory=GroupStats)

    def to_dict(self) -> dict:
        if self.error is not None:
            return {"split": self.split, "error": self.error}
        return {
            "split": self.split,
            "overall": self.overall.to_dict(),
            "corrupted": self.corrupted.to_dict(),
            "uncorrupted": self.uncorrupted.to_dict(),
            "iv": self.iv.to_dict(),
            "oov": self.oov.to_dict(),
        }


@dataclass
class EvalReport:
    splits: dict[str, SplitReport]

    @property
    def scored_splits(self) -> list[SplitReport]:
        return [r for r in self.splits.values() if r.error is None]

    @property
    def average_accuracy(self) -> float:
        """Unweighted mean of split accuracies."""
        scored = self.scored_splits
        if not scored:
            return 0.0
        return sum(r.overall.accuracy for r in scored) / len(scored)

    @property
    def weighted_accuracy(self) -> float:
        """Total correct over total words, exactly."""
        words = sum(r.overall.words for r in self.scored_splits)
        correct = sum(r.overall.correct for r in self.scored_splits)
        return correct / words if words else 0.0

    def slice_accuracy(self, split: str, group: str = "overall") -> float:
        report = self.splits[split]
        if report.error is not None:
            raise ConfigurationError(f"split {split!r} was not scored: {report.error}")
        return getattr(report, group).accuracy

    def to_dict(self) -> dict:
        return {
            "splits": {name: r.to_dict() for name, r in self.splits.items()},
            "average_accuracy": self.average_accuracy,
            "weighted_accuracy": self.weighted_accuracy,
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    def to_tsv(self) -> str:
        """Delimited summary: one row per split and slice."""
        lines = ["split\tslice\twords\tcorrect\taccuracy"]
        for name, report in self.splits.items():
            if report.error is not None:
                lines.append(f"{name}\terror\t0\t0\t{report.error}")
                continue
            for slice_name in ("overall", "corrupted", "uncorrupted", "iv", "oov"):
                stats: GroupStats = getattr(report, slice_name)
                lines.append(
                    f"{name}\t{slice_name}\t{stats.words}\t{stats.correct}"
                    f"\t{stats.accuracy:.6f}"
                )
        return "\n".join(lines) + "\n"


def aggregate_outcomes(outcomes: list[CropOutcome],
                       expected_splits: list[str] | None = None) -> EvalReport:
    """Build an EvalReport from raw crop outcomes.

    Splits listed in ``expected_splits`` but absent from the outcomes get an
    explicit error entry instead of a silent zero.
    """
    splits: dict[str, SplitReport] = {}
    for name in expected_splits or []:
        splits[name] = SplitReport(split=name, error="split is empty")
    for outcome in outcomes:
        report = splits.get(outcome.split)
        if report is None or report.error is not None:
            report = SplitReport(split=outcome.split)
            splits[outcome.split] = report
        report.overall.add(outcome.correct)
        (report.corrupted if outcome.corrupted else report.uncorrupted).add(outcome.correct)
        (report.iv if outcome.vocab == "iv" else report.oov).add(outcome.correct)
    return EvalReport(splits=splits)


def evaluate(
    model: torch.nn.Module,
    dataset: SceneDataset,
    splits: tuple[str, ...] = ("eval",),
    encoder: SceneEncoder | None = None,
    chunk_scenes: int = 16,
    target_len: int = 9,
) -> EvalReport:
    """Greedy-decode word accuracy of a recognizer or fused bundle."""
    fused = isinstance(model, FusedRecognizer)
    if fused and encoder is None:
        raise ConfigurationError("evaluating a fused recognizer needs the scene encoder")
    outcomes: list[CropOutcome] = []
    model.eval()
    with torch.no_grad():
        for split in splits:
            samples = dataset.split(split)
            if not samples:
                continue
            batches = scene_crop_batches(samples, target_len)
            for start in range(0, len(batches), chunk_scenes):
                indices = list(range(start, min(start + chunk_scenes, len(batches))))
                crops, _, _ = batches.gather(indices)
                if fused:
                    images = torch.stack(
                        [
                            torch.from_numpy(batches.scenes[i].pixels).unsqueeze(0)
                            for i in indices
                        ]
                    ).to(torch.float32)
                    tokens = encoder.encode_batch(images)
                    pooled = pool_tokens(tokens, encoder.grid, model.kernel)
                    counts = torch.tensor(
                        [batches.crops[i].shape[0] for i in indices]
                    )
                    logits = model(crops, torch.repeat_interleave(pooled, counts, dim=0))
                else:
                    logits = model(crops)
                transcripts = decode_batch(logits)
                flat_words = [
                    (batches.scenes[i], w) for i in indices for w in batches.scenes[i].words
                ]
                for transcript, (scene, word) in zip(transcripts, flat_words):
                    outcomes.append(
                        CropOutcome(
                            split=split,
                            vocab=scene.vocab,
                            corrupted=word.corrupted,
                            correct=transcript.text == word.text,
                        )
                    )
    model.train()
    return aggregate_outcomes(outcomes, expected_splits=list(splits))


def report_deltas(base: EvalReport, other: EvalReport,
                  split: str = "eval") -> dict[str, float]:
    """Accuracy deltas (other minus base) per slice of one split."""
    deltas = {}
    for slice_name in ("overall", "corrupted", "uncorrupted", "iv", "oov"):
        b: GroupStats = getattr(base.splits[split], slice_name)
        o: GroupStats = getattr(other.splits[split], slice_name)
        deltas[slice_name] = o.accuracy - b.accuracy
    return deltas
