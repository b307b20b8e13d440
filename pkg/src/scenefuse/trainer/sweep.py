"""Low-data sweep: train baseline and fused models across data fractions."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from scenefuse.datagen.generate import SceneDataset
from scenefuse.encoder.pooling import PoolKernel
from scenefuse.encoder.vit import SceneEncoder
from scenefuse.errors import ConfigurationError
from scenefuse.fusion.config import FusionConfig
from scenefuse.recognizers.integration import VISION
from scenefuse.trainer.train import TrainConfig, finetune_fused, pretrain_recognizer


@dataclass(frozen=True)
class SweepRow:
    fraction: float
    seed: int
    baseline_overall: float
    baseline_corrupted: float
    fused_overall: float
    fused_corrupted: float

    @property
    def gap(self) -> float:
        """Context benefit at this fraction: fused minus baseline, corrupted slice."""
        return self.fused_corrupted - self.baseline_corrupted

    def to_dict(self) -> dict:
        return {
            "fraction": self.fraction,
            "seed": self.seed,
            "baseline_overall": self.baseline_overall,
            "baseline_corrupted": self.baseline_corrupted,
            "fused_overall": self.fused_overall,
            "fused_corrupted": self.fused_corrupted,
            "gap": self.gap,
        }


def lowdata_sweep(
    dataset: SceneDataset,
    encoder: SceneEncoder,
    fractions: list[float],
    seeds: list[int],
    fusion_config: FusionConfig,
    arch: str = "recurrent",
    point: str = VISION,
    kernel: PoolKernel | None = None,
    base_config: TrainConfig | None = None,
    work_dir: Path | None = None,
    eval_split: str = "eval",
) -> tuple[list[SweepRow], int]:
    """Train a baseline/fused pair per (fraction, seed) cell and score both.

    Fractions subsample the training scenes; the validation and eval splits
    stay whole so rows are comparable.  Returns the rows (sorted by fraction
    then seed) and the number of training runs executed, two per cell.
    """
    # Deferred: the evaluator package imports trainer utilities at module load.
    from scenefuse.evaluator.metrics import evaluate

    if not fractions:
        raise ConfigurationError("sweep needs at least one data fraction")
    if not seeds:
        raise ConfigurationError("sweep needs at least one seed")
    kernel = kernel if kernel is not None else PoolKernel.infinite()
    base_config = base_config or TrainConfig()
    rows: list[SweepRow] = []
    n_runs = 0
    for fraction in sorted(fractions):
        for seed in seeds:
            config = dataclasses.replace(
                base_config, data_fraction=fraction, seed=seed
            )
            cell = None
            if work_dir is not None:
                cell = Path(work_dir) / f"frac{fraction:g}_seed{seed}"
                cell.mkdir(parents=True, exist_ok=True)

            baseline, _, base_best = pretrain_recognizer(
                dataset,
                arch,
                config,
                record_path=(cell / "baseline.jsonl") if cell else None,
            )
            n_runs += 1
            base_best.load_into(baseline)
            base_report = evaluate(baseline, dataset, splits=(eval_split,))

            fused, _, fused_best = finetune_fused(
                dataset,
                encoder,
                base_best,
                arch,
                fusion_config,
                point,
                kernel,
                config,
                cache_path=(cell / "embeddings.cache") if cell else None,
                record_path=(cell / "finetune.jsonl") if cell else None,
            )
            n_runs += 1
            fused_best.load_into(fused)
            fused_report = evaluate(fused, dataset, splits=(eval_split,), encoder=encoder)

            rows.append(
                SweepRow(
                    fraction=fraction,
                    seed=seed,
                    baseline_overall=base_report.slice_accuracy(eval_split, "overall"),
                    baseline_corrupted=base_report.slice_accuracy(eval_split, "corrupted"),
                    fused_overall=fused_report.slice_accuracy(eval_split, "overall"),
                    fused_corrupted=fused_report.slice_accuracy(eval_split, "corrupted"),
                )
            )
    return rows, n_runs


def mean_gap_by_fraction(rows: list[SweepRow]) -> dict[float, float]:
    """Average the context-benefit gap over seeds, per fraction."""
    by_fraction: dict[float, list[float]] = {}
    for row in rows:
        by_fraction.setdefault(row.fraction, []).append(row.gap)
    return {f: sum(g) / len(g) for f, g in sorted(by_fraction.items())}
