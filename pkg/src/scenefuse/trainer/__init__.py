"""Training loops: baseline pretraining, fused fine-tuning, low-data sweeps."""

from scenefuse.trainer.records import EpochRecord, RunRecord
from scenefuse.trainer.data import CropBatches, scene_crop_batches, subsample_scenes
from scenefuse.trainer.train import (
    TrainConfig,
    finetune_fused,
    pretrain_recognizer,
)
from scenefuse.trainer.sweep import SweepRow, lowdata_sweep

__all__ = [
    "EpochRecord",
    "RunRecord",
    "CropBatches",
    "scene_crop_batches",
    "subsample_scenes",
    "TrainConfig",
    "pretrain_recognizer",
    "finetune_fused",
    "SweepRow",
    "lowdata_sweep",
]
