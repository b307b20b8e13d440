"""Baseline pretraining and fused fine-tuning loops.

Both loops batch whole scenes (all words of a scene travel together), use
Adam, track per-epoch validation word accuracy, and keep the best epoch's
parameters.  Fine-tuning starts from a pretrained baseline, keeps the scene
encoder frozen, and reads pooled scene embeddings through the on-disk cache
when one is given: the first epoch encodes and fills the cache, later
epochs hit it.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

import torch
from torch import nn

from scenefuse.datagen.generate import SceneDataset, SceneSample
from scenefuse.diffcore.optim import make_adam
from scenefuse.diffcore.params import ModelState
from scenefuse.encoder.cache import EmbeddingCache
from scenefuse.encoder.fingerprint import encoder_fingerprint
from scenefuse.encoder.pooling import PoolKernel, pool_tokens
from scenefuse.encoder.vit import SceneEncoder
from scenefuse.errors import ConfigurationError, InvariantError, TrainingDivergenceError
from scenefuse.fusion.blocks import FusionBlock
from scenefuse.fusion.config import FusionConfig
from scenefuse.recognizers.fused import FusedRecognizer, build_recognizer
from scenefuse.recognizers.vocab import N_LOGITS, PAD_ID, decode_batch
from scenefuse.trainer.data import CropBatches, scene_crop_batches, subsample_scenes
from scenefuse.trainer.records import EpochRecord, RunRecord


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_scenes: int = 8
    lr: float = 1e-3
    seed: int = 0
    data_fraction: float = 1.0
    target_len: int = 9  # longest word + EOS

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_scenes < 1:
            raise ConfigurationError(f"batch_scenes must be >= 1, got {self.batch_scenes}")


def _epoch_order(n: int, seed: int, epoch: int) -> list[int]:
    g = torch.Generator().manual_seed(seed * 1_000_003 + epoch)
    return torch.randperm(n, generator=g).tolist()


def _loss_for(model_logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    steps = model_logits.shape[1]
    return nn.functional.cross_entropy(
        model_logits.reshape(-1, N_LOGITS),
        targets[:, :steps].reshape(-1),
        ignore_index=PAD_ID,
    )


def _word_accuracy(
    forward, batches: CropBatches, chunk: int = 16
) -> tuple[float, float]:
    """Greedy-decode word accuracy over scenes: (overall, corrupted-only)."""
    total = correct = 0
    corr_total = corr_correct = 0
    with torch.no_grad():
        for start in range(0, len(batches), chunk):
            indices = list(range(start, min(start + chunk, len(batches))))
            crops, _, corrupted = batches.gather(indices)
            logits = forward(indices, crops)
            texts = [
                w.text for i in indices for w in batches.scenes[i].words
            ]
            for transcript, text, is_corr in zip(decode_batch(logits), texts, corrupted):
                total += 1
                hit = transcript.text == text
                correct += hit
                if bool(is_corr):
                    corr_total += 1
                    corr_correct += hit
    overall = correct / total if total else 0.0
    corrupted_acc = corr_correct / corr_total if corr_total else 0.0
    return overall, corrupted_acc


def pretrain_recognizer(
    dataset: SceneDataset,
    arch: str,
    config: TrainConfig,
    record_path: str | None = None,
) -> tuple[nn.Module, RunRecord, ModelState]:
    """Train a crop-only recognizer; returns it loaded with the best epoch.

    Best is by overall validation word accuracy.  The run record carries
    per-epoch loss, accuracies, and iteration timings.
    """
    train_samples = subsample_scenes(dataset.split("train"), config.data_fraction,
                                     config.seed)
    val_samples = dataset.split("val")
    if not val_samples:
        raise ConfigurationError("pretraining needs a non-empty val split")
    train = scene_crop_batches(train_samples, config.target_len)
    val = scene_crop_batches(val_samples, config.target_len)

    torch.manual_seed(config.seed)
    model = build_recognizer(arch)
    optimizer = make_adam(model.parameters(), config.lr)
    run = RunRecord(record_path)

    def val_forward(indices, crops):
        return model(crops)

    best_state: ModelState | None = None
    best_acc = -1.0
    last_stable = ModelState.from_module(model)
    teacher_forced = model.arch == "recurrent"
    for epoch in range(1, config.epochs + 1):
        epoch_start = time.perf_counter()
        iteration_seconds = []
        losses = []
        order = _epoch_order(len(train), config.seed, epoch)
        for start in range(0, len(order), config.batch_scenes):
            indices = order[start : start + config.batch_scenes]
            crops, targets, _ = train.gather(indices)
            t0 = time.perf_counter()
            logits = model(crops, targets=targets) if teacher_forced else model(crops)
            loss = _loss_for(logits, targets)
            if not torch.isfinite(loss):
                raise TrainingDivergenceError(
                    f"non-finite pretraining loss in epoch {epoch}",
                    last_stable=last_stable,
                    epoch=epoch,
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            iteration_seconds.append(time.perf_counter() - t0)
            losses.append(float(loss.detach()))
        last_stable = ModelState.from_module(model)
        val_acc, val_corr = _word_accuracy(val_forward, val)
        run.append(
            EpochRecord(
                epoch=epoch,
                loss=sum(losses) / len(losses),
                val_accuracy=val_acc,
                val_corrupted_accuracy=val_corr,
                tanh_alpha=0.0,
                seconds_per_iteration=statistics.median(iteration_seconds),
                cache_hit_rate=0.0,
                cache_misses=0,
                wall_seconds=time.perf_counter() - epoch_start,
            )
        )
        if val_acc > best_acc:
            best_acc = val_acc
            best_state = last_stable
    best_state.load_into(model)
    return model, run, best_state


class _GlobalTokens:
    """Pooled scene embeddings, optionally through the embedding cache."""

    def __init__(self, encoder: SceneEncoder, kernel: PoolKernel,
                 cache: EmbeddingCache | None):
        self.encoder = encoder
        self.kernel = kernel
        self.cache = cache

    def for_scenes(self, scenes: list[SceneSample]) -> torch.Tensor:
        rows: list[torch.Tensor | None] = []
        missing: list[int] = []
        for i, scene in enumerate(scenes):
            cached = self.cache.get(scene.scene_id) if self.cache is not None else None
            rows.append(cached)
            if cached is None:
                missing.append(i)
        if missing:
            images = torch.stack(
                [torch.from_numpy(scenes[i].pixels).unsqueeze(0) for i in missing]
            ).to(torch.float32)
            tokens = self.encoder.encode_batch(images)
            pooled = pool_tokens(tokens, self.encoder.grid, self.kernel)
            for row_idx, i in enumerate(missing):
                rows[i] = pooled[row_idx]
                if self.cache is not None:
                    self.cache.put(scenes[i].scene_id, pooled[row_idx])
        return torch.stack(rows)


def finetune_fused(
    dataset: SceneDataset,
    encoder: SceneEncoder,
    baseline_state: ModelState,
    arch: str,
    fusion_config: FusionConfig,
    point: str,
    kernel: PoolKernel,
    config: TrainConfig,
    cache_path: str | None = None,
    record_path: str | None = None,
) -> tuple[FusedRecognizer, RunRecord, ModelState]:
    """Fine-tune a pretrained recognizer with a fresh fusion block attached.

    The scene encoder stays frozen (verified by fingerprint before and
    after).  Best epoch is by corrupted-word validation accuracy, which is
    where scene context can help.  Record 0 is written before any update and
    has tanh(alpha) exactly 0.
    """
    if not encoder.is_frozen:
        raise InvariantError("the scene encoder must be frozen before fine-tuning")
    fingerprint = encoder_fingerprint(encoder)

    train_samples = subsample_scenes(dataset.split("train"), config.data_fraction,
                                     config.seed)
    val_samples = dataset.split("val")
    if not val_samples:
        raise ConfigurationError("fine-tuning needs a non-empty val split")
    train = scene_crop_batches(train_samples, config.target_len)
    val = scene_crop_batches(val_samples, config.target_len)

    torch.manual_seed(config.seed)
    model = build_recognizer(arch)
    baseline_state.load_into(model)
    fused = FusedRecognizer(model, FusionBlock(fusion_config), point, kernel)
    optimizer = make_adam(fused.parameters(), config.lr)

    cache = (
        EmbeddingCache(cache_path, encoder.config.dim, kernel, fingerprint)
        if cache_path is not None
        else None
    )
    globals_source = _GlobalTokens(encoder, kernel, cache)

    # validation embeddings are computed once, outside the cache bookkeeping
    val_globals = _GlobalTokens(encoder, kernel, None).for_scenes(val.scenes)

    def val_forward(indices, crops):
        counts = torch.tensor([val.crops[i].shape[0] for i in indices])
        per_crop = torch.repeat_interleave(val_globals[indices], counts, dim=0)
        return fused(crops, per_crop)

    run = RunRecord(record_path)
    val_acc, val_corr = _word_accuracy(val_forward, val)
    run.append(
        EpochRecord(
            epoch=0,
            loss=None,
            val_accuracy=val_acc,
            val_corrupted_accuracy=val_corr,
            tanh_alpha=fused.fusion.tanh_alpha,
            seconds_per_iteration=0.0,
            cache_hit_rate=0.0,
            cache_misses=0,
            wall_seconds=0.0,
        )
    )

    best_state = ModelState.from_module(fused)
    best_acc = val_corr
    last_stable = ModelState.from_module(fused)
    teacher_forced = model.arch == "recurrent"
    for epoch in range(1, config.epochs + 1):
        epoch_start = time.perf_counter()
        if cache is not None:
            cache.reset_stats()
        iteration_seconds = []
        losses = []
        order = _epoch_order(len(train), config.seed, epoch)
        for start in range(0, len(order), config.batch_scenes):
            indices = order[start : start + config.batch_scenes]
            crops, targets, _ = train.gather(indices)
            t0 = time.perf_counter()
            scene_global = globals_source.for_scenes([train.scenes[i] for i in indices])
            counts = torch.tensor([train.crops[i].shape[0] for i in indices])
            per_crop = torch.repeat_interleave(scene_global, counts, dim=0)
            logits = fused(crops, per_crop, targets=targets if teacher_forced else None)
            loss = _loss_for(logits, targets)
            if not torch.isfinite(loss):
                raise TrainingDivergenceError(
                    f"non-finite fine-tuning loss in epoch {epoch}",
                    last_stable=last_stable,
                    epoch=epoch,
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            iteration_seconds.append(time.perf_counter() - t0)
            losses.append(float(loss.detach()))
        last_stable = ModelState.from_module(fused)
        hit_rate = cache.hit_rate if cache is not None else 0.0
        misses = cache.misses if cache is not None else 0
        if cache is not None:
            cache.save()
        val_acc, val_corr = _word_accuracy(val_forward, val)
        run.append(
            EpochRecord(
                epoch=epoch,
                loss=sum(losses) / len(losses),
                val_accuracy=val_acc,
                val_corrupted_accuracy=val_corr,
                tanh_alpha=fused.fusion.tanh_alpha,
                seconds_per_iteration=statistics.median(iteration_seconds),
                cache_hit_rate=hit_rate,
                cache_misses=misses,
                wall_seconds=time.perf_counter() - epoch_start,
            )
        )
        if val_corr > best_acc:
            best_acc = val_corr
            best_state = last_stable
    if encoder_fingerprint(encoder) != fingerprint:
        raise InvariantError("frozen encoder parameters changed during fine-tuning")
    best_state.load_into(fused)
    return fused, run, best_state
