"""Training loops: determinism, cache protocol, freeze integrity, divergence."""

import pytest
import torch

import scenefuse.trainer.train as train_mod
from scenefuse.datagen.contexts import build_context_spec
from scenefuse.datagen.generate import SplitCounts, generate_dataset
from scenefuse.datagen.glyphs import GlyphTable
from scenefuse.diffcore.params import ModelState
from scenefuse.encoder.fingerprint import encoder_fingerprint
from scenefuse.encoder.pooling import PoolKernel
from scenefuse.encoder.vit import EncoderConfig, SceneEncoder
from scenefuse.errors import (
    ConfigurationError,
    InvariantError,
    TrainingDivergenceError,
)
from scenefuse.fusion.config import FusionConfig
from scenefuse.recognizers.integration import CONTEXTUAL, DECODER, VISION
from scenefuse.trainer.data import scene_crop_batches, subsample_scenes
from scenefuse.trainer.records import RunRecord
from scenefuse.trainer.train import TrainConfig, finetune_fused, pretrain_recognizer


@pytest.fixture(scope="module")
def dataset():
    spec = build_context_spec(n_contexts=2, n_stems=10, n_oov_stems=0, seed=31)
    return generate_dataset(
        spec, GlyphTable.from_seed(31), SplitCounts(train=6, val=3, eval_iv=3),
        seed=31,
    )


@pytest.fixture(scope="module")
def frozen_encoder():
    torch.manual_seed(0)
    return SceneEncoder(EncoderConfig(depth=1, dim=32, heads=2)).freeze()


def tiny_config(**overrides):
    base = dict(epochs=2, batch_scenes=3, lr=1e-3, seed=0)
    base.update(overrides)
    return TrainConfig(**base)


GATED32 = FusionConfig.gated(d_local=48, d_global=32)


# -------------------------------------------------------------- data helpers


def test_subsample_is_a_seeded_nested_prefix(dataset):
    scenes = dataset.split("train")
    full = subsample_scenes(scenes, 1.0, seed=4)
    assert {s.scene_id for s in full} == {s.scene_id for s in scenes}
    half = subsample_scenes(scenes, 0.5, seed=4)
    assert len(half) == 3  # ceil(0.5 * 6)
    third = subsample_scenes(scenes, 1 / 3, seed=4)
    assert len(third) == 2
    half_ids = [s.scene_id for s in half]
    assert [s.scene_id for s in third] == half_ids[:2]  # nesting
    assert subsample_scenes(scenes, 0.5, seed=4)[0].scene_id == half_ids[0]
    assert [s.scene_id for s in subsample_scenes(scenes, 0.5, seed=5)] != half_ids
    for bad in (0.0, -0.5, 1.5):
        with pytest.raises(ConfigurationError):
            subsample_scenes(scenes, bad, seed=0)


def test_scene_crop_batches_shapes(dataset):
    batches = scene_crop_batches(dataset.split("val"), target_len=9)
    assert len(batches) == 3
    assert batches.crops[0].shape == (9, 1, 8, 32)
    assert batches.targets[0].shape == (9, 9)
    assert batches.corrupted[0].sum() == 1  # one blanked word per scene
    crops, targets, corrupted = batches.gather([0, 2])
    assert crops.shape == (18, 1, 8, 32)
    assert targets.shape == (18, 9)
    assert corrupted.shape == (18,)
    with pytest.raises(ConfigurationError):
        scene_crop_batches([], target_len=9)


# ----------------------------------------------------------------- pretraining


def test_pretraining_is_deterministic(dataset):
    _, run_a, best_a = pretrain_recognizer(dataset, "recurrent", tiny_config())
    _, run_b, best_b = pretrain_recognizer(dataset, "recurrent", tiny_config())
    assert best_a.value_bytes() == best_b.value_bytes()
    assert [r.loss for r in run_a] == [r.loss for r in run_b]
    _, _, best_c = pretrain_recognizer(dataset, "recurrent", tiny_config(seed=1))
    assert best_c.value_bytes() != best_a.value_bytes()


def test_pretraining_writes_reloadable_records(dataset, tmp_path):
    path = tmp_path / "records.jsonl"
    model, run, best = pretrain_recognizer(
        dataset, "recurrent", tiny_config(), record_path=str(path)
    )
    assert [r.epoch for r in run] == [1, 2]
    assert all(r.loss is not None for r in run)
    loaded = RunRecord.load(path)
    assert [r.to_json() for r in loaded] == [r.to_json() for r in run]
    # the returned model carries the best state
    assert ModelState.from_module(model).value_bytes() == best.value_bytes()


def test_pretraining_honors_the_data_fraction(dataset, monkeypatch):
    seen = []
    original = train_mod.scene_crop_batches

    def spy(samples, target_len):
        seen.append(len(samples))
        return original(samples, target_len)

    monkeypatch.setattr(train_mod, "scene_crop_batches", spy)
    pretrain_recognizer(dataset, "parallel", tiny_config(epochs=1, data_fraction=0.5))
    assert seen[0] == 3  # train subsampled, val untouched


def test_pretraining_divergence_reports_last_stable(dataset, monkeypatch):
    calls = {"n": 0}
    original = train_mod._loss_for

    def poisoned(logits, targets):
        calls["n"] += 1
        if calls["n"] == 3:
            return torch.tensor(float("nan"), requires_grad=True)
        return original(logits, targets)

    monkeypatch.setattr(train_mod, "_loss_for", poisoned)
    with pytest.raises(TrainingDivergenceError) as exc_info:
        pretrain_recognizer(dataset, "recurrent", tiny_config(epochs=3))
    err = exc_info.value
    assert err.epoch == 2  # two batches per epoch, third loss is in epoch 2
    assert err.last_stable is not None
    for param in err.last_stable:
        assert torch.isfinite(param.value).all()


# ------------------------------------------------------------------ finetuning


def test_finetune_epoch_zero_snapshot_and_alpha_motion(dataset, frozen_encoder):
    _, _, baseline = pretrain_recognizer(dataset, "recurrent", tiny_config())
    fused, run, best = finetune_fused(
        dataset, frozen_encoder, baseline, "recurrent", GATED32,
        VISION, PoolKernel.infinite(), tiny_config(),
    )
    first = run.records[0]
    assert first.epoch == 0
    assert first.loss is None
    assert first.tanh_alpha == 0.0
    assert run.records[-1].tanh_alpha != 0.0  # the blend gate moved
    assert fused.fusion is not None
    assert len(run) == 3  # epoch 0 plus two trained epochs


def test_finetune_requires_a_frozen_encoder(dataset):
    torch.manual_seed(0)
    thawed = SceneEncoder(EncoderConfig(depth=1, dim=32, heads=2))
    _, _, baseline = pretrain_recognizer(dataset, "recurrent", tiny_config(epochs=1))
    with pytest.raises(InvariantError):
        finetune_fused(dataset, thawed, baseline, "recurrent", GATED32,
                       VISION, PoolKernel.infinite(), tiny_config(epochs=1))


def test_finetune_leaves_the_encoder_untouched(dataset, frozen_encoder):
    before = encoder_fingerprint(frozen_encoder)
    _, _, baseline = pretrain_recognizer(dataset, "recurrent", tiny_config(epochs=1))
    finetune_fused(dataset, frozen_encoder, baseline, "recurrent", GATED32,
                   VISION, PoolKernel.infinite(), tiny_config(epochs=1))
    assert encoder_fingerprint(frozen_encoder) == before


def test_cache_misses_all_in_epoch_one_then_none(dataset, frozen_encoder, tmp_path):
    _, _, baseline = pretrain_recognizer(dataset, "recurrent", tiny_config(epochs=1))
    _, run, _ = finetune_fused(
        dataset, frozen_encoder, baseline, "recurrent", GATED32,
        VISION, PoolKernel.infinite(), tiny_config(epochs=3),
        cache_path=str(tmp_path / "emb.cache"),
    )
    trained = [r for r in run if r.epoch > 0]
    assert trained[0].cache_misses == 6  # every training scene missed once
    assert trained[0].cache_hit_rate == 0.0
    for later in trained[1:]:
        assert later.cache_misses == 0
        assert later.cache_hit_rate == 1.0


def test_cache_file_survives_for_the_next_run(dataset, frozen_encoder, tmp_path):
    cache_path = str(tmp_path / "emb.cache")
    _, _, baseline = pretrain_recognizer(dataset, "recurrent", tiny_config(epochs=1))
    finetune_fused(dataset, frozen_encoder, baseline, "recurrent", GATED32,
                   VISION, PoolKernel.infinite(), tiny_config(epochs=1),
                   cache_path=cache_path)
    _, run, _ = finetune_fused(dataset, frozen_encoder, baseline, "recurrent",
                               GATED32, VISION, PoolKernel.infinite(),
                               tiny_config(epochs=1), cache_path=cache_path)
    assert [r.cache_misses for r in run if r.epoch > 0] == [0]


def test_caching_does_not_change_the_result(dataset, frozen_encoder, tmp_path):
    _, _, baseline = pretrain_recognizer(dataset, "recurrent", tiny_config(epochs=1))
    fused_off, run_off, best_off = finetune_fused(
        dataset, frozen_encoder, baseline, "recurrent", GATED32,
        VISION, PoolKernel.infinite(), tiny_config(),
    )
    fused_on, run_on, best_on = finetune_fused(
        dataset, frozen_encoder, baseline, "recurrent", GATED32,
        VISION, PoolKernel.infinite(), tiny_config(),
        cache_path=str(tmp_path / "emb.cache"),
    )
    assert best_on.value_bytes() == best_off.value_bytes()
    assert ModelState.from_module(fused_on).value_bytes() \
        == ModelState.from_module(fused_off).value_bytes()
    assert [r.loss for r in run_on] == [r.loss for r in run_off]


@pytest.mark.parametrize("point", [CONTEXTUAL, DECODER])
def test_finetune_works_at_every_integration_point(dataset, frozen_encoder, point):
    _, _, baseline = pretrain_recognizer(dataset, "recurrent", tiny_config(epochs=1))
    fused, run, _ = finetune_fused(
        dataset, frozen_encoder, baseline, "recurrent", GATED32,
        point, PoolKernel.infinite(), tiny_config(epochs=1),
    )
    assert fused.point == point
    assert len(run) == 2


def test_finetune_starts_from_the_baseline_weights(dataset, frozen_encoder):
    _, _, baseline = pretrain_recognizer(dataset, "recurrent", tiny_config())
    fused, _, _ = finetune_fused(
        dataset, frozen_encoder, baseline, "recurrent", GATED32,
        VISION, PoolKernel.infinite(), tiny_config(epochs=1),
    )
    # fused parameter names are the baseline's under the recognizer prefix
    fused_names = {n for n, _ in fused.named_parameters()}
    for name in baseline.names:
        assert f"recognizer.{name}" in fused_names
