"""Pretraining the scene encoder to classify the scene context.

The encoder's class token feeds a linear head over the context labels; once
validation accuracy is satisfactory the head is dropped and the encoder is
frozen for all downstream use.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

from scenefuse.datagen.generate import SceneDataset, SceneSample
from scenefuse.diffcore.optim import make_adam
from scenefuse.diffcore.params import ModelState
from scenefuse.encoder.vit import EncoderConfig, SceneEncoder
from scenefuse.errors import ConfigurationError, TrainingDivergenceError


@dataclass
class EncoderPretrainConfig:
    epochs: int = 6
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    encoder: EncoderConfig = field(default_factory=EncoderConfig)


def scene_tensors(samples: list[SceneSample]) -> tuple[torch.Tensor, torch.Tensor]:
    """Stack scene pixels and context labels for a list of samples."""
    images = torch.stack(
        [torch.from_numpy(s.pixels).unsqueeze(0) for s in samples]
    ).to(torch.float32)
    labels = torch.tensor([s.context for s in samples], dtype=torch.long)
    return images, labels


def pretrain_encoder(
    dataset: SceneDataset, config: EncoderPretrainConfig
) -> tuple[SceneEncoder, dict]:
    """Train a fresh encoder on context classification; return it frozen.

    The report carries per-epoch loss and validation accuracy plus the final
    validation accuracy.  A non-finite loss aborts with the last stable
    epoch's weights attached to the error.
    """
    train = dataset.split("train")
    val = dataset.split("val")
    if not train or not val:
        raise ConfigurationError("encoder pretraining needs non-empty train and val splits")

    torch.manual_seed(config.seed)
    encoder = SceneEncoder(config.encoder)
    head = nn.Linear(config.encoder.dim, dataset.spec.n_contexts)
    optimizer = make_adam(list(encoder.parameters()) + list(head.parameters()), config.lr)

    train_images, train_labels = scene_tensors(train)
    val_images, val_labels = scene_tensors(val)

    def val_accuracy() -> float:
        encoder.eval()
        with torch.no_grad():
            logits = head(encoder(val_images)[:, 0, :])
        encoder.train()
        return float((logits.argmax(dim=-1) == val_labels).float().mean())

    report: dict = {"epochs": []}
    last_stable = ModelState.from_module(encoder)
    for epoch in range(1, config.epochs + 1):
        g = torch.Generator().manual_seed(config.seed * 100_003 + epoch)
        order = torch.randperm(len(train), generator=g)
        epoch_loss = 0.0
        batches = 0
        for start in range(0, len(train), config.batch_size):
            idx = order[start : start + config.batch_size]
            logits = head(encoder(train_images[idx])[:, 0, :])
            loss = nn.functional.cross_entropy(logits, train_labels[idx])
            if not torch.isfinite(loss):
                raise TrainingDivergenceError(
                    f"non-finite encoder loss in epoch {epoch}",
                    last_stable=last_stable,
                    epoch=epoch,
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss.detach())
            batches += 1
        last_stable = ModelState.from_module(encoder)
        report["epochs"].append(
            {
                "epoch": epoch,
                "loss": epoch_loss / max(batches, 1),
                "val_accuracy": val_accuracy(),
            }
        )
    report["final_val_accuracy"] = report["epochs"][-1]["val_accuracy"]
    encoder.freeze()
    return encoder, report
