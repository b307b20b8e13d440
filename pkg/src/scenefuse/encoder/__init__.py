"""Frozen scene-level image encoder, feature pooling, and the embedding cache."""

from scenefuse.encoder.vit import EncoderConfig, GlobalFeatures, SceneEncoder
from scenefuse.encoder.pooling import PoolKernel, pool_features, pool_tokens, pooled_length
from scenefuse.encoder.fingerprint import encoder_fingerprint, fingerprint_hex
from scenefuse.encoder.cache import EmbeddingCache
from scenefuse.encoder.pretrain import EncoderPretrainConfig, pretrain_encoder

__all__ = [
    "EncoderConfig",
    "GlobalFeatures",
    "SceneEncoder",
    "PoolKernel",
    "pool_features",
    "pool_tokens",
    "pooled_length",
    "encoder_fingerprint",
    "fingerprint_hex",
    "EmbeddingCache",
    "EncoderPretrainConfig",
    "pretrain_encoder",
]
