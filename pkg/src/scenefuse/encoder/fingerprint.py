"""Deterministic fingerprints of encoder weights plus configuration.

The fingerprint keys cached embeddings: any change to the encoder's
configuration or parameter values changes the digest, invalidating stale
cache entries.
"""

from __future__ import annotations

import hashlib
import json

import torch

from scenefuse.encoder.vit import SceneEncoder


def encoder_fingerprint(encoder: SceneEncoder) -> bytes:
    """SHA-256 over the canonical config JSON and all parameter tensors."""
    h = hashlib.sha256()
    h.update(json.dumps(encoder.config.to_dict(), sort_keys=True).encode("utf-8"))
    h.update(b"\x00")
    for name, param in sorted(encoder.named_parameters()):
        h.update(name.encode("utf-8"))
        h.update(str(tuple(param.shape)).encode("utf-8"))
        h.update(param.detach().to(torch.float32).contiguous().numpy().tobytes())
    return h.digest()


def fingerprint_hex(encoder: SceneEncoder) -> str:
    return encoder_fingerprint(encoder).hex()
