"""Fusion mechanism configuration and cross-attention presets."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from scenefuse.errors import ConfigurationError

MECHANISM_GATED = "gated"
MECHANISM_MHCA = "mhca"

# preset -> (attention heads, layers, hidden size, feed-forward intermediate size)
ATTENTION_PRESETS: dict[str, tuple[int, int, int, int]] = {
    "tiny": (2, 2, 128, 512),
    "mini": (4, 4, 256, 1024),
    "small": (8, 4, 512, 2048),
}


@dataclass(frozen=True)
class FusionConfig:
    """Static description of one fusion block.

    ``d_local`` is the recognizer feature width at the integration point and
    ``d_global`` the raw scene-feature width entering the global projection.
    Cross-attention dimensions come from a named preset or can be given
    explicitly; the gated mechanism has no extra dimensions.
    """

    mechanism: str
    d_local: int
    d_global: int
    preset: str | None = None
    heads: int | None = None
    layers: int | None = None
    hidden_size: int | None = None
    intermediate_size: int | None = None

    def __post_init__(self):
        if self.mechanism not in (MECHANISM_GATED, MECHANISM_MHCA):
            raise ConfigurationError(
                f"unknown fusion mechanism {self.mechanism!r}; "
                f"expected {MECHANISM_GATED!r} or {MECHANISM_MHCA!r}"
            )
        if self.d_local < 1 or self.d_global < 1:
            raise ConfigurationError(
                f"feature widths must be positive, got d_local={self.d_local} d_global={self.d_global}"
            )
        if self.mechanism == MECHANISM_GATED:
            if any(v is not None for v in (self.preset, self.heads, self.layers,
                                           self.hidden_size, self.intermediate_size)):
                raise ConfigurationError("gated fusion takes no attention dimensions")
            return
        dims = (self.heads, self.layers, self.hidden_size, self.intermediate_size)
        if self.preset is not None:
            if self.preset not in ATTENTION_PRESETS:
                raise ConfigurationError(
                    f"unknown attention preset {self.preset!r}; "
                    f"expected one of {sorted(ATTENTION_PRESETS)}"
                )
            if any(v is not None for v in dims):
                raise ConfigurationError("give either a preset or explicit dimensions, not both")
            heads, layers, hidden, inter = ATTENTION_PRESETS[self.preset]
            object.__setattr__(self, "heads", heads)
            object.__setattr__(self, "layers", layers)
            object.__setattr__(self, "hidden_size", hidden)
            object.__setattr__(self, "intermediate_size", inter)
        elif any(v is None for v in dims):
            raise ConfigurationError(
                "cross-attention fusion needs a preset or all of heads/layers/"
                "hidden_size/intermediate_size"
            )
        if self.heads < 1 or self.layers < 1 or self.hidden_size < 1 or self.intermediate_size < 1:
            raise ConfigurationError("attention dimensions must be positive")
        if self.hidden_size % self.heads != 0:
            raise ConfigurationError(
                f"hidden size {self.hidden_size} must be divisible by heads {self.heads}"
            )

    @property
    def flavor(self) -> str:
        """Short name used for learning-rate lookup and artifact naming."""
        if self.mechanism == MECHANISM_GATED:
            return "gated"
        return self.preset or f"mhca{self.heads}x{self.layers}"

    @classmethod
    def gated(cls, d_local: int, d_global: int) -> "FusionConfig":
        return cls(MECHANISM_GATED, d_local, d_global)

    @classmethod
    def mhca(cls, preset: str, d_local: int, d_global: int) -> "FusionConfig":
        return cls(MECHANISM_MHCA, d_local, d_global, preset=preset)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "mechanism": self.mechanism,
            "d_local": self.d_local,
            "d_global": self.d_global,
        }
        if self.mechanism == MECHANISM_MHCA:
            if self.preset is not None:
                out["preset"] = self.preset
            else:
                out.update(
                    heads=self.heads,
                    layers=self.layers,
                    hidden_size=self.hidden_size,
                    intermediate_size=self.intermediate_size,
                )
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "FusionConfig":
        allowed = {"mechanism", "d_local", "d_global", "preset", "heads",
                   "layers", "hidden_size", "intermediate_size"}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigurationError(f"unknown fusion config keys: {sorted(unknown)}")
        return cls(**data)
