"""Synthetic scene/word benchmark with analytically known accuracy ceilings."""

from scenefuse.datagen.glyphs import GLYPH_SIZE, GlyphTable
from scenefuse.datagen.contexts import ContextSpec, Stem, build_context_spec
from scenefuse.datagen.generate import (
    SceneDataset,
    SceneSample,
    SplitCounts,
    WordPlacement,
    crop_pixels,
    generate_dataset,
)
from scenefuse.datagen.oracles import OracleReport, context_aware_ceiling, crop_only_ceiling

__all__ = [
    "GLYPH_SIZE",
    "GlyphTable",
    "Stem",
    "ContextSpec",
    "build_context_spec",
    "WordPlacement",
    "SceneSample",
    "SceneDataset",
    "SplitCounts",
    "generate_dataset",
    "crop_pixels",
    "OracleReport",
    "crop_only_ceiling",
    "context_aware_ceiling",
]
