"""Scene rendering, split bookkeeping, and dataset persistence.

Scenes are 96x96 grayscale images holding a 3x3 grid of words.  One target
word per scene has its designated slot blanked; all other words are fully
visible and carry the context's discriminating letter.  The context also
tints the background outside the word boxes, so whole-scene features can
recover the context while word crops cannot: crops contain only their own
glyph pixels.

A dataset directory holds ``generator.json`` (everything needed to
regenerate), ``manifest.jsonl`` (one record per scene), and
``images/<scene_id>.png``.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from scenefuse.datagen.contexts import ContextSpec
from scenefuse.datagen.glyphs import GLYPH_SIZE, GlyphTable
from scenefuse.errors import ConfigurationError, GenerationError

IMAGE_SIZE = 96
GRID_ROWS = 3
GRID_COLS = 3
WORDS_PER_SCENE = GRID_ROWS * GRID_COLS

_SPLIT_BASES = {"train": 0, "val": 1_000_000, "eval": 2_000_000}


@dataclass(frozen=True)
class SplitCounts:
    train: int
    val: int
    eval_iv: int
    eval_oov: int = 0

    def __post_init__(self):
        for name in ("train", "val", "eval_iv", "eval_oov"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"split count {name} must be >= 0")

    def to_dict(self) -> dict:
        return {"train": self.train, "val": self.val,
                "eval_iv": self.eval_iv, "eval_oov": self.eval_oov}

    @classmethod
    def from_dict(cls, data: dict) -> "SplitCounts":
        return cls(**data)


@dataclass(frozen=True)
class WordPlacement:
    box: tuple[int, int, int, int]  # x, y, width, height
    text: str
    stem: str
    corrupt_slot: int | None = None

    @property
    def corrupted(self) -> bool:
        return self.corrupt_slot is not None


@dataclass
class SceneSample:
    scene_id: int
    split: str
    vocab: str  # "iv" or "oov"
    context: int
    tint: int
    target_index: int
    words: list[WordPlacement]
    pixels: np.ndarray  # float32 [96, 96] in [0, 1]

    @property
    def target(self) -> WordPlacement:
        return self.words[self.target_index]


def crop_pixels(pixels: np.ndarray, box: tuple[int, int, int, int]) -> np.ndarray:
    """Extract a word crop; the result aliases the scene array."""
    x, y, w, h = box
    height, width = pixels.shape
    if x < 0 or y < 0 or w < 1 or h < 1 or x + w > width or y + h > height:
        raise ConfigurationError(f"crop box {box} outside {width}x{height} scene")
    return pixels[y : y + h, x : x + w]


def _render_scene(
    spec: ContextSpec,
    glyphs: GlyphTable,
    words: list[WordPlacement],
    tint: int,
) -> np.ndarray:
    canvas = np.full((IMAGE_SIZE, IMAGE_SIZE), tint, dtype=np.uint8)
    for placement in words:
        x, y, w, h = placement.box
        bitmap = glyphs.render_word(placement.text, placement.corrupt_slot)
        canvas[y : y + h, x : x + w] = (bitmap * 255).astype(np.uint8)
    return canvas.astype(np.float32) / 255.0


def _make_scene(
    spec: ContextSpec,
    glyphs: GlyphTable,
    scene_id: int,
    split: str,
    vocab: str,
    rng: np.random.Generator,
) -> SceneSample:
    pool = spec.pool(vocab)
    if len(pool) < WORDS_PER_SCENE:
        raise GenerationError(
            f"{vocab} stem pool has {len(pool)} stems; scenes need "
            f"{WORDS_PER_SCENE} distinct stems"
        )
    cell = IMAGE_SIZE // GRID_COLS
    word_width = spec.word_len * GLYPH_SIZE
    if word_width > cell or GLYPH_SIZE > cell:
        raise GenerationError(
            f"words of length {spec.word_len} do not fit a {cell}px grid cell"
        )
    context = int(rng.integers(spec.n_contexts))
    letter = spec.sigma[context]
    stem_indices = rng.choice(len(pool), size=WORDS_PER_SCENE, replace=False)
    target_index = int(rng.integers(WORDS_PER_SCENE))
    words: list[WordPlacement] = []
    for j, stem_idx in enumerate(stem_indices):
        stem = pool[int(stem_idx)]
        row, col = divmod(j, GRID_COLS)
        x = col * cell + (cell - word_width) // 2
        y = row * cell + (cell - GLYPH_SIZE) // 2
        words.append(
            WordPlacement(
                box=(x, y, word_width, GLYPH_SIZE),
                text=stem.fill(letter),
                stem=stem.pattern,
                corrupt_slot=stem.slot if j == target_index else None,
            )
        )
    tint = spec.tint_levels[context]
    pixels = _render_scene(spec, glyphs, words, tint)
    return SceneSample(
        scene_id=scene_id,
        split=split,
        vocab=vocab,
        context=context,
        tint=tint,
        target_index=target_index,
        words=words,
        pixels=pixels,
    )


@dataclass
class SceneDataset:
    spec: ContextSpec
    glyphs: GlyphTable
    counts: SplitCounts
    seed: int
    samples: list[SceneSample] = field(default_factory=list)

    def split(self, name: str) -> list[SceneSample]:
        if name not in _SPLIT_BASES:
            raise ConfigurationError(f"unknown split {name!r}")
        return [s for s in self.samples if s.split == name]

    def by_id(self, scene_id: int) -> SceneSample:
        for s in self.samples:
            if s.scene_id == scene_id:
                return s
        raise ConfigurationError(f"no scene with id {scene_id}")

    def checksum(self) -> str:
        h = hashlib.sha256()
        for s in self.samples:
            h.update(json.dumps(_manifest_record(s), sort_keys=True).encode())
            h.update(s.pixels.tobytes())
        return h.hexdigest()

    # -- persistence ----------------------------------------------------------

    def save(self, directory: str | os.PathLike) -> None:
        root = Path(directory)
        (root / "images").mkdir(parents=True, exist_ok=True)
        generator = {
            "seed": self.seed,
            "counts": self.counts.to_dict(),
            "context_spec": self.spec.to_dict(),
            "glyph_table": self.glyphs.to_dict(),
            "image_size": IMAGE_SIZE,
            "grid": [GRID_ROWS, GRID_COLS],
        }
        (root / "generator.json").write_text(json.dumps(generator, indent=2, sort_keys=True))
        with open(root / "manifest.jsonl", "w") as fh:
            for s in self.samples:
                fh.write(json.dumps(_manifest_record(s), sort_keys=True) + "\n")
        for s in self.samples:
            img = Image.fromarray((s.pixels * 255).round().astype(np.uint8), mode="L")
            img.save(root / "images" / f"{s.scene_id:08d}.png")

    @classmethod
    def load(cls, directory: str | os.PathLike) -> "SceneDataset":
        root = Path(directory)
        gen_path = root / "generator.json"
        if not gen_path.exists():
            raise ConfigurationError(
                f"no dataset at {root}; run the gen-data command first"
            )
        generator = json.loads(gen_path.read_text())
        spec = ContextSpec.from_dict(generator["context_spec"])
        glyphs = GlyphTable.from_dict(generator["glyph_table"])
        counts = SplitCounts.from_dict(generator["counts"])
        dataset = cls(spec=spec, glyphs=glyphs, counts=counts, seed=generator["seed"])
        with open(root / "manifest.jsonl") as fh:
            for line in fh:
                record = json.loads(line)
                image = Image.open(root / "images" / f"{record['scene_id']:08d}.png")
                pixels = np.asarray(image, dtype=np.float32) / 255.0
                dataset.samples.append(_sample_from_record(record, pixels))
        return dataset


def _manifest_record(s: SceneSample) -> dict:
    return {
        "scene_id": s.scene_id,
        "split": s.split,
        "vocab": s.vocab,
        "context": s.context,
        "tint": s.tint,
        "target_index": s.target_index,
        "words": [
            {
                "box": list(w.box),
                "text": w.text,
                "stem": w.stem,
                "corrupt_slot": w.corrupt_slot,
            }
            for w in s.words
        ],
    }


def _sample_from_record(record: dict, pixels: np.ndarray) -> SceneSample:
    words = [
        WordPlacement(
            box=tuple(w["box"]),
            text=w["text"],
            stem=w["stem"],
            corrupt_slot=w["corrupt_slot"],
        )
        for w in record["words"]
    ]
    return SceneSample(
        scene_id=record["scene_id"],
        split=record["split"],
        vocab=record["vocab"],
        context=record["context"],
        tint=record["tint"],
        target_index=record["target_index"],
        words=words,
        pixels=pixels,
    )


def generate_dataset(
    spec: ContextSpec,
    glyphs: GlyphTable,
    counts: SplitCounts,
    seed: int,
) -> SceneDataset:
    """Deterministically render all splits; each scene depends only on (seed, index)."""
    if counts.train < 1 or counts.val < 1 or counts.eval_iv < 1:
        raise GenerationError(
            "need at least one scene in each of train, val, and eval_iv; "
            f"got {counts.to_dict()}"
        )
    dataset = SceneDataset(spec=spec, glyphs=glyphs, counts=counts, seed=seed)
    plan = [
        ("train", "iv", counts.train),
        ("val", "iv", counts.val),
        ("eval", "iv", counts.eval_iv),
        ("eval", "oov", counts.eval_oov),
    ]
    offsets = {name: 0 for name in _SPLIT_BASES}
    for split, vocab, count in plan:
        base = _SPLIT_BASES[split]
        for _ in range(count):
            index = offsets[split]
            offsets[split] += 1
            scene_id = base + index
            rng = np.random.default_rng([seed, base, index])
            dataset.samples.append(
                _make_scene(spec, glyphs, scene_id, split, vocab, rng)
            )
    return dataset
