"""Detection-to-transcript pipeline with encode-once instrumentation.

The pipeline runs per scene: detect word boxes (a ground-truth stub here),
encode the whole scene at most once, crop, and recognize each crop.  Traces
record stage wall-clock, encoder/fusion invocation counts, and analytic
fusion FLOPs, which feed the latency-overhead report.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field

import torch

from scenefuse.datagen.generate import SceneSample, crop_pixels
from scenefuse.encoder.pooling import pool_features
from scenefuse.encoder.vit import SceneEncoder
from scenefuse.errors import ConfigurationError, InvariantError
from scenefuse.recognizers.fused import FusedRecognizer
from scenefuse.recognizers.vocab import decode_greedy
from scenefuse.trainer.records import RunRecord


class GroundTruthDetector:
    """Stand-in for a text detector: returns the annotated word boxes."""

    def detect(self, sample: SceneSample) -> list[tuple[int, int, int, int]]:
        return [w.box for w in sample.words]


@dataclass(frozen=True)
class CropPrediction:
    scene_id: int
    box: tuple[int, int, int, int]
    truth: str | None
    predicted: str | None
    correct: bool
    error: str | None = None


@dataclass
class SceneTrace:
    scene_id: int
    crop_count: int
    encoder_invocations: int
    fusion_invocations: int
    fusion_flops: int
    detect_seconds: float
    encode_seconds: float
    recognize_seconds: float
    total_seconds: float

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "crop_count": self.crop_count,
            "encoder_invocations": self.encoder_invocations,
            "fusion_invocations": self.fusion_invocations,
            "fusion_flops": self.fusion_flops,
            "detect_seconds": self.detect_seconds,
            "encode_seconds": self.encode_seconds,
            "recognize_seconds": self.recognize_seconds,
            "total_seconds": self.total_seconds,
        }


@dataclass
class PipelineResult:
    traces: list[SceneTrace] = field(default_factory=list)
    predictions: list[CropPrediction] = field(default_factory=list)

    @property
    def word_accuracy(self) -> float:
        scored = [p for p in self.predictions if p.error is None]
        if not scored:
            return 0.0
        return sum(p.correct for p in scored) / len(scored)

    @property
    def median_scene_seconds(self) -> float:
        return statistics.median(t.total_seconds for t in self.traces)

    @property
    def fps(self) -> float:
        """Frames per second: the reciprocal of the median per-scene wall-clock."""
        median = self.median_scene_seconds
        return 1.0 / median if median > 0 else float("inf")


def run_pipeline(
    samples: list[SceneSample],
    model: torch.nn.Module,
    encoder: SceneEncoder | None = None,
    detector: GroundTruthDetector | None = None,
    repeats: int = 1,
    warmup: int = 0,
) -> PipelineResult:
    """Process scenes end to end; one timed trace per scene.

    ``repeats`` re-times each scene and keeps median stage timings (the
    predictions are deterministic).  ``warmup`` untimed passes over the
    first scene absorb one-time allocation costs.  With a fused model every
    timed pass must invoke the encoder exactly once per scene; a plain
    recognizer must never invoke it.
    """
    if not samples:
        raise ConfigurationError("pipeline needs at least one scene")
    if repeats < 1:
        raise ConfigurationError(f"repeats must be >= 1, got {repeats}")
    fused = isinstance(model, FusedRecognizer)
    if fused and encoder is None:
        raise ConfigurationError("a fused recognizer needs the scene encoder")
    detector = detector or GroundTruthDetector()
    model.eval()
    result = PipelineResult()
    for _ in range(warmup):
        _process_scene(samples[0], model, encoder, detector, fused)
    for sample in samples:
        runs = [
            _process_scene(sample, model, encoder, detector, fused)
            for _ in range(repeats)
        ]
        trace = runs[-1][0]
        trace.detect_seconds = statistics.median(r[0].detect_seconds for r in runs)
        trace.encode_seconds = statistics.median(r[0].encode_seconds for r in runs)
        trace.recognize_seconds = statistics.median(r[0].recognize_seconds for r in runs)
        trace.total_seconds = statistics.median(r[0].total_seconds for r in runs)
        result.traces.append(trace)
        result.predictions.extend(runs[-1][1])
    model.train()
    return result


def _process_scene(
    sample: SceneSample,
    model: torch.nn.Module,
    encoder: SceneEncoder | None,
    detector: GroundTruthDetector,
    fused: bool,
) -> tuple[SceneTrace, list[CropPrediction]]:
    truth_by_box = {w.box: w.text for w in sample.words}
    t_start = time.perf_counter()

    t0 = time.perf_counter()
    boxes = detector.detect(sample)
    detect_seconds = time.perf_counter() - t0

    encode_seconds = 0.0
    encoder_invocations = 0
    pooled = None
    if fused:
        t0 = time.perf_counter()
        before = encoder.invocations
        features = encoder.encode_scene(torch.from_numpy(sample.pixels))
        pooled = pool_features(features, model.kernel).tokens.unsqueeze(0)
        encoder_invocations = encoder.invocations - before
        encode_seconds = time.perf_counter() - t0
        if encoder_invocations != 1:
            raise InvariantError(
                f"scene {sample.scene_id}: expected exactly one encoder invocation, "
                f"got {encoder_invocations}"
            )

    fusion_calls_before = model.fusion.calls if fused else 0
    fusion_flops_before = model.fusion.flops_estimate if fused else 0
    predictions: list[CropPrediction] = []
    t0 = time.perf_counter()
    with torch.no_grad():
        for box in boxes:
            try:
                crop = crop_pixels(sample.pixels, tuple(box))
            except ConfigurationError as exc:
                predictions.append(
                    CropPrediction(
                        scene_id=sample.scene_id,
                        box=tuple(box),
                        truth=truth_by_box.get(tuple(box)),
                        predicted=None,
                        correct=False,
                        error=str(exc),
                    )
                )
                continue
            tensor = torch.from_numpy(crop.copy()).to(torch.float32).reshape(
                1, 1, crop.shape[0], crop.shape[1]
            )
            logits = model(tensor, pooled) if fused else model(tensor)
            predicted = decode_greedy(logits[0]).text
            truth = truth_by_box.get(tuple(box))
            predictions.append(
                CropPrediction(
                    scene_id=sample.scene_id,
                    box=tuple(box),
                    truth=truth,
                    predicted=predicted,
                    correct=truth is not None and predicted == truth,
                )
            )
    recognize_seconds = time.perf_counter() - t0

    trace = SceneTrace(
        scene_id=sample.scene_id,
        crop_count=len(boxes),
        encoder_invocations=encoder_invocations,
        fusion_invocations=(model.fusion.calls - fusion_calls_before) if fused else 0,
        fusion_flops=(model.fusion.flops_estimate - fusion_flops_before) if fused else 0,
        detect_seconds=detect_seconds,
        encode_seconds=encode_seconds,
        recognize_seconds=recognize_seconds,
        total_seconds=time.perf_counter() - t_start,
    )
    return trace, predictions


@dataclass
class OverheadReport:
    """Latency comparison between a baseline and a fused pipeline run."""

    scenes: int
    base_median_seconds: float
    fused_median_seconds: float
    base_fps: float
    fused_fps: float
    mean_fusion_flops: float

    @property
    def delta_seconds(self) -> float:
        return self.fused_median_seconds - self.base_median_seconds

    @property
    def ratio(self) -> float:
        if self.base_median_seconds == 0:
            return float("inf")
        return self.fused_median_seconds / self.base_median_seconds

    def to_dict(self) -> dict:
        return {
            "scenes": self.scenes,
            "base_median_seconds": self.base_median_seconds,
            "fused_median_seconds": self.fused_median_seconds,
            "delta_seconds": self.delta_seconds,
            "delta_ms": self.delta_seconds * 1e3,
            "ratio": self.ratio,
            "base_fps": self.base_fps,
            "fused_fps": self.fused_fps,
            "mean_fusion_flops": self.mean_fusion_flops,
        }

    def to_tsv(self) -> str:
        d = self.to_dict()
        keys = list(d)
        header = "\t".join(keys)
        row = "\t".join(
            f"{d[k]:.6f}" if isinstance(d[k], float) else str(d[k]) for k in keys
        )
        return header + "\n" + row + "\n"


def overhead_report(base: PipelineResult, fused: PipelineResult) -> OverheadReport:
    """Compare two pipeline runs over the same scenes."""
    base_ids = [t.scene_id for t in base.traces]
    fused_ids = [t.scene_id for t in fused.traces]
    if base_ids != fused_ids:
        raise ConfigurationError(
            "overhead comparison needs identical scene sets in identical order"
        )
    flops = [t.fusion_flops for t in fused.traces]
    return OverheadReport(
        scenes=len(base_ids),
        base_median_seconds=base.median_scene_seconds,
        fused_median_seconds=fused.median_scene_seconds,
        base_fps=base.fps,
        fused_fps=fused.fps,
        mean_fusion_flops=sum(flops) / len(flops),
    )


def training_overhead(base: RunRecord, fused: RunRecord) -> dict:
    """Per-iteration training cost of fusion, from run records."""
    base_spi = base.median_seconds_per_iteration()
    fused_spi = fused.median_seconds_per_iteration()
    return {
        "base_seconds_per_iteration": base_spi,
        "fused_seconds_per_iteration": fused_spi,
        "delta_seconds": fused_spi - base_spi,
        "ratio": fused_spi / base_spi if base_spi > 0 else float("inf"),
    }
