"""Per-epoch training records, appended to JSONL as they happen."""

from __future__ import annotations

import json
import os
import statistics
from dataclasses import asdict, dataclass
from typing import Iterator


@dataclass
class EpochRecord:
    """One epoch's bookkeeping.

    ``epoch`` 0 is the pre-training snapshot (no loss yet).  Cache fields
    describe the training pass only; they stay zero for cache-less runs.
    """

    epoch: int
    loss: float | None
    val_accuracy: float
    val_corrupted_accuracy: float
    tanh_alpha: float
    seconds_per_iteration: float
    cache_hit_rate: float
    cache_misses: int
    wall_seconds: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "EpochRecord":
        return cls(**json.loads(line))


class RunRecord:
    """Append-only list of epoch records, mirrored to a JSONL file."""

    def __init__(self, path: str | os.PathLike | None = None):
        self.path = os.fspath(path) if path is not None else None
        self.records: list[EpochRecord] = []
        if self.path is not None:
            os.makedirs(os.path.dirname(self.path) or ".", exist_ok=True)
            # a fresh run truncates any stale file
            open(self.path, "w").close()

    def append(self, record: EpochRecord) -> None:
        self.records.append(record)
        if self.path is not None:
            with open(self.path, "a") as fh:
                fh.write(record.to_json() + "\n")
                fh.flush()

    def __iter__(self) -> Iterator[EpochRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def last(self) -> EpochRecord:
        return self.records[-1]

    def best_epoch(self, key: str = "val_corrupted_accuracy") -> EpochRecord:
        trained = [r for r in self.records if r.epoch > 0]
        return max(trained, key=lambda r: getattr(r, key))

    def median_seconds_per_iteration(self) -> float:
        values = [r.seconds_per_iteration for r in self.records if r.epoch > 0]
        return statistics.median(values) if values else 0.0

    @classmethod
    def load(cls, path: str | os.PathLike) -> "RunRecord":
        run = cls()
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line:
                    run.records.append(EpochRecord.from_json(line))
        run.path = os.fspath(path)
        return run
