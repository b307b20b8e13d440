"""Figure rendering for reports: all plots go to files, never to a screen."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from scenefuse.errors import ConfigurationError
from scenefuse.evaluator.metrics import EvalReport
from scenefuse.evaluator.pipeline import OverheadReport
from scenefuse.trainer.records import RunRecord
from scenefuse.trainer.sweep import SweepRow, mean_gap_by_fraction


def _finish(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_lowdata(rows: list[SweepRow], path: str | Path) -> Path:
    """Context-benefit gap against training-data fraction, log-scaled axes.

    The y axis is log only when every gap is positive; otherwise it falls
    back to symlog so negative gaps at small scales remain visible.
    """
    if not rows:
        raise ConfigurationError("no sweep rows to plot")
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    ax.scatter(
        [r.fraction for r in rows],
        [r.gap for r in rows],
        s=18,
        alpha=0.6,
        label="per seed",
    )
    means = mean_gap_by_fraction(rows)
    ax.plot(list(means), list(means.values()), marker="o", color="C1", label="mean")
    ax.set_xscale("log")
    if all(r.gap > 0 for r in rows):
        ax.set_yscale("log")
    else:
        ax.set_yscale("symlog", linthresh=0.01)
    ax.set_xlabel("training data fraction")
    ax.set_ylabel("corrupted-accuracy gap (fused - baseline)")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    return _finish(fig, path)


def plot_alpha_trajectory(record: RunRecord, path: str | Path) -> Path:
    """Blend-gate opening (tanh of the learned scalar) per fine-tune epoch."""
    epochs = [e.epoch for e in record.records]
    alphas = [e.tanh_alpha for e in record.records]
    if not epochs:
        raise ConfigurationError("run record holds no epochs")
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.plot(epochs, alphas, marker="o")
    ax.axhline(0.0, color="gray", lw=0.8)
    ax.set_xlabel("epoch")
    ax.set_ylabel("tanh(alpha)")
    ax.set_ylim(-1.05, 1.05)
    ax.grid(True, alpha=0.3)
    return _finish(fig, path)


def plot_eval_report(report: EvalReport, path: str | Path) -> Path:
    """Grouped accuracy bars per split and slice."""
    slices = ("overall", "corrupted", "uncorrupted", "iv", "oov")
    splits = [name for name, rep in report.splits.items() if rep.error is None]
    if not splits:
        raise ConfigurationError("report holds no scored splits")
    fig, ax = plt.subplots(figsize=(1.2 + 1.6 * len(splits), 3.6))
    width = 0.8 / len(slices)
    for i, slc in enumerate(slices):
        xs, ys = [], []
        for j, split in enumerate(splits):
            stats = getattr(report.splits[split], slc)
            if stats.words == 0:
                continue
            xs.append(j + (i - (len(slices) - 1) / 2) * width)
            ys.append(stats.accuracy)
        ax.bar(xs, ys, width=width, label=slc)
    ax.set_xticks(range(len(splits)))
    ax.set_xticklabels(splits)
    ax.set_ylabel("word accuracy")
    ax.set_ylim(0, 1.0)
    ax.legend(fontsize=7, ncol=2)
    ax.grid(True, axis="y", alpha=0.3)
    return _finish(fig, path)


def plot_overhead(report: OverheadReport, path: str | Path) -> Path:
    """Median per-scene latency, baseline next to fused."""
    fig, ax = plt.subplots(figsize=(4.2, 3.4))
    labels = ["baseline", "fused"]
    values = [report.base_median_seconds * 1e3, report.fused_median_seconds * 1e3]
    bars = ax.bar(labels, values, color=["C0", "C1"], width=0.55)
    for bar, value in zip(bars, values):
        ax.annotate(
            f"{value:.1f} ms",
            (bar.get_x() + bar.get_width() / 2, value),
            ha="center",
            va="bottom",
            fontsize=8,
        )
    ax.set_ylabel("median scene latency (ms)")
    ax.set_title(f"overhead x{report.ratio:.2f}", fontsize=10)
    ax.grid(True, axis="y", alpha=0.3)
    return _finish(fig, path)


def plot_training_curves(record: RunRecord, path: str | Path) -> Path:
    """Loss and validation accuracies over a training run."""
    scored = [e for e in record.records if e.epoch > 0]
    if not scored:
        raise ConfigurationError("run record holds no trained epochs")
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(8.0, 3.2))
    ax_loss.plot([e.epoch for e in scored], [e.loss for e in scored], marker=".")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("training loss")
    ax_loss.grid(True, alpha=0.3)
    epochs = [e.epoch for e in record.records]
    ax_acc.plot(epochs, [e.val_accuracy for e in record.records], marker=".",
                label="overall")
    ax_acc.plot(epochs, [e.val_corrupted_accuracy for e in record.records],
                marker=".", label="corrupted")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("val word accuracy")
    ax_acc.set_ylim(0, 1.0)
    ax_acc.legend(fontsize=8)
    ax_acc.grid(True, alpha=0.3)
    return _finish(fig, path)
