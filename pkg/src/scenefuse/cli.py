"""Command-line workflow: data generation through training, eval, and reports.

Every producing command writes into ``<out>/<name>/``: the merged
configuration first (``config.json``), then artifacts, then a completion
stamp.  Reruns with an unchanged configuration are skipped unless
``--force``.  Report commands write delimited ``.tsv`` tables with rendered
``.png`` figures next to them.

Exit codes: 0 success, 1 usage or configuration problems, 2 broken
invariants, 3 numeric failures.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click
import torch

from scenefuse.datagen.contexts import build_context_spec
from scenefuse.datagen.generate import SceneDataset, SplitCounts, generate_dataset
from scenefuse.datagen.glyphs import GlyphTable
from scenefuse.datagen.oracles import context_aware_ceiling, crop_only_ceiling
from scenefuse.diffcore.optim import finetune_learning_rate
from scenefuse.diffcore.params import ModelState
from scenefuse.encoder.cache import EmbeddingCache
from scenefuse.encoder.fingerprint import encoder_fingerprint
from scenefuse.encoder.pooling import PoolKernel, pool_tokens
from scenefuse.encoder.pretrain import EncoderPretrainConfig, pretrain_encoder
from scenefuse.encoder.vit import EncoderConfig, SceneEncoder
from scenefuse.errors import (
    EXIT_OK,
    EXIT_USAGE,
    MissingArtifactError,
    SceneFuseError,
    exit_code_for,
)
from scenefuse.evaluator.metrics import evaluate
from scenefuse.evaluator.pipeline import (
    GroundTruthDetector,
    overhead_report,
    run_pipeline,
)
from scenefuse.expconfig import (
    is_complete,
    load_config_file,
    merge_config,
    persist_config,
    write_stamp,
)
from scenefuse.fusion.blocks import FusionBlock
from scenefuse.fusion.config import FusionConfig
from scenefuse.fusion.costs import count_multiply_adds, count_params, estimate_flops
from scenefuse.recognizers.fused import FusedRecognizer, build_recognizer
from scenefuse.recognizers.integration import INTEGRATION_POINTS, parse_point
from scenefuse.trainer.records import RunRecord
from scenefuse.trainer.sweep import lowdata_sweep
from scenefuse.trainer.train import TrainConfig, finetune_fused, pretrain_recognizer


def _out_root(explicit: str | None) -> Path:
    if explicit:
        return Path(explicit)
    return Path(os.environ.get("SCENEFUSE_OUT", "runs"))


def _require(path: Path, what: str, producer: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(
            f"{what} not found at {path}; produce it with `scenefuse {producer}`"
        )
    return path


def _meta_path(ckpt: Path) -> Path:
    return ckpt.with_suffix(".meta.json")


def _save_model(ckpt: Path, state: ModelState, meta: dict) -> None:
    state.save(ckpt)
    _meta_path(ckpt).write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")


def _read_meta(ckpt: Path, producer: str) -> dict:
    meta = _meta_path(ckpt)
    _require(ckpt, "checkpoint", producer)
    _require(meta, "checkpoint metadata", producer)
    return json.loads(meta.read_text())


def _load_encoder(ckpt: Path) -> SceneEncoder:
    meta = _read_meta(ckpt, "pretrain-encoder")
    encoder = SceneEncoder(EncoderConfig.from_dict(meta["config"]))
    ModelState.load(ckpt).load_into(encoder)
    encoder.freeze()
    return encoder


def _load_recognizer(ckpt: Path) -> tuple[torch.nn.Module, dict]:
    """Rebuild a baseline or fused recognizer from a checkpoint + metadata."""
    meta = _read_meta(ckpt, "pretrain-recognizer (or finetune)")
    model = build_recognizer(meta["arch"])
    if meta["kind"] == "fused":
        fusion = FusionBlock(FusionConfig.from_dict(meta["fusion"]))
        model = FusedRecognizer(
            model, fusion, meta["point"], PoolKernel.parse(meta["kernel"])
        )
    ModelState.load(ckpt).load_into(model)
    return model, meta


def _dataset(data_dir: str) -> SceneDataset:
    return SceneDataset.load(
        _require(Path(data_dir), "dataset directory", "gen-data")
    )


def _skip_or_start(out_dir: Path, config: dict, force: bool) -> bool:
    """Persist the merged config; True when the run can be skipped."""
    if not force and is_complete(out_dir, config):
        click.echo(f"up to date, skipping: {out_dir} (use --force to redo)")
        return True
    persist_config(config, out_dir)
    return False


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--out", "out_root", default=None, metavar="DIR",
              help="Output root (default: $SCENEFUSE_OUT or ./runs).")
@click.pass_context
def cli(ctx, out_root):
    """Scene-context fusion workbench."""
    ctx.obj = _out_root(out_root)


@cli.command("gen-data")
@click.option("--config", "config_file", default=None, metavar="JSON")
@click.option("--contexts", type=int, default=None)
@click.option("--stems", type=int, default=None)
@click.option("--oov-stems", type=int, default=None)
@click.option("--word-len", type=int, default=None)
@click.option("--train", "train_n", type=int, default=None)
@click.option("--val", "val_n", type=int, default=None)
@click.option("--eval-iv", type=int, default=None)
@click.option("--eval-oov", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--name", default="data", show_default=True)
@click.option("--force", is_flag=True)
@click.pass_obj
def gen_data(out_root, config_file, contexts, stems, oov_stems, word_len,
             train_n, val_n, eval_iv, eval_oov, seed, name, force):
    """Generate a synthetic scene dataset and print its accuracy ceilings."""
    defaults = {
        "contexts": 4, "stems": 24, "oov_stems": 12, "word_len": 4,
        "train": 1200, "val": 200, "eval_iv": 300, "eval_oov": 120, "seed": 0,
    }
    flags = {
        "contexts": contexts, "stems": stems, "oov_stems": oov_stems,
        "word_len": word_len, "train": train_n, "val": val_n,
        "eval_iv": eval_iv, "eval_oov": eval_oov, "seed": seed,
    }
    cfg = merge_config(defaults, config_file and load_config_file(config_file), flags)
    out_dir = out_root / name
    if _skip_or_start(out_dir, cfg, force):
        return EXIT_OK
    spec = build_context_spec(
        n_contexts=cfg["contexts"], n_stems=cfg["stems"],
        n_oov_stems=cfg["oov_stems"], seed=cfg["seed"], word_len=cfg["word_len"],
    )
    glyphs = GlyphTable.from_seed(cfg["seed"])
    counts = SplitCounts(train=cfg["train"], val=cfg["val"],
                         eval_iv=cfg["eval_iv"], eval_oov=cfg["eval_oov"])
    dataset = generate_dataset(spec, glyphs, counts, seed=cfg["seed"])
    dataset.save(out_dir)
    for split in ("train", "val", "eval"):
        click.echo(f"{split}: {len(dataset.split(split))} scenes")
    blind = crop_only_ceiling(dataset, "eval")
    aware = context_aware_ceiling(dataset, "eval")
    click.echo(f"crop-only ceiling (corrupted): {blind.corrupted_bound:.4f}")
    click.echo(f"context-aware ceiling (corrupted): {aware.corrupted_bound:.4f}")
    write_stamp(out_dir, cfg,
                [out_dir / "generator.json", out_dir / "manifest.jsonl"],
                extra={"dataset_checksum": dataset.checksum()})
    click.echo(f"wrote {out_dir}")
    return EXIT_OK


@cli.command("pretrain-encoder")
@click.option("--data", required=True, metavar="DIR")
@click.option("--config", "config_file", default=None, metavar="JSON")
@click.option("--epochs", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--name", default="encoder", show_default=True)
@click.option("--force", is_flag=True)
@click.pass_obj
def pretrain_encoder_cmd(out_root, data, config_file, epochs, batch_size, lr,
                         seed, name, force):
    """Train the scene encoder on context classification, then freeze it."""
    defaults = {"epochs": 6, "batch_size": 32, "lr": 1e-3, "seed": 0}
    flags = {"epochs": epochs, "batch_size": batch_size, "lr": lr, "seed": seed}
    cfg = merge_config(defaults, config_file and load_config_file(config_file), flags)
    out_dir = out_root / name
    if _skip_or_start(out_dir, cfg, force):
        return EXIT_OK
    dataset = _dataset(data)
    encoder, report = pretrain_encoder(dataset, EncoderPretrainConfig(
        epochs=cfg["epochs"], batch_size=cfg["batch_size"],
        lr=cfg["lr"], seed=cfg["seed"],
    ))
    ckpt = out_dir / "encoder.ckpt"
    _save_model(ckpt, ModelState.from_module(encoder, frozen=True),
                {"kind": "encoder", "config": encoder.config.to_dict()})
    (out_dir / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    click.echo(f"final context accuracy: {report['final_val_accuracy']:.4f}")
    write_stamp(out_dir, cfg, [ckpt, _meta_path(ckpt), out_dir / "report.json"])
    click.echo(f"wrote {ckpt}")
    return EXIT_OK


@cli.command("pretrain-recognizer")
@click.option("--data", required=True, metavar="DIR")
@click.option("--config", "config_file", default=None, metavar="JSON")
@click.option("--arch", type=click.Choice(("recurrent", "parallel")), default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--batch-scenes", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--fraction", type=float, default=None,
              help="Training-scene fraction in (0, 1].")
@click.option("--name", default=None, help="Default: baseline-<arch>.")
@click.option("--force", is_flag=True)
@click.pass_obj
def pretrain_recognizer_cmd(out_root, data, config_file, arch, epochs,
                            batch_scenes, lr, seed, fraction, name, force):
    """Train a crop-only recognizer baseline."""
    defaults = {"arch": "recurrent", "epochs": 20, "batch_scenes": 8,
                "lr": 1e-3, "seed": 0, "fraction": 1.0}
    flags = {"arch": arch, "epochs": epochs, "batch_scenes": batch_scenes,
             "lr": lr, "seed": seed, "fraction": fraction}
    cfg = merge_config(defaults, config_file and load_config_file(config_file), flags)
    out_dir = out_root / (name or f"baseline-{cfg['arch']}")
    if _skip_or_start(out_dir, cfg, force):
        return EXIT_OK
    dataset = _dataset(data)
    records_path = out_dir / "records.jsonl"
    _, record, best = pretrain_recognizer(
        dataset, cfg["arch"],
        TrainConfig(epochs=cfg["epochs"], batch_scenes=cfg["batch_scenes"],
                    lr=cfg["lr"], seed=cfg["seed"], data_fraction=cfg["fraction"]),
        record_path=str(records_path),
    )
    ckpt = out_dir / "model.ckpt"
    _save_model(ckpt, best, {"kind": "baseline", "arch": cfg["arch"]})
    from scenefuse.plotting import plot_training_curves

    plot_training_curves(record, out_dir / "training.png")
    best_epoch = record.best_epoch(key="val_accuracy")
    click.echo(f"best epoch {best_epoch.epoch}: "
               f"val accuracy {best_epoch.val_accuracy:.4f}, "
               f"corrupted {best_epoch.val_corrupted_accuracy:.4f}")
    write_stamp(out_dir, cfg, [ckpt, _meta_path(ckpt), records_path])
    click.echo(f"wrote {ckpt}")
    return EXIT_OK


@cli.command("finetune")
@click.option("--data", required=True, metavar="DIR")
@click.option("--encoder", "encoder_ckpt", required=True, metavar="CKPT")
@click.option("--baseline", "baseline_ckpt", required=True, metavar="CKPT")
@click.option("--config", "config_file", default=None, metavar="JSON")
@click.option("--mechanism", type=click.Choice(("gated", "mhca")), default=None)
@click.option("--preset", type=click.Choice(("tiny", "mini", "small")), default=None,
              help="Attention size (mhca only).")
@click.option("--point", type=click.Choice(INTEGRATION_POINTS), default=None)
@click.option("--kernel", default=None, help="Pooling window, an integer or 'inf'.")
@click.option("--epochs", type=int, default=None)
@click.option("--batch-scenes", type=int, default=None)
@click.option("--lr", type=float, default=None,
              help="Default: the flavor's gated learning rate.")
@click.option("--seed", type=int, default=None)
@click.option("--fraction", type=float, default=None)
@click.option("--no-cache", is_flag=True, help="Recompute embeddings every epoch.")
@click.option("--name", default=None, help="Default: fused-<flavor>-<point>-k<kernel>.")
@click.option("--force", is_flag=True)
@click.pass_obj
def finetune_cmd(out_root, data, encoder_ckpt, baseline_ckpt, config_file,
                 mechanism, preset, point, kernel, epochs, batch_scenes, lr,
                 seed, fraction, no_cache, name, force):
    """Attach a fusion block to a pretrained recognizer and fine-tune."""
    defaults = {"mechanism": "gated", "preset": None, "point": "vision",
                "kernel": "inf", "epochs": 12, "batch_scenes": 8, "lr": None,
                "seed": 0, "fraction": 1.0, "cache": True}
    flags = {"mechanism": mechanism, "preset": preset, "point": point,
             "kernel": kernel, "epochs": epochs, "batch_scenes": batch_scenes,
             "lr": lr, "seed": seed, "fraction": fraction,
             "cache": False if no_cache else None}
    cfg = merge_config(defaults, config_file and load_config_file(config_file), flags)

    dataset = _dataset(data)
    encoder = _load_encoder(Path(encoder_ckpt))
    baseline_meta = _read_meta(Path(baseline_ckpt), "pretrain-recognizer")
    baseline_state = ModelState.load(Path(baseline_ckpt))
    d_global = encoder.config.dim
    if cfg["mechanism"] == "gated":
        fusion_config = FusionConfig.gated(d_local=48, d_global=d_global)
    else:
        if not cfg["preset"]:
            raise click.UsageError("--preset is required with --mechanism mhca")
        fusion_config = FusionConfig.mhca(cfg["preset"], d_local=48, d_global=d_global)
    if cfg["lr"] is None:
        cfg["lr"] = finetune_learning_rate(fusion_config.flavor)
    pool = PoolKernel.parse(cfg["kernel"])
    pt = parse_point(cfg["point"])
    out_dir = out_root / (name or f"fused-{fusion_config.flavor}-{pt}-k{pool}")
    if _skip_or_start(out_dir, cfg, force):
        return EXIT_OK

    records_path = out_dir / "records.jsonl"
    fused, record, best = finetune_fused(
        dataset, encoder, baseline_state, baseline_meta["arch"], fusion_config,
        pt, pool,
        TrainConfig(epochs=cfg["epochs"], batch_scenes=cfg["batch_scenes"],
                    lr=cfg["lr"], seed=cfg["seed"], data_fraction=cfg["fraction"]),
        cache_path=None if not cfg["cache"] else str(out_dir / "embeddings.cache"),
        record_path=str(records_path),
    )
    ckpt = out_dir / "model.ckpt"
    _save_model(ckpt, best, {
        "kind": "fused", "arch": baseline_meta["arch"],
        "fusion": fusion_config.to_dict(), "point": pt, "kernel": str(pool),
    })
    from scenefuse.plotting import plot_alpha_trajectory, plot_training_curves

    plot_training_curves(record, out_dir / "training.png")
    plot_alpha_trajectory(record, out_dir / "alpha.png")
    best_epoch = record.best_epoch()
    click.echo(f"best epoch {best_epoch.epoch}: "
               f"corrupted val accuracy {best_epoch.val_corrupted_accuracy:.4f}, "
               f"tanh(alpha) {best_epoch.tanh_alpha:.4f}")
    write_stamp(out_dir, cfg, [ckpt, _meta_path(ckpt), records_path])
    click.echo(f"wrote {ckpt}")
    return EXIT_OK


@cli.command("precompute-cache")
@click.option("--data", required=True, metavar="DIR")
@click.option("--encoder", "encoder_ckpt", required=True, metavar="CKPT")
@click.option("--kernel", default="inf", show_default=True)
@click.option("--split", default="train", show_default=True)
@click.option("--cache-file", default=None, metavar="PATH",
              help="Default: <out>/cache/embeddings-k<kernel>.cache")
@click.pass_obj
def precompute_cache_cmd(out_root, data, encoder_ckpt, kernel, split, cache_file):
    """Fill an embedding cache for a split ahead of fine-tuning."""
    dataset = _dataset(data)
    encoder = _load_encoder(Path(encoder_ckpt))
    pool = PoolKernel.parse(kernel)
    path = Path(cache_file) if cache_file else (
        out_root / "cache" / f"embeddings-k{pool}.cache"
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    cache = EmbeddingCache(path, dim=encoder.config.dim, kernel=pool,
                           fingerprint=encoder_fingerprint(encoder))
    samples = dataset.split(split)
    fresh = [s for s in samples if s.scene_id not in cache]
    for start in range(0, len(fresh), 64):
        chunk = fresh[start:start + 64]
        images = torch.stack(
            [torch.from_numpy(s.pixels).unsqueeze(0) for s in chunk]
        ).to(torch.float32)
        pooled = pool_tokens(encoder.encode_batch(images), encoder.config.grid, pool)
        for sample, tokens in zip(chunk, pooled):
            cache.put(sample.scene_id, tokens)
    cache.save()
    click.echo(f"cache holds {len(cache)} scenes ({len(fresh)} new) at {path}")
    return EXIT_OK


@cli.command("eval")
@click.option("--data", required=True, metavar="DIR")
@click.option("--model", "model_ckpt", required=True, metavar="CKPT")
@click.option("--encoder", "encoder_ckpt", default=None, metavar="CKPT",
              help="Required for fused checkpoints.")
@click.option("--splits", default="eval", show_default=True,
              help="Comma-separated split names.")
@click.option("--name", default=None, help="Default: eval-<model dir>.")
@click.option("--force", is_flag=True)
@click.pass_obj
def eval_cmd(out_root, data, model_ckpt, encoder_ckpt, splits, name, force):
    """Score a recognizer on dataset splits; write a table and figures."""
    model_path = Path(model_ckpt)
    cfg = {"model": str(model_path.resolve()), "splits": splits,
           "encoder": encoder_ckpt and str(Path(encoder_ckpt).resolve())}
    out_dir = out_root / (name or f"eval-{model_path.resolve().parent.name}")
    if _skip_or_start(out_dir, cfg, force):
        return EXIT_OK
    dataset = _dataset(data)
    model, meta = _load_recognizer(model_path)
    encoder = None
    if meta["kind"] == "fused":
        if not encoder_ckpt:
            raise click.UsageError("--encoder is required for a fused checkpoint")
        encoder = _load_encoder(Path(encoder_ckpt))
    split_names = tuple(s.strip() for s in splits.split(",") if s.strip())
    report = evaluate(model, dataset, splits=split_names, encoder=encoder)
    (out_dir / "report.tsv").write_text(report.to_tsv())
    (out_dir / "report.json").write_text(report.to_json() + "\n")
    from scenefuse.plotting import plot_eval_report

    plot_eval_report(report, out_dir / "report.png")
    for split in split_names:
        rep = report.splits[split]
        if rep.error:
            click.echo(f"{split}: {rep.error}")
            continue
        click.echo(f"{split}: overall {rep.overall.accuracy:.4f}, "
                   f"corrupted {rep.corrupted.accuracy:.4f}, "
                   f"uncorrupted {rep.uncorrupted.accuracy:.4f}")
    write_stamp(out_dir, cfg, [out_dir / "report.tsv", out_dir / "report.json"])
    click.echo(f"wrote {out_dir / 'report.tsv'}")
    return EXIT_OK


@cli.command("pipeline-bench")
@click.option("--data", required=True, metavar="DIR")
@click.option("--baseline", "baseline_ckpt", required=True, metavar="CKPT")
@click.option("--fused", "fused_ckpt", required=True, metavar="CKPT")
@click.option("--encoder", "encoder_ckpt", required=True, metavar="CKPT")
@click.option("--split", default="eval", show_default=True)
@click.option("--scenes", type=int, default=20, show_default=True)
@click.option("--repeats", type=int, default=3, show_default=True)
@click.option("--warmup", type=int, default=1, show_default=True)
@click.option("--name", default="bench", show_default=True)
@click.option("--force", is_flag=True)
@click.pass_obj
def pipeline_bench_cmd(out_root, data, baseline_ckpt, fused_ckpt, encoder_ckpt,
                       split, scenes, repeats, warmup, name, force):
    """Time the detect-crop-recognize pipeline, baseline against fused."""
    cfg = {"baseline": str(Path(baseline_ckpt).resolve()),
           "fused": str(Path(fused_ckpt).resolve()),
           "encoder": str(Path(encoder_ckpt).resolve()),
           "split": split, "scenes": scenes, "repeats": repeats, "warmup": warmup}
    out_dir = out_root / name
    if _skip_or_start(out_dir, cfg, force):
        return EXIT_OK
    dataset = _dataset(data)
    samples = dataset.split(split)[:scenes]
    baseline, _ = _load_recognizer(Path(baseline_ckpt))
    fused, meta = _load_recognizer(Path(fused_ckpt))
    if meta["kind"] != "fused":
        raise click.UsageError("--fused must point at a fused checkpoint")
    encoder = _load_encoder(Path(encoder_ckpt))
    detector = GroundTruthDetector()
    base_run = run_pipeline(samples, baseline, detector=detector,
                            repeats=repeats, warmup=warmup)
    fused_run = run_pipeline(samples, fused, encoder=encoder, detector=detector,
                             repeats=repeats, warmup=warmup)
    report = overhead_report(base_run, fused_run)
    (out_dir / "overhead.tsv").write_text(report.to_tsv())
    traces = [t.to_dict() | {"variant": "baseline"} for t in base_run.traces]
    traces += [t.to_dict() | {"variant": "fused"} for t in fused_run.traces]
    (out_dir / "traces.jsonl").write_text(
        "".join(json.dumps(t) + "\n" for t in traces)
    )
    from scenefuse.plotting import plot_overhead

    plot_overhead(report, out_dir / "overhead.png")
    click.echo(f"baseline {report.base_median_seconds * 1e3:.1f} ms/scene, "
               f"fused {report.fused_median_seconds * 1e3:.1f} ms/scene "
               f"(x{report.ratio:.3f}, +{report.delta_seconds * 1e3:.1f} ms)")
    click.echo(f"fused accuracy {fused_run.word_accuracy:.4f}, "
               f"baseline {base_run.word_accuracy:.4f}")
    write_stamp(out_dir, cfg, [out_dir / "overhead.tsv", out_dir / "traces.jsonl"])
    click.echo(f"wrote {out_dir / 'overhead.tsv'}")
    return EXIT_OK


@cli.command("sweep-lowdata")
@click.option("--data", required=True, metavar="DIR")
@click.option("--encoder", "encoder_ckpt", required=True, metavar="CKPT")
@click.option("--fractions", default="1.0,0.3,0.1", show_default=True)
@click.option("--seeds", default="0,1,2", show_default=True)
@click.option("--arch", type=click.Choice(("recurrent", "parallel")),
              default="recurrent", show_default=True)
@click.option("--mechanism", type=click.Choice(("gated", "mhca")),
              default="gated", show_default=True)
@click.option("--preset", type=click.Choice(("tiny", "mini", "small")), default=None)
@click.option("--point", type=click.Choice(INTEGRATION_POINTS),
              default="vision", show_default=True)
@click.option("--kernel", default="inf", show_default=True)
@click.option("--epochs", type=int, default=12, show_default=True)
@click.option("--name", default="sweep", show_default=True)
@click.option("--force", is_flag=True)
@click.pass_obj
def sweep_lowdata_cmd(out_root, data, encoder_ckpt, fractions, seeds, arch,
                      mechanism, preset, point, kernel, epochs, name, force):
    """Train baseline/fused pairs across data fractions and chart the gap."""
    cfg = {"encoder": str(Path(encoder_ckpt).resolve()), "fractions": fractions,
           "seeds": seeds, "arch": arch, "mechanism": mechanism,
           "preset": preset, "point": point, "kernel": kernel, "epochs": epochs}
    out_dir = out_root / name
    if _skip_or_start(out_dir, cfg, force):
        return EXIT_OK
    dataset = _dataset(data)
    encoder = _load_encoder(Path(encoder_ckpt))
    fraction_list = [float(f) for f in fractions.split(",") if f.strip()]
    seed_list = [int(s) for s in seeds.split(",") if s.strip()]
    if mechanism == "gated":
        fusion_config = FusionConfig.gated(d_local=48, d_global=encoder.config.dim)
    else:
        if not preset:
            raise click.UsageError("--preset is required with --mechanism mhca")
        fusion_config = FusionConfig.mhca(preset, d_local=48,
                                          d_global=encoder.config.dim)
    rows, n_runs = lowdata_sweep(
        dataset, encoder, fraction_list, seed_list, fusion_config,
        arch=arch, point=parse_point(point), kernel=PoolKernel.parse(kernel),
        base_config=TrainConfig(epochs=epochs),
        work_dir=out_dir / "cells",
    )
    header = ("fraction\tseed\tbaseline_overall\tbaseline_corrupted\t"
              "fused_overall\tfused_corrupted\tgap\n")
    lines = [header] + [
        f"{r.fraction:g}\t{r.seed}\t{r.baseline_overall:.6f}\t"
        f"{r.baseline_corrupted:.6f}\t{r.fused_overall:.6f}\t"
        f"{r.fused_corrupted:.6f}\t{r.gap:.6f}\n"
        for r in rows
    ]
    (out_dir / "rows.tsv").write_text("".join(lines))
    from scenefuse.plotting import plot_lowdata
    from scenefuse.trainer.sweep import mean_gap_by_fraction

    plot_lowdata(rows, out_dir / "lowdata.png")
    for fraction, gap in mean_gap_by_fraction(rows).items():
        click.echo(f"fraction {fraction:g}: mean corrupted-accuracy gap {gap:+.4f}")
    click.echo(f"{n_runs} training runs")
    write_stamp(out_dir, cfg, [out_dir / "rows.tsv"])
    click.echo(f"wrote {out_dir / 'rows.tsv'}")
    return EXIT_OK


@cli.command("flops")
@click.option("--mechanism", type=click.Choice(("gated", "mhca")), required=True)
@click.option("--preset", type=click.Choice(("tiny", "mini", "small")), default=None)
@click.option("--d-local", type=int, default=48, show_default=True)
@click.option("--d-global", type=int, default=64, show_default=True)
@click.option("--n-local", type=int, required=True)
@click.option("--n-global", type=int, required=True)
def flops_cmd(mechanism, preset, d_local, d_global, n_local, n_global):
    """Print parameter and FLOP counts for a fusion configuration."""
    if mechanism == "gated":
        config = FusionConfig.gated(d_local=d_local, d_global=d_global)
    else:
        if not preset:
            raise click.UsageError("--preset is required with --mechanism mhca")
        config = FusionConfig.mhca(preset, d_local=d_local, d_global=d_global)
    mas = count_multiply_adds(config, n_local, n_global)
    click.echo("flavor\tparams\tmultiply_adds\tflops")
    click.echo(f"{config.flavor}\t{count_params(config)}\t{mas}\t"
               f"{estimate_flops(config, n_local, n_global)}")
    return EXIT_OK


@cli.command("plot")
@click.option("--records", "records_path", required=True, metavar="JSONL")
@click.option("--kind", type=click.Choice(("alpha", "curves")), required=True)
@click.option("--out-file", required=True, metavar="PNG")
def plot_cmd(records_path, kind, out_file):
    """Re-render a figure from a training records file."""
    path = _require(Path(records_path), "records file",
                    "pretrain-recognizer (or finetune)")
    record = RunRecord.load(path)
    from scenefuse import plotting

    if kind == "alpha":
        plotting.plot_alpha_trajectory(record, out_file)
    else:
        plotting.plot_training_curves(record, out_file)
    click.echo(f"wrote {out_file}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    """Entry point mapping failures onto the documented exit codes."""
    try:
        result = cli.main(args=argv, standalone_mode=False)
        return result if isinstance(result, int) else EXIT_OK
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except click.Abort:
        click.echo("aborted", err=True)
        return EXIT_USAGE
    except SceneFuseError as exc:
        click.echo(f"error: {exc}", err=True)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
