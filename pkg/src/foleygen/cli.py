"""Command-line entry point.

Config precedence is CLI --set overrides > --config file > built-in defaults;
every run writes a manifest (config hash, seed, versions) beside its outputs.
Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import functools
import json
import sys
import time
from pathlib import Path

import click
import yaml

from . import __version__
from .config import GlobalConfig, config_hash
from .dataset import (
    CategoryTable,
    scan_dataset,
    write_histogram_csv,
    write_report,
)
from .errors import FoleygenError


def _load_config(config_path, overrides) -> GlobalConfig:
    cfg = GlobalConfig.from_yaml(config_path) if config_path else GlobalConfig()
    if overrides:
        values = {}
        for item in overrides:
            if "=" not in item:
                raise click.UsageError(f"--set expects KEY=VALUE, got {item!r}")
            key, raw = item.split("=", 1)
            values[key.strip()] = yaml.safe_load(raw)
        cfg = cfg.replace(**values)
    return cfg


def _write_manifest(out_path, cfg: GlobalConfig, extra: dict | None = None) -> None:
    import torch

    out_path = Path(out_path)
    target = out_path if out_path.is_dir() else out_path.parent
    target.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "versions": {"foleygen": __version__, "torch": torch.__version__},
        "created_at": time.time(),
    }
    manifest.update(extra or {})
    with open(target / "run_manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)


def _fail_cleanly(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except FoleygenError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
        except Exception as exc:  # one-line diagnostic, per the CLI contract
            click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
            sys.exit(1)

    return wrapper


config_option = click.option("--config", "config_path", type=click.Path(exists=True), default=None,
                             help="YAML config file.")
set_option = click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
                          help="Override a config key (repeatable).")


@click.group()
@click.version_option(__version__)
def main():
    """Category-to-sound synthesis, training, and evaluation tools."""


@main.command("analyze-data")
@click.option("--root", required=True, type=click.Path(exists=True), help="Corpus root directory.")
@click.option("--out", "out_path", required=True, type=click.Path(), help="Report JSON path.")
@click.option("--manifest", type=click.Path(exists=True), default=None,
              help="CSV manifest (filename, category_id) overriding the directory layout.")
@click.option("--hist-csv", type=click.Path(), default=None, help="Also write histogram CSV here.")
@click.option("--bins", type=int, default=20, show_default=True)
@click.option("--threshold", type=float, default=0.0, show_default=True,
              help="Amplitude threshold for effective-length measurement.")
@config_option
@set_option
@_fail_cleanly
def analyze_data(root, out_path, manifest, hist_csv, bins, threshold, config_path, overrides):
    """Scan a WAV corpus and report counts, lengths, and length histograms."""
    cfg = _load_config(config_path, overrides)
    catalog = scan_dataset(
        root,
        manifest=manifest,
        expected_rate=cfg.sample_rate,
        clip_seconds=cfg.clip_seconds,
        threshold=threshold,
    )
    write_report(catalog, out_path)
    if hist_csv:
        write_histogram_csv(catalog, bins, hist_csv)
    _write_manifest(out_path, cfg, {"command": "analyze-data", "root": str(root)})
    click.echo(f"cataloged {catalog.total} clips -> {out_path}")


@main.command("train")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--checkpoint-steps", required=True,
              help="Comma-separated steps at which to write checkpoints, e.g. 270000,290000.")
@click.option("--total-steps", type=int, default=None,
              help="Train past the last checkpoint up to this step.")
@click.option("--manifest", type=click.Path(exists=True), default=None)
@click.option("--resume/--no-resume", default=True, show_default=True)
@click.option("--progress/--no-progress", default=True, show_default=True)
@config_option
@set_option
@_fail_cleanly
def train(data_dir, out_dir, checkpoint_steps, total_steps, manifest, resume, progress,
          config_path, overrides):
    """Train the synthesizer, checkpointing at the requested steps."""
    from .trainer import ClipDataset, run_training

    cfg = _load_config(config_path, overrides)
    steps = [int(s) for s in str(checkpoint_steps).split(",") if s.strip()]
    data = ClipDataset.from_directory(data_dir, cfg, manifest=manifest)
    _write_manifest(out_dir, cfg, {"command": "train", "checkpoint_steps": steps})
    metas = run_training(cfg, data, steps, out_dir, total_steps=total_steps,
                         resume=resume, progress=progress)
    for meta in metas:
        click.echo(f"checkpoint step {meta.step}: {meta.path}")


@main.command("generate")
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--category", required=True, type=int)
@click.option("--n", "count", type=int, default=1, show_default=True)
@click.option("--noise-scale", type=float, default=None, help="Defaults to the config value.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@_fail_cleanly
def generate_cmd(ckpt, category, count, noise_scale, seed, out_dir):
    """Generate clips for one category from a checkpoint."""
    from .synthesis import SynthesisSession, batch_generate

    session = SynthesisSession.from_checkpoint(ckpt)
    scale = session.cfg.noise_scale if noise_scale is None else noise_scale
    paths = batch_generate(category, count, scale, seed, ckpt, out_dir, session=session)
    _write_manifest(out_dir, session.cfg,
                    {"command": "generate", "ckpt": str(ckpt), "files": len(paths)})
    click.echo(f"wrote {len(paths)} files to {out_dir}")


def _make_embedder(kind, path, dim, cfg):
    from .evaluation import MelStatsEmbedder, TorchModuleEmbedder
    from .spectral import SpectrogramConfig

    if kind == "mel":
        return MelStatsEmbedder(SpectrogramConfig.from_global(cfg))
    if path is None:
        raise click.UsageError("--embedder external requires --embedder-path")
    return TorchModuleEmbedder(path, dim)


@main.command("eval-fad")
@click.option("--real", "real_dir", required=True, type=click.Path(exists=True))
@click.option("--gen", "gen_dir", required=True, type=click.Path(exists=True))
@click.option("--embedder", type=click.Choice(["mel", "external"]), default="mel", show_default=True)
@click.option("--embedder-path", type=click.Path(exists=True), default=None)
@click.option("--embedder-dim", type=int, default=128, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@config_option
@set_option
@_fail_cleanly
def eval_fad(real_dir, gen_dir, embedder, embedder_path, embedder_dim, out_path,
             config_path, overrides):
    """Per-category Frechet audio distance between two corpora."""
    from .evaluation import fad_report

    cfg = _load_config(config_path, overrides)
    emb = _make_embedder(embedder, embedder_path, embedder_dim, cfg)
    report = fad_report(real_dir, gen_dir, emb,
                        expected_rate=cfg.sample_rate, clip_seconds=cfg.clip_seconds)
    report.save(out_path)
    _write_manifest(out_path, cfg, {"command": "eval-fad"})
    click.echo(f"average FAD {report.average:.4f} -> {out_path}")


@main.command("grid-search")
@click.option("--ckpts", required=True, help="Comma-separated checkpoint files.")
@click.option("--real", "real_dir", required=True, type=click.Path(exists=True))
@click.option("--gen-root", required=True, type=click.Path(),
              help="Where generated evaluation sets are written.")
@click.option("--out", "out_dir", required=True, type=click.Path(),
              help="Directory receiving one report JSON per (ckpt, scale).")
@click.option("--clips-per-category", type=int, default=None)
@click.option("--embedder", type=click.Choice(["mel", "external"]), default="mel", show_default=True)
@click.option("--embedder-path", type=click.Path(exists=True), default=None)
@click.option("--embedder-dim", type=int, default=128, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@config_option
@set_option
@_fail_cleanly
def grid_search_cmd(ckpts, real_dir, gen_root, out_dir, clips_per_category, embedder,
                    embedder_path, embedder_dim, seed, config_path, overrides):
    """Evaluate checkpoints over the coarse and fine noise-scale grids."""
    from .evaluation import grid_search
    from .synthesis import SynthesisSession, batch_generate

    cfg = _load_config(config_path, overrides)
    emb = _make_embedder(embedder, embedder_path, embedder_dim, cfg)
    ckpt_paths = [Path(p.strip()) for p in ckpts.split(",") if p.strip()]
    sessions = {p: SynthesisSession.from_checkpoint(p) for p in ckpt_paths}
    count = clips_per_category or cfg.eval_clips_per_category
    gen_root = Path(gen_root)
    table = CategoryTable.default()

    def gen_fn(ckpt_path, scale):
        session = sessions[ckpt_path]
        dest = gen_root / f"step{session.step}_scale{scale}"
        for cid, name in table.entries:
            batch_generate(cid, count, scale, seed, ckpt_path,
                           dest / name, session=session)
        return dest

    class _CkptHandle:
        def __init__(self, path, step):
            self.path, self.step = path, step

    handles = [_CkptHandle(p, sessions[p].step) for p in ckpt_paths]
    reports = grid_search(handles, lambda h, s: gen_fn(h.path, s), real_dir, emb,
                          table=table, expected_rate=cfg.sample_rate,
                          clip_seconds=cfg.clip_seconds)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for report in reports:
        report.save(out_dir / f"report_step{report.ckpt_step}_scale{report.noise_scale}.json")
    _write_manifest(out_dir, cfg, {"command": "grid-search", "reports": len(reports)})
    click.echo(f"wrote {len(reports)} reports to {out_dir}")


@main.command("ensemble")
@click.option("--reports", "reports_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@_fail_cleanly
def ensemble_cmd(reports_dir, out_path):
    """Pick the best (checkpoint, noise scale) per category from saved reports."""
    from .evaluation import FadReport, build_ensemble

    paths = sorted(Path(reports_dir).glob("*.json"))
    reports = [FadReport.load(p) for p in paths if p.name != "run_manifest.json"]
    if not reports:
        raise FoleygenError(f"no report JSON files in {reports_dir}")
    spec = build_ensemble(reports)
    spec.save(out_path)
    click.echo(f"ensemble average {spec.average():.4f} -> {out_path}")


@main.command("embed-similarity")
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@_fail_cleanly
def embed_similarity(ckpt, out_path):
    """Cosine similarities between trained category embeddings."""
    from .evaluation import embedding_similarity_report, write_similarity_csv
    from .trainer import load_model

    model, cfg, _step = load_model(ckpt)
    sim = embedding_similarity_report(model.embedding.weight)
    names = CategoryTable.default().names if cfg.num_categories == 7 else [
        f"category{i}" for i in range(cfg.num_categories)
    ]
    write_similarity_csv(sim, names, out_path)
    _write_manifest(out_path, cfg, {"command": "embed-similarity"})
    click.echo(f"wrote similarity matrix -> {out_path}")


if __name__ == "__main__":
    main()
