"""Inference: category id + seed + noise scale -> fixed-length waveform.

Per-clip seeds in batch generation are base_seed + index, recorded in a
manifest CSV, so evaluation sets are reproducible file for file.
"""

from __future__ import annotations

import csv
from pathlib import Path

import torch

from .config import GlobalConfig
from .dataset import AudioClip, write_wav
from .errors import FoleygenError, ModelError
from .model import FoleySynthesizer
from .trainer import CheckpointMeta, load_model


class SynthesisSession:
    """A loaded model ready to generate clips; read-only and reusable."""

    def __init__(self, model: FoleySynthesizer, cfg: GlobalConfig, step: int = 0):
        self.model = model
        self.cfg = cfg
        self.step = step

    @classmethod
    def from_checkpoint(cls, ckpt, cfg: GlobalConfig | None = None) -> "SynthesisSession":
        path = ckpt.path if isinstance(ckpt, CheckpointMeta) else ckpt
        model, stored_cfg, step = load_model(path, cfg)
        return cls(model, stored_cfg, step)

    def generate(
        self,
        category_id: int,
        noise_scale: float | None = None,
        seed: int = 0,
        style: torch.Tensor | None = None,
    ) -> AudioClip:
        cfg = self.cfg
        if not 0 <= int(category_id) < cfg.num_categories:
            raise ModelError(
                f"category id {category_id} out of range 0..{cfg.num_categories - 1}"
            )
        if noise_scale is None:
            noise_scale = cfg.noise_scale
        gen = torch.Generator()
        gen.manual_seed(int(seed))
        self.model.eval()
        with torch.inference_mode():
            wave = self.model.infer(int(category_id), float(noise_scale), gen, style=style)
        samples = wave.clamp(-1.0, 1.0).numpy()
        return AudioClip(
            samples=samples,
            sample_rate=cfg.sample_rate,
            category_id=int(category_id),
            source_path=f"generated:cat{category_id}:seed{seed}:scale{noise_scale}",
        )


def generate(
    category_id: int,
    noise_scale: float,
    seed: int,
    ckpt,
    cfg: GlobalConfig | None = None,
    style: torch.Tensor | None = None,
) -> AudioClip:
    """One-shot generation from a checkpoint file or CheckpointMeta."""
    session = SynthesisSession.from_checkpoint(ckpt, cfg)
    return session.generate(category_id, noise_scale, seed, style=style)


def batch_generate(
    category_id: int,
    count: int,
    noise_scale: float,
    base_seed: int,
    ckpt,
    out_dir,
    cfg: GlobalConfig | None = None,
    session: SynthesisSession | None = None,
) -> list[Path]:
    """Write `count` WAV files with per-index seeds base_seed + i, plus a manifest."""
    if count < 1:
        raise FoleygenError(f"count must be >= 1, got {count}")
    if session is None:
        session = SynthesisSession.from_checkpoint(ckpt, cfg)
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise FoleygenError(f"cannot create output directory {out_dir}: {exc}") from exc

    paths: list[Path] = []
    manifest_rows = []
    for i in range(count):
        seed = base_seed + i
        clip = session.generate(category_id, noise_scale, seed)
        name = f"cat{category_id}_seed{seed}.wav"
        path = out_dir / name
        write_wav(path, clip.samples, clip.sample_rate)
        paths.append(path)
        manifest_rows.append([name, category_id, seed, noise_scale, session.step])

    manifest = out_dir / "manifest.csv"
    with open(manifest, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["filename", "category_id", "seed", "noise_scale", "ckpt_step"])
        writer.writerows(manifest_rows)
    return paths
