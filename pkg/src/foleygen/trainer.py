"""Training loop: batch assembly, alternating updates, checkpointing.

Batches are drawn with replacement using a per-step derived seed, and all
model-internal randomness comes from one generator whose state rides along in
checkpoints, so an interrupted run resumes bit-identically.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from tqdm import tqdm

from .config import GlobalConfig, config_hash
from .dataset import AudioClip
from .errors import CheckpointError, TrainingError
from .gan import DiscriminatorSet, MultiScaleOutputs, adversarial_losses, feature_matching_loss
from .losses import LossReport, LossWeights, kl_flowed, mel_loss, total_generator_loss
from .model import FoleySynthesizer
from .prior import batch_stat_loss
from .spectral import linear_spectrogram, mel_from_linear, rotate_phase

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class CheckpointMeta:
    step: int
    config_hash: str
    path: str
    created_at: float


class ClipDataset:
    """Fixed-length clips with category ids; eager arrays or lazy loaders."""

    def __init__(self, items):
        self._items = list(items)

    @classmethod
    def from_clips(cls, clips: list[AudioClip]) -> "ClipDataset":
        return cls([(c.samples, c.category_id) for c in clips])

    @classmethod
    def from_arrays(cls, waves, ids) -> "ClipDataset":
        return cls(list(zip(waves, ids)))

    @classmethod
    def from_directory(cls, root, cfg: GlobalConfig, table=None, manifest=None) -> "ClipDataset":
        """Lazy dataset over a corpus layout; clips load per batch."""
        from .dataset import list_assignments, load_clip

        items = []
        for path, cid in list_assignments(root, table, manifest):
            items.append(
                (
                    (lambda p=path: load_clip(p, cfg.sample_rate, cfg.clip_seconds).samples),
                    cid,
                )
            )
        return cls(items)

    def __len__(self) -> int:
        return len(self._items)

    def get(self, idx: int):
        samples, cid = self._items[idx]
        if callable(samples):
            samples = samples()
        return np.asarray(samples, dtype=np.float32), int(cid)


def _batch_indices(seed: int, step: int, n: int, batch: int) -> torch.Tensor:
    """Batch composition depends only on (seed, step): resume-safe sampling."""
    g = torch.Generator()
    g.manual_seed(((seed & 0xFFFFFFFF) << 20) ^ (step + 1))
    return torch.randint(n, (batch,), generator=g)


class Trainer:
    def __init__(self, cfg: GlobalConfig, adversarial: bool = True):
        self.cfg = cfg
        self.adversarial = adversarial
        torch.manual_seed(cfg.seed)
        self.model = FoleySynthesizer(cfg)
        self.disc = DiscriminatorSet(cfg)
        self.weights = LossWeights(
            mel=cfg.lambda_mel, kl=cfg.lambda_kl, fm=cfg.lambda_fm, stat=cfg.lambda_stat
        )
        self.optim_g = torch.optim.AdamW(
            self.model.parameters(), lr=cfg.learning_rate, betas=cfg.adam_betas, eps=1e-9
        )
        self.optim_d = torch.optim.AdamW(
            self.disc.parameters(), lr=cfg.learning_rate, betas=cfg.adam_betas, eps=1e-9
        )
        self.sched_g = torch.optim.lr_scheduler.ExponentialLR(self.optim_g, cfg.lr_decay)
        self.sched_d = torch.optim.lr_scheduler.ExponentialLR(self.optim_d, cfg.lr_decay)
        self.generator = torch.Generator()
        self.generator.manual_seed(cfg.seed)
        self.step = 0

    @property
    def spec_cfg(self):
        return self.model.spec_cfg

    def _slice_latents(self, z: torch.Tensor, waves: torch.Tensor):
        """Pick one random latent window per item plus the matching samples."""
        cfg = self.cfg
        frames = z.size(-1)
        seg = min(cfg.segment_frames, frames)
        max_start = frames - seg
        if max_start > 0:
            starts = torch.randint(0, max_start + 1, (z.size(0),), generator=self.generator)
        else:
            starts = torch.zeros(z.size(0), dtype=torch.long)
        z_slices = []
        wave_slices = []
        for b, s in enumerate(starts.tolist()):
            z_slices.append(z[b, :, s : s + seg])
            w0 = s * cfg.hop
            wave_slices.append(waves[b, w0 : w0 + seg * cfg.hop])
        return torch.stack(z_slices), torch.stack(wave_slices)

    def _phaseaug_params(self, batch: int):
        cfg = self.cfg
        if cfg.phaseaug_strength <= 0:
            return None
        phi0 = (torch.rand(batch, generator=self.generator) * 2.0 - 1.0) * cfg.phaseaug_strength
        idx = torch.randint(len(cfg.phaseaug_shifts), (batch,), generator=self.generator)
        mu = torch.tensor([float(cfg.phaseaug_shifts[i]) for i in idx])
        return phi0, mu

    def _augment(self, wave: torch.Tensor, params) -> torch.Tensor:
        if params is None:
            return wave
        phi0, mu = params
        flat = wave.squeeze(1) if wave.dim() == 3 else wave
        out = rotate_phase(flat, phi0, mu, self.spec_cfg)
        return out.unsqueeze(1) if wave.dim() == 3 else out

    def train_step(self, waves, ids) -> LossReport:
        cfg = self.cfg
        waves = torch.as_tensor(np.asarray(waves), dtype=torch.float32)
        ids = torch.as_tensor(np.asarray(ids), dtype=torch.long)
        if waves.dim() != 2:
            raise TrainingError(f"expected (B, T) batch, got {tuple(waves.shape)}")
        if waves.size(0) < 2:
            raise TrainingError("batch size must be >= 2 (batch statistics are undefined)")
        if waves.size(1) != cfg.clip_samples:
            raise TrainingError(
                f"clips must have {cfg.clip_samples} samples, got {waves.size(1)}"
            )
        self.model.train()
        self.disc.train()

        spec = linear_spectrogram(waves, self.spec_cfg)
        g_vec = self.model.embedding(ids)
        z_q, mu_q, log_std_q = self.model.posterior(spec, g_vec, generator=self.generator)
        z_flowed, logdet = self.model.flow(z_q, g_vec)
        style, _ = self.model.prior.sap(z_q, queries=mu_q)
        stat = batch_stat_loss(style)
        mu_p, log_std_p = self.model.prior(g_vec, style)
        kl = kl_flowed(mu_q, log_std_q, z_flowed, logdet, mu_p, log_std_p)

        z_slice, wave_slice = self._slice_latents(z_q, waves)
        fake = self.model.decode(z_slice, g_vec)
        real_full = wave_slice.unsqueeze(1)

        if self.adversarial:
            aug = self._phaseaug_params(waves.size(0))
            real_aug = self._augment(real_full, aug) if aug is not None else None

            # discriminator pass on detached generator output
            self.optim_d.zero_grad()
            fake_detached = MultiScaleOutputs(
                fake.full.detach(),
                tuple((w.detach(), d) for w, d in fake.intermediates),
            )
            fake_aug_det = (
                self._augment(fake_detached.full, aug) if aug is not None else None
            )
            d_out = self.disc(real_full, fake_detached, real_aug, fake_aug_det)
            d_loss, _ = adversarial_losses(d_out.scores_real, d_out.scores_fake)
            d_loss.backward()
            self.optim_d.step()

            # generator pass against the updated discriminators
            self.optim_g.zero_grad()
            fake_aug = self._augment(fake.full, aug) if aug is not None else None
            g_out = self.disc(real_full, fake, real_aug, fake_aug)
            _, adv_g = adversarial_losses(g_out.scores_real, g_out.scores_fake)
            fm = feature_matching_loss(g_out.fmaps_real, g_out.fmaps_fake)
        else:
            self.optim_g.zero_grad()
            d_loss = torch.zeros(())
            adv_g = torch.zeros(())
            fm = torch.zeros(())

        mel_real = mel_from_linear(linear_spectrogram(wave_slice, self.spec_cfg), self.spec_cfg)
        mel_fake = mel_from_linear(
            linear_spectrogram(fake.full.squeeze(1), self.spec_cfg), self.spec_cfg
        )
        mel = mel_loss(mel_real, mel_fake)

        total = (
            self.weights.kl * kl
            + self.weights.mel * mel
            + adv_g
            + self.weights.fm * fm
            + self.weights.stat * stat
        )
        total.backward()
        self.optim_g.step()
        self.sched_g.step()
        if self.adversarial:
            self.sched_d.step()
        self.step += 1
        # raises TrainingError-grade diagnostics when any component went non-finite
        return total_generator_loss(kl, mel, adv_g, fm, stat, self.weights, adv_d=d_loss)

    # --- checkpointing -----------------------------------------------------

    def save_checkpoint(self, directory) -> CheckpointMeta:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / f"checkpoint_{self.step:08d}.pt"
        created = time.time()
        payload = {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "step": self.step,
            "config": self.cfg.to_dict(),
            "config_hash": config_hash(self.cfg),
            "model": self.model.state_dict(),
            "disc": self.disc.state_dict(),
            "optim_g": self.optim_g.state_dict(),
            "optim_d": self.optim_d.state_dict(),
            "sched_g": self.sched_g.state_dict(),
            "sched_d": self.sched_d.state_dict(),
            "rng": self.generator.get_state(),
            "created_at": created,
        }
        torch.save(payload, path)
        return CheckpointMeta(self.step, payload["config_hash"], str(path), created)

    @classmethod
    def load_checkpoint(cls, path, cfg: GlobalConfig | None = None) -> "Trainer":
        payload = _read_checkpoint(path, cfg)
        trainer = cls(GlobalConfig.from_dict(payload["config"]))
        trainer.model.load_state_dict(payload["model"])
        trainer.disc.load_state_dict(payload["disc"])
        trainer.optim_g.load_state_dict(payload["optim_g"])
        trainer.optim_d.load_state_dict(payload["optim_d"])
        trainer.sched_g.load_state_dict(payload["sched_g"])
        trainer.sched_d.load_state_dict(payload["sched_d"])
        trainer.generator.set_state(payload["rng"])
        trainer.step = int(payload["step"])
        return trainer


def _read_checkpoint(path, cfg: GlobalConfig | None):
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"no such checkpoint: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"could not read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise CheckpointError(f"{path} is not a checkpoint archive")
    if payload["format_version"] != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format {payload['format_version']}")
    if cfg is not None and config_hash(cfg) != payload["config_hash"]:
        raise CheckpointError(
            f"config hash mismatch: checkpoint {payload['config_hash']}, "
            f"requested {config_hash(cfg)}"
        )
    return payload


def load_model(path, cfg: GlobalConfig | None = None):
    """Load just the synthesizer for inference; returns (model, cfg, step)."""
    payload = _read_checkpoint(path, cfg)
    stored_cfg = GlobalConfig.from_dict(payload["config"])
    model = FoleySynthesizer(stored_cfg)
    model.load_state_dict(payload["model"])
    model.eval()
    return model, stored_cfg, int(payload["step"])


def latest_checkpoint(directory) -> Path | None:
    directory = Path(directory)
    if not directory.is_dir():
        return None
    candidates = sorted(directory.glob("checkpoint_*.pt"))
    return candidates[-1] if candidates else None


def run_training(
    cfg: GlobalConfig,
    data: ClipDataset,
    checkpoint_steps,
    out_dir,
    total_steps: int | None = None,
    resume: bool = True,
    adversarial: bool = True,
    progress: bool = False,
) -> list[CheckpointMeta]:
    """Train until the last requested step, checkpointing at each listed step."""
    if len(data) == 0:
        raise TrainingError("empty dataset")
    checkpoint_steps = sorted(set(int(s) for s in checkpoint_steps))
    if not checkpoint_steps and total_steps is None:
        raise TrainingError("need checkpoint_steps or total_steps")
    target = max(checkpoint_steps) if total_steps is None else max(total_steps, *(checkpoint_steps or [0]))

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    trainer = None
    metas: list[CheckpointMeta] = []
    if resume:
        latest = latest_checkpoint(out_dir)
        if latest is not None:
            trainer = Trainer.load_checkpoint(latest, cfg)
            trainer.adversarial = adversarial
            for s in checkpoint_steps:
                existing = out_dir / f"checkpoint_{s:08d}.pt"
                if s <= trainer.step and existing.exists():
                    metas.append(
                        CheckpointMeta(s, config_hash(cfg), str(existing), existing.stat().st_mtime)
                    )
    if trainer is None:
        trainer = Trainer(cfg, adversarial=adversarial)

    pending = [s for s in checkpoint_steps if s > trainer.step]
    steps_iter = range(trainer.step, target)
    if progress:
        steps_iter = tqdm(steps_iter, desc="train", initial=trainer.step, total=target)
    for _ in steps_iter:
        idx = _batch_indices(cfg.seed, trainer.step, len(data), cfg.batch_size)
        waves = []
        ids = []
        for i in idx.tolist():
            w, c = data.get(i)
            waves.append(w)
            ids.append(c)
        trainer.train_step(np.stack(waves), np.asarray(ids))
        if pending and trainer.step == pending[0]:
            metas.append(trainer.save_checkpoint(out_dir))
            pending.pop(0)
    return metas
