import math

import numpy as np
import pytest
import torch

from foleygen.config import GlobalConfig
from foleygen.dataset import write_wav

TINY_OVERRIDES = dict(
    sample_rate=8000,
    clip_seconds=1.0,
    hidden_channels=32,
    posterior_layers=4,
    flow_blocks=2,
    flow_layers=2,
    fpn_layers=3,
    fpn_kernel=11,
    upsample_channels=64,
    resblock_kernels=(3,),
    resblock_dilations=((1, 3),),
    mpd_periods=(2, 3),
    mpd_channels=(8, 16, 32),
    combd_channels=(8, 16, 32),
    combd_kernels=((7, 11, 5), (11, 21, 5), (15, 41, 5)),
    combd_strides=(1, 4, 1),
    combd_groups=(1, 4, 1),
    sbd_band_ranges=((0, 6), (0, 11)),
    sbd_filters=(8, 16),
    sbd_kernels=(7, 5),
    sbd_strides=(1, 3),
    batch_size=4,
    segment_frames=8,
    seed=7,
)


def tiny_config(**overrides) -> GlobalConfig:
    values = dict(TINY_OVERRIDES)
    values.update(overrides)
    return GlobalConfig(**values)


@pytest.fixture
def tiny_cfg() -> GlobalConfig:
    return tiny_config()


def tone_clip(cfg: GlobalConfig, category: int, seed: int = 0) -> np.ndarray:
    """Category-flavored synthetic clip: tone with an envelope plus light noise."""
    rng = np.random.default_rng(seed * 7919 + category)
    t = np.arange(cfg.clip_samples) / cfg.sample_rate
    f = 120.0 * (category + 1)
    env = np.exp(-3.0 * t) if category % 2 == 0 else np.minimum(1.0, 4.0 * t)
    x = 0.6 * env * np.sin(2 * np.pi * f * t) + 0.02 * rng.standard_normal(cfg.clip_samples)
    return np.clip(x, -1.0, 1.0).astype(np.float32)


def make_corpus(root, cfg: GlobalConfig, per_category: int, names, seed: int = 0):
    """Write a small per-category-subdirectory corpus; returns written paths."""
    paths = []
    for cid, name in enumerate(names):
        sub = root / name
        sub.mkdir(parents=True, exist_ok=True)
        for k in range(per_category):
            clip = tone_clip(cfg, cid, seed=seed + k)
            path = sub / f"{name.lower()}_{k:03d}.wav"
            write_wav(path, clip, cfg.sample_rate)
            paths.append(path)
    return paths


def harmonic_signal(n: int, sr: int, generator: torch.Generator, tones: int = 12) -> torch.Tensor:
    """Random multi-sine with a light noise floor; audio-like test material."""
    t = torch.arange(n) / sr
    x = torch.zeros(n)
    for _ in range(tones):
        f = 60.0 + torch.rand(1, generator=generator).item() * (0.4 * sr - 60.0)
        a = 0.2 + torch.rand(1, generator=generator).item()
        ph = torch.rand(1, generator=generator).item() * 2 * math.pi
        x = x + a * torch.sin(2 * math.pi * f * t + ph)
    x = x / x.abs().max()
    return x + 0.01 * torch.randn(n, generator=generator)
