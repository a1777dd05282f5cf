"""Global configuration: every tunable named by the pipeline lives here.

A single frozen dataclass is the source of truth.  Values can come from a
YAML file, CLI overrides, or the built-in defaults, with precedence
CLI flag > config file > default.  The hash of the canonical JSON dump
identifies a configuration in checkpoints and run manifests.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass

import yaml

from .errors import ConfigError

CONFIG_FORMAT_VERSION = 1


@dataclass(frozen=True)
class GlobalConfig:
    # audio frontend
    sample_rate: int = 22050
    clip_seconds: float = 4.0
    fft_size: int = 1024
    hop: int = 256
    win_size: int = 1024
    mel_bands: int = 80
    mel_fmin: float = 0.0
    mel_fmax: float = 8000.0
    mel_log_floor: float = 1e-5

    # categories
    num_categories: int = 7

    # latent width; also the category embedding and condition-grid width
    hidden_channels: int = 192

    # posterior encoder (gated dilated conv stack)
    posterior_layers: int = 16
    posterior_kernel: int = 5
    posterior_dilation: int = 1

    # invertible coupling flow
    flow_blocks: int = 4
    flow_layers: int = 4
    flow_kernel: int = 5
    flow_dilation: int = 1

    # frame prior network
    fpn_layers: int = 6
    fpn_kernel: int = 35
    leaky_slope: float = 0.2

    # waveform decoder
    upsample_rates: tuple[int, ...] = (8, 8, 2, 2)
    upsample_kernels: tuple[int, ...] = (16, 16, 4, 4)
    upsample_channels: int = 512
    resblock_kernels: tuple[int, ...] = (3, 7, 11)
    resblock_dilations: tuple[tuple[int, ...], ...] = ((1, 3, 5), (1, 3, 5), (1, 3, 5))
    projection_kernels: tuple[int, ...] = (5, 7, 11)

    # discriminators
    mpd_periods: tuple[int, ...] = (2, 3, 5, 7, 11)
    mpd_channels: tuple[int, ...] = (32, 128, 512, 1024)
    combd_channels: tuple[int, ...] = (16, 64, 256, 1024, 1024, 1024)
    combd_kernels: tuple[tuple[int, ...], ...] = (
        (7, 11, 11, 11, 11, 5),
        (11, 21, 21, 21, 21, 5),
        (15, 41, 41, 41, 41, 5),
    )
    combd_strides: tuple[int, ...] = (1, 1, 4, 4, 4, 1)
    combd_groups: tuple[int, ...] = (1, 4, 16, 64, 256, 1)
    sbd_bands: int = 16
    sbd_band_ranges: tuple[tuple[int, int], ...] = ((0, 6), (0, 11), (0, 16), (8, 16))
    sbd_filters: tuple[int, ...] = (64, 128, 256, 256)
    sbd_kernels: tuple[int, ...] = (7, 5, 3, 5)
    sbd_strides: tuple[int, ...] = (1, 1, 3, 3)

    # phase augmentation before the discriminators
    phaseaug_strength: float = math.pi
    phaseaug_shifts: tuple[int, ...] = (-2, -1, 0, 1, 2)

    # loss weights
    lambda_mel: float = 45.0
    lambda_kl: float = 1.0
    lambda_fm: float = 2.0
    lambda_stat: float = 1.0

    # training
    batch_size: int = 16
    segment_frames: int = 32
    learning_rate: float = 2e-4
    adam_betas: tuple[float, float] = (0.8, 0.99)
    lr_decay: float = 0.999875
    seed: int = 1234

    # inference / evaluation
    noise_scale: float = 0.8
    eval_clips_per_category: int = 100

    def __post_init__(self) -> None:
        if not (self.fft_size > self.hop > 0):
            raise ConfigError(f"need fft_size > hop > 0, got {self.fft_size}/{self.hop}")
        if self.mel_bands < 1:
            raise ConfigError("mel_bands must be >= 1")
        if math.prod(self.upsample_rates) != self.hop:
            raise ConfigError(
                f"product of upsample_rates {self.upsample_rates} must equal hop {self.hop}"
            )
        if len(self.upsample_rates) != len(self.upsample_kernels):
            raise ConfigError("upsample_rates and upsample_kernels lengths differ")
        if self.num_categories < 1:
            raise ConfigError("num_categories must be >= 1")
        if self.clip_seconds <= 0:
            raise ConfigError("clip_seconds must be positive")
        if self.phaseaug_strength < 0:
            raise ConfigError("phaseaug_strength must be >= 0")

    @property
    def clip_samples(self) -> int:
        return int(round(self.sample_rate * self.clip_seconds))

    def replace(self, **overrides) -> "GlobalConfig":
        unknown = set(overrides) - {f.name for f in dataclasses.fields(self)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return dataclasses.replace(self, **_tuplify(overrides))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "GlobalConfig":
        return cls().replace(**values)

    @classmethod
    def from_yaml(cls, path) -> "GlobalConfig":
        with open(path, "r", encoding="utf-8") as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {path} must contain a mapping")
        return cls.from_dict(loaded)

    def to_yaml(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=True)


def _tuplify(values: dict) -> dict:
    """Convert lists from YAML/JSON into the tuples the dataclass expects."""

    def conv(v):
        if isinstance(v, list):
            return tuple(conv(x) for x in v)
        return v

    return {k: conv(v) for k, v in values.items()}


def config_hash(cfg: GlobalConfig) -> str:
    """Short digest of the canonical config dump; key order does not matter."""
    canonical = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
