"""STFT / mel frontend and phase-rotation augmentation.

Frame arithmetic is fixed to reflect padding of (fft_size - hop) / 2 samples
per side with non-centered framing, so a 4 s clip at 22050 Hz (88200 samples)
maps to exactly 344 frames with fft 1024 / hop 256.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import torch
import torch.nn.functional as F

from .config import GlobalConfig
from .errors import SpectralError


@dataclass(frozen=True)
class SpectrogramConfig:
    fft_size: int = 1024
    hop: int = 256
    win_size: int = 1024
    mel_bands: int = 80
    sample_rate: int = 22050
    mel_fmin: float = 0.0
    mel_fmax: float = 8000.0
    log_floor: float = 1e-5

    def __post_init__(self):
        if not (self.fft_size > self.hop > 0):
            raise SpectralError(f"need fft_size > hop > 0, got {self.fft_size}/{self.hop}")
        if self.mel_bands < 1:
            raise SpectralError("mel_bands must be >= 1")

    @classmethod
    def from_global(cls, cfg: GlobalConfig) -> "SpectrogramConfig":
        return cls(
            fft_size=cfg.fft_size,
            hop=cfg.hop,
            win_size=cfg.win_size,
            mel_bands=cfg.mel_bands,
            sample_rate=cfg.sample_rate,
            mel_fmin=cfg.mel_fmin,
            mel_fmax=cfg.mel_fmax,
            log_floor=cfg.mel_log_floor,
        )

    @property
    def pad(self) -> int:
        return (self.fft_size - self.hop) // 2

    @property
    def freq_bins(self) -> int:
        return self.fft_size // 2 + 1


def frame_count(num_samples: int, cfg: SpectrogramConfig) -> int:
    """Number of STFT frames produced for `num_samples` input samples."""
    if num_samples < 1:
        raise SpectralError("num_samples must be >= 1")
    padded = num_samples + 2 * cfg.pad
    if padded < cfg.fft_size:
        raise SpectralError(
            f"input too short: {num_samples} samples pad to {padded} < fft {cfg.fft_size}"
        )
    return (padded - cfg.fft_size) // cfg.hop + 1


def _as_batch(wave) -> tuple[torch.Tensor, bool]:
    if isinstance(wave, np.ndarray):
        wave = torch.from_numpy(np.ascontiguousarray(wave, dtype=np.float32))
    if wave.dim() == 1:
        return wave.unsqueeze(0), True
    if wave.dim() == 2:
        return wave, False
    raise SpectralError(f"expected 1-D or 2-D waveform, got shape {tuple(wave.shape)}")


def _window(cfg: SpectrogramConfig, device) -> torch.Tensor:
    return torch.hann_window(cfg.win_size, device=device)


def linear_spectrogram(wave, cfg: SpectrogramConfig) -> torch.Tensor:
    """Magnitude STFT, shape (..., fft_size/2+1, frames)."""
    x, squeeze = _as_batch(wave)
    if not torch.isfinite(x).all():
        raise SpectralError("waveform contains non-finite values")
    if x.size(-1) <= cfg.pad:
        raise SpectralError(
            f"input too short for reflect padding: {x.size(-1)} <= {cfg.pad}"
        )
    frame_count(x.size(-1), cfg)  # raises if the padded signal is shorter than one frame
    x = F.pad(x.unsqueeze(1), (cfg.pad, cfg.pad), mode="reflect").squeeze(1)
    spec = torch.stft(
        x,
        cfg.fft_size,
        hop_length=cfg.hop,
        win_length=cfg.win_size,
        window=_window(cfg, x.device),
        center=False,
        onesided=True,
        return_complex=True,
    )
    mag = spec.abs()
    return mag.squeeze(0) if squeeze else mag


def mel_filterbank(cfg: SpectrogramConfig) -> np.ndarray:
    """Slaney-style triangular mel filterbank, shape (mel_bands, fft_size/2+1)."""
    if cfg.mel_fmin >= cfg.mel_fmax:
        raise SpectralError("mel_fmin must be < mel_fmax")

    def hz_to_mel(f):
        f = np.asarray(f, dtype=np.float64)
        mel = f / (200.0 / 3.0)
        log_region = f >= 1000.0
        logstep = np.log(6.4) / 27.0
        mel = np.where(log_region, 15.0 + np.log(np.maximum(f, 1e-12) / 1000.0) / logstep, mel)
        return mel

    def mel_to_hz(m):
        m = np.asarray(m, dtype=np.float64)
        f = m * (200.0 / 3.0)
        log_region = m >= 15.0
        logstep = np.log(6.4) / 27.0
        return np.where(log_region, 1000.0 * np.exp(logstep * (m - 15.0)), f)

    fft_freqs = np.linspace(0.0, cfg.sample_rate / 2.0, cfg.freq_bins)
    mel_pts = np.linspace(hz_to_mel(cfg.mel_fmin), hz_to_mel(cfg.mel_fmax), cfg.mel_bands + 2)
    hz_pts = mel_to_hz(mel_pts)

    weights = np.zeros((cfg.mel_bands, cfg.freq_bins))
    fdiff = np.diff(hz_pts)
    ramps = hz_pts[:, None] - fft_freqs[None, :]
    for i in range(cfg.mel_bands):
        lower = -ramps[i] / fdiff[i]
        upper = ramps[i + 2] / fdiff[i + 1]
        weights[i] = np.maximum(0.0, np.minimum(lower, upper))
    # Slaney area normalization
    enorm = 2.0 / (hz_pts[2 : cfg.mel_bands + 2] - hz_pts[:cfg.mel_bands])
    weights *= enorm[:, None]
    return weights.astype(np.float32)


@lru_cache(maxsize=8)
def _filterbank_tensor(cfg: SpectrogramConfig) -> torch.Tensor:
    return torch.from_numpy(mel_filterbank(cfg))


def mel_spectrogram(wave, cfg: SpectrogramConfig) -> torch.Tensor:
    """Log mel spectrogram with floor log_floor, shape (..., mel_bands, frames)."""
    return mel_from_linear(linear_spectrogram(wave, cfg), cfg)


def mel_from_linear(mag: torch.Tensor, cfg: SpectrogramConfig) -> torch.Tensor:
    fb = _filterbank_tensor(cfg).to(dtype=mag.dtype, device=mag.device)
    return torch.log(torch.clamp(torch.matmul(fb, mag), min=cfg.log_floor))


def rotate_phase(wave, phi0, mu, cfg: SpectrogramConfig) -> torch.Tensor:
    """Apply the per-bin rotation phi(k) = phi0 + 2*pi*mu*k/K in the STFT domain.

    phi0 and mu are scalars or per-item tensors; K is the number of rfft bins.
    The rotation leaves magnitude spectra (nearly) untouched; the linear term
    acts as a small fractional time shift.
    """
    x, squeeze = _as_batch(wave)
    if not torch.isfinite(x).all():
        raise SpectralError("waveform contains non-finite values")
    n = x.size(-1)
    phi0 = torch.as_tensor(phi0, dtype=x.dtype).reshape(-1)
    mu = torch.as_tensor(mu, dtype=x.dtype).reshape(-1)
    if phi0.numel() == 1:
        phi0 = phi0.expand(x.size(0))
    if mu.numel() == 1:
        mu = mu.expand(x.size(0))
    win = _window(cfg, x.device)
    spec = torch.stft(
        x,
        cfg.fft_size,
        hop_length=cfg.hop,
        win_length=cfg.win_size,
        window=win,
        center=True,
        onesided=True,
        return_complex=True,
    )
    k = torch.arange(cfg.freq_bins, dtype=x.dtype, device=x.device)
    phi = phi0[:, None] + 2.0 * math.pi * mu[:, None] * k[None, :] / cfg.freq_bins
    spec = spec * torch.exp(1j * phi)[:, :, None]
    out = torch.istft(
        spec,
        cfg.fft_size,
        hop_length=cfg.hop,
        win_length=cfg.win_size,
        window=win,
        center=True,
        length=n,
    )
    return out.squeeze(0) if squeeze else out


def phase_aug(
    wave,
    strength: float,
    cfg: SpectrogramConfig,
    shifts=( -2, -1, 0, 1, 2),
    generator: torch.Generator | None = None,
):
    """Random phase rotation: phi0 ~ U(-strength, strength), mu drawn from `shifts`.

    strength == 0 forces phi0 = 0 and mu = 0 (pure STFT round trip).
    """
    if strength < 0:
        raise SpectralError("strength must be >= 0")
    x, squeeze = _as_batch(wave)
    b = x.size(0)
    if strength == 0:
        phi0 = torch.zeros(b)
        mu = torch.zeros(b)
    else:
        phi0 = (torch.rand(b, generator=generator) * 2.0 - 1.0) * strength
        idx = torch.randint(len(shifts), (b,), generator=generator)
        mu = torch.tensor([float(shifts[i]) for i in idx])
    out = rotate_phase(x, phi0, mu, cfg)
    return out.squeeze(0) if squeeze else out
