"""The assembled synthesizer: embedding, posterior, flow, prior, decoder."""

from __future__ import annotations

import math

import torch
from torch import nn

from .config import GlobalConfig
from .encoder import CategoryEmbedding, CouplingFlow, PosteriorEncoder
from .errors import ModelError
from .gan import MultiScaleGenerator, MultiScaleOutputs
from .prior import PriorEncoder, inference_style, sample_gaussian
from .spectral import SpectrogramConfig, frame_count


class FoleySynthesizer(nn.Module):
    """End-to-end category-to-sound model over a fixed clip length."""

    def __init__(self, cfg: GlobalConfig):
        super().__init__()
        self.cfg = cfg
        self.spec_cfg = SpectrogramConfig.from_global(cfg)
        self.frames = frame_count(cfg.clip_samples, self.spec_cfg)
        h = cfg.hidden_channels
        self.embedding = CategoryEmbedding(cfg.num_categories, h)
        self.posterior = PosteriorEncoder(
            self.spec_cfg.freq_bins,
            h,
            h,
            kernel=cfg.posterior_kernel,
            dilation_rate=cfg.posterior_dilation,
            layers=cfg.posterior_layers,
            cond_channels=h,
        )
        self.flow = CouplingFlow(
            h,
            h,
            kernel=cfg.flow_kernel,
            dilation_rate=cfg.flow_dilation,
            layers=cfg.flow_layers,
            blocks=cfg.flow_blocks,
            cond_channels=h,
        )
        self.prior = PriorEncoder(
            h,
            self.frames,
            kernel=cfg.fpn_kernel,
            layers=cfg.fpn_layers,
            slope=cfg.leaky_slope,
        )
        self.decoder = MultiScaleGenerator(
            h,
            channels=cfg.upsample_channels,
            upsample_rates=cfg.upsample_rates,
            upsample_kernels=cfg.upsample_kernels,
            resblock_kernels=cfg.resblock_kernels,
            resblock_dilations=cfg.resblock_dilations,
            projection_kernels=cfg.projection_kernels,
            cond_channels=h,
        )

    def decode(self, z: torch.Tensor, g: torch.Tensor | None = None) -> MultiScaleOutputs:
        return self.decoder(z, g)

    def infer(
        self,
        category_id: int,
        noise_scale: float,
        generator: torch.Generator | None = None,
        style: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """Generate one clip; returns (clip_samples,) in [-1, 1].

        Draw order from the generator is style first, then the prior noise,
        so a fixed seed fully determines the output.
        """
        if noise_scale < 0:
            raise ModelError(f"noise_scale must be >= 0, got {noise_scale}")
        g_vec = self.embedding(int(category_id)).unsqueeze(0)  # (1, C)
        if style is None:
            style = inference_style(g_vec.size(1), generator=generator)
        style = style.reshape(1, -1)
        mu_p, log_std_p = self.prior(g_vec, style)
        z_p = sample_gaussian(mu_p, log_std_p, noise_scale, generator=generator)
        z = self.flow.inverse(z_p, g_vec)
        hop = self.cfg.hop
        needed = math.ceil(self.cfg.clip_samples / hop)
        if needed > z.size(-1):
            pad = needed - z.size(-1)
            z = torch.cat([z, z[:, :, -1:].expand(-1, -1, pad)], dim=-1)
        wave = self.decode(z, g_vec).full
        return wave[0, 0, : self.cfg.clip_samples]
