"""Waveform decoder and discriminator set.

The decoder upsamples latent frames to audio through transposed convolutions
and residual blocks, emitting the full-rate waveform plus projection taps at
intermediate rates.  The discriminator set combines multi-period
discriminators, a collaborative multi-band discriminator over the multi-rate
outputs, and a sub-band discriminator over pseudo-QMF analysis bands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
from torch import nn
from torch.nn import functional as F
from torch.nn.utils.parametrizations import weight_norm

from .config import GlobalConfig
from .encoder import as_condition, check_finite
from .errors import ModelError
from .pqmf import PQMF

LRELU_SLOPE = 0.1


def get_padding(kernel: int, dilation: int = 1) -> int:
    return (kernel * dilation - dilation) // 2


@dataclass
class MultiScaleOutputs:
    """Full-rate waveform plus intermediate-rate taps with decimation factors."""

    full: torch.Tensor  # (B, 1, L)
    intermediates: tuple[tuple[torch.Tensor, int], ...] = ()

    def check_lengths(self) -> None:
        length = self.full.size(-1)
        if length == 0:
            raise ModelError("zero-length waveform")
        for wave, dec in self.intermediates:
            if wave.size(-1) * dec != length:
                raise ModelError(
                    f"intermediate length {wave.size(-1)} x {dec} != full length {length}"
                )


class ResBlock(nn.Module):
    """Dilated residual block pair as in the usual GAN vocoder recipe."""

    def __init__(self, channels: int, kernel: int = 3, dilations=(1, 3, 5)):
        super().__init__()
        self.convs1 = nn.ModuleList(
            weight_norm(nn.Conv1d(channels, channels, kernel, dilation=d, padding=get_padding(kernel, d)))
            for d in dilations
        )
        self.convs2 = nn.ModuleList(
            weight_norm(nn.Conv1d(channels, channels, kernel, padding=get_padding(kernel)))
            for _ in dilations
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for c1, c2 in zip(self.convs1, self.convs2):
            h = c1(F.leaky_relu(x, LRELU_SLOPE))
            h = c2(F.leaky_relu(h, LRELU_SLOPE))
            x = x + h
        return x


class MultiScaleGenerator(nn.Module):
    """Latent frames (B, C, T) -> waveforms at full rate and tap rates.

    The product of upsample rates equals the analysis hop, so the full-rate
    output has exactly hop * T samples.  Projection taps sit on the last
    `len(projection_kernels)` upsampling stages; the final tap is the
    full-rate output.
    """

    def __init__(
        self,
        in_channels: int,
        channels: int = 512,
        upsample_rates=(8, 8, 2, 2),
        upsample_kernels=(16, 16, 4, 4),
        resblock_kernels=(3, 7, 11),
        resblock_dilations=((1, 3, 5), (1, 3, 5), (1, 3, 5)),
        projection_kernels=(5, 7, 11),
        cond_channels: int = 0,
    ):
        super().__init__()
        if len(projection_kernels) < 1 or len(projection_kernels) > len(upsample_rates):
            raise ModelError("need 1..n_stages projection kernels")
        self.num_stages = len(upsample_rates)
        self.num_blocks = len(resblock_kernels)
        self.conv_pre = nn.Conv1d(in_channels, channels, 7, padding=3)
        self.cond = nn.Conv1d(cond_channels, channels, 1) if cond_channels > 0 else None

        self.ups = nn.ModuleList()
        self.resblocks = nn.ModuleList()
        for i, (rate, kernel) in enumerate(zip(upsample_rates, upsample_kernels)):
            if kernel < rate or (kernel - rate) % 2 != 0:
                raise ModelError(f"upsample kernel {kernel} incompatible with rate {rate}")
            in_ch = channels // (2**i)
            out_ch = channels // (2 ** (i + 1))
            self.ups.append(
                weight_norm(nn.ConvTranspose1d(in_ch, out_ch, kernel, rate, padding=(kernel - rate) // 2))
            )
            for k, d in zip(resblock_kernels, resblock_dilations):
                self.resblocks.append(ResBlock(out_ch, k, d))

        # cumulative upsampling after each stage; taps on the trailing stages
        cum = []
        acc = 1
        for r in upsample_rates:
            acc *= r
            cum.append(acc)
        full_rate = cum[-1]
        first_tap = self.num_stages - len(projection_kernels)
        self.tap_stages = tuple(range(first_tap, self.num_stages))
        self.tap_decimations = tuple(full_rate // cum[i] for i in self.tap_stages)
        self.projections = nn.ModuleList(
            nn.Conv1d(channels // (2 ** (i + 1)), 1, k, padding=k // 2)
            for i, k in zip(self.tap_stages, projection_kernels)
        )
        for m in self.modules():
            if isinstance(m, (nn.Conv1d, nn.ConvTranspose1d)):
                nn.init.normal_(m.weight, 0.0, 0.01)

    def forward(self, z: torch.Tensor, g: torch.Tensor | None = None) -> MultiScaleOutputs:
        check_finite(z, "decoder input")
        if z.size(-1) < 1:
            raise ModelError("decoder needs at least one frame")
        x = self.conv_pre(z)
        if g is not None and self.cond is not None:
            x = x + self.cond(as_condition(g))
        outs: list[torch.Tensor] = []
        tap_idx = 0
        for i in range(self.num_stages):
            x = self.ups[i](F.leaky_relu(x, LRELU_SLOPE))
            acc = 0.0
            for j in range(self.num_blocks):
                acc = acc + self.resblocks[i * self.num_blocks + j](x)
            x = acc / self.num_blocks
            if i in self.tap_stages:
                outs.append(torch.tanh(self.projections[tap_idx](F.leaky_relu(x, LRELU_SLOPE))))
                tap_idx += 1
        full = outs[-1]
        inter = tuple(zip(outs[:-1], self.tap_decimations[:-1]))
        return MultiScaleOutputs(full=full, intermediates=inter)


class PeriodDiscriminator(nn.Module):
    """Reshape the waveform to (period x time) and run 2-D convs."""

    def __init__(self, period: int, channels=(32, 128, 512, 1024), kernel: int = 5, stride: int = 3):
        super().__init__()
        self.period = period
        convs = []
        in_ch = 1
        for ch in channels:
            convs.append(
                weight_norm(nn.Conv2d(in_ch, ch, (kernel, 1), (stride, 1), padding=(get_padding(kernel), 0)))
            )
            in_ch = ch
        convs.append(weight_norm(nn.Conv2d(in_ch, in_ch, (kernel, 1), 1, padding=(get_padding(kernel), 0))))
        self.convs = nn.ModuleList(convs)
        self.conv_post = weight_norm(nn.Conv2d(in_ch, 1, (3, 1), 1, padding=(1, 0)))

    def forward(self, x: torch.Tensor):
        fmap = []
        b, c, t = x.shape
        if t % self.period != 0:
            pad = self.period - (t % self.period)
            x = F.pad(x, (0, pad), mode="reflect")
            t = t + pad
        x = x.view(b, c, t // self.period, self.period)
        for conv in self.convs:
            x = F.leaky_relu(conv(x), LRELU_SLOPE)
            fmap.append(x)
        x = self.conv_post(x)
        fmap.append(x)
        return torch.flatten(x, 1, -1), fmap


class ScaleBlock(nn.Module):
    """Grouped 1-D conv stack scoring one output scale."""

    def __init__(self, channels, kernels, strides, groups):
        super().__init__()
        convs = []
        in_ch = 1
        for ch, k, s, gr in zip(channels, kernels, strides, groups):
            convs.append(weight_norm(nn.Conv1d(in_ch, ch, k, s, groups=gr, padding=k // 2)))
            in_ch = ch
        self.convs = nn.ModuleList(convs)
        self.conv_post = weight_norm(nn.Conv1d(in_ch, 1, 3, padding=1))

    def forward(self, x: torch.Tensor):
        fmap = []
        for conv in self.convs:
            x = F.leaky_relu(conv(x), 0.2)
            fmap.append(x)
        x = self.conv_post(x)
        fmap.append(x)
        return torch.flatten(x, 1, -1), fmap


class CollaborativeMultiBandDiscriminator(nn.Module):
    """One block per output scale; real references come from PQMF decimation."""

    def __init__(self, decimations=(4, 2, 1), channels=(16, 64, 256, 1024, 1024, 1024),
                 kernels=((7, 11, 11, 11, 11, 5), (11, 21, 21, 21, 21, 5), (15, 41, 41, 41, 41, 5)),
                 strides=(1, 1, 4, 4, 4, 1), groups=(1, 4, 16, 64, 256, 1)):
        super().__init__()
        if len(kernels) != len(decimations):
            raise ModelError("need one kernel set per scale")
        self.decimations = tuple(decimations)
        self.blocks = nn.ModuleList(
            ScaleBlock(channels, ks, strides, groups) for ks in kernels
        )
        self.pqmfs = nn.ModuleDict(
            {str(d): PQMF(d) for d in sorted(set(d for d in decimations if d > 1))}
        )

    def real_references(self, real_full: torch.Tensor, real_full_aug=None) -> list[torch.Tensor]:
        """Raw real is decimated for intermediate scales; the full-rate scale
        may use an augmented view so pairs stay consistent per branch."""
        refs = []
        for d in self.decimations:
            if d == 1:
                refs.append(real_full if real_full_aug is None else real_full_aug)
            else:
                refs.append(self.pqmfs[str(d)].analysis(real_full)[:, :1])
        return refs

    def forward(self, real_full: torch.Tensor, fake: MultiScaleOutputs, real_full_aug=None):
        fake_waves = {d: w for w, d in fake.intermediates}
        fake_waves[1] = fake.full
        missing = [d for d in self.decimations if d not in fake_waves]
        if missing:
            raise ModelError(f"generator provides no outputs at decimations {missing}")
        scores_r, scores_f, fmaps_r, fmaps_f = [], [], [], []
        refs = self.real_references(real_full, real_full_aug)
        for block, d, ref in zip(self.blocks, self.decimations, refs):
            sr, fr = block(ref)
            sf, ff = block(fake_waves[d])
            scores_r.append(sr)
            scores_f.append(sf)
            fmaps_r.append(fr)
            fmaps_f.append(ff)
        return scores_r, scores_f, fmaps_r, fmaps_f


class SubBandDiscriminator(nn.Module):
    """PQMF analysis bands grouped into ranges, one conv stack per range."""

    def __init__(self, bands: int = 16, band_ranges=((0, 6), (0, 11), (0, 16), (8, 16)),
                 filters=(64, 128, 256, 256), kernels=(7, 5, 3, 5), strides=(1, 1, 3, 3)):
        super().__init__()
        self.pqmf = PQMF(bands)
        self.band_ranges = tuple(tuple(r) for r in band_ranges)
        self.blocks = nn.ModuleList()
        for (lo, hi), k in zip(self.band_ranges, kernels):
            if not (0 <= lo < hi <= bands):
                raise ModelError(f"band range ({lo}, {hi}) outside 0..{bands}")
            convs = []
            in_ch = hi - lo
            for ch, s in zip(filters, strides):
                convs.append(weight_norm(nn.Conv1d(in_ch, ch, k, s, padding=k // 2)))
                in_ch = ch
            block = nn.ModuleList(convs)
            block.append(weight_norm(nn.Conv1d(in_ch, 1, 3, padding=1)))
            self.blocks.append(block)

    def _run(self, bands: torch.Tensor, block: nn.ModuleList):
        fmap = []
        x = bands
        for conv in block[:-1]:
            x = F.leaky_relu(conv(x), 0.2)
            fmap.append(x)
        x = block[-1](x)
        fmap.append(x)
        return torch.flatten(x, 1, -1), fmap

    def forward(self, real: torch.Tensor, fake: torch.Tensor):
        real_bands = self.pqmf.analysis(real)
        fake_bands = self.pqmf.analysis(fake)
        scores_r, scores_f, fmaps_r, fmaps_f = [], [], [], []
        for (lo, hi), block in zip(self.band_ranges, self.blocks):
            sr, fr = self._run(real_bands[:, lo:hi], block)
            sf, ff = self._run(fake_bands[:, lo:hi], block)
            scores_r.append(sr)
            scores_f.append(sf)
            fmaps_r.append(fr)
            fmaps_f.append(ff)
        return scores_r, scores_f, fmaps_r, fmaps_f


@dataclass
class DiscriminatorOutputs:
    scores_real: list = field(default_factory=list)
    scores_fake: list = field(default_factory=list)
    fmaps_real: list = field(default_factory=list)
    fmaps_fake: list = field(default_factory=list)

    def extend(self, sr, sf, fr, ff):
        self.scores_real.extend(sr)
        self.scores_fake.extend(sf)
        self.fmaps_real.extend(fr)
        self.fmaps_fake.extend(ff)


class DiscriminatorSet(nn.Module):
    """Multi-period + collaborative multi-band + sub-band discriminators."""

    def __init__(self, cfg: GlobalConfig, decimations=None):
        super().__init__()
        self.mpd = nn.ModuleList(
            PeriodDiscriminator(p, cfg.mpd_channels) for p in cfg.mpd_periods
        )
        if decimations is None:
            # infer tap decimations from the generator geometry
            cum = []
            acc = 1
            for r in cfg.upsample_rates:
                acc *= r
                cum.append(acc)
            first_tap = len(cfg.upsample_rates) - len(cfg.projection_kernels)
            decimations = tuple(cum[-1] // cum[i] for i in range(first_tap, len(cum)))
        kernels = cfg.combd_kernels
        if len(kernels) != len(decimations):
            kernels = tuple(kernels[i % len(kernels)] for i in range(len(decimations)))
        self.combd = CollaborativeMultiBandDiscriminator(
            decimations, cfg.combd_channels, kernels, cfg.combd_strides, cfg.combd_groups
        )
        self.sbd = SubBandDiscriminator(
            cfg.sbd_bands, cfg.sbd_band_ranges, cfg.sbd_filters, cfg.sbd_kernels, cfg.sbd_strides
        )

    @property
    def num_score_groups(self) -> int:
        return len(self.mpd) + len(self.combd.blocks) + len(self.sbd.blocks)

    def forward(
        self,
        real_full: torch.Tensor,
        fake: MultiScaleOutputs,
        real_full_aug: torch.Tensor | None = None,
        fake_full_aug: torch.Tensor | None = None,
    ) -> DiscriminatorOutputs:
        """Score real against generated outputs at every scale.

        When augmented full-rate views are given, full-rate branches consume
        them; intermediate-rate branches always see the raw pair.
        """
        if real_full.dim() == 2:
            real_full = real_full.unsqueeze(1)
        fake.check_lengths()
        if real_full.size(-1) == 0:
            raise ModelError("zero-length waveform")
        if real_full.size(-1) != fake.full.size(-1):
            raise ModelError(
                f"length mismatch: real {real_full.size(-1)} vs fake {fake.full.size(-1)}"
            )
        real_in = real_full if real_full_aug is None else real_full_aug
        fake_in = fake.full if fake_full_aug is None else fake_full_aug
        if real_in.dim() == 2:
            real_in = real_in.unsqueeze(1)
        if fake_in.dim() == 2:
            fake_in = fake_in.unsqueeze(1)

        out = DiscriminatorOutputs()
        for disc in self.mpd:
            sr, fr = disc(real_in)
            sf, ff = disc(fake_in)
            out.extend([sr], [sf], [fr], [ff])
        fake_for_combd = MultiScaleOutputs(full=fake_in, intermediates=fake.intermediates)
        out.extend(*self.combd(real_full, fake_for_combd, real_full_aug=real_in))
        out.extend(*self.sbd(real_in, fake_in))
        return out


def adversarial_losses(scores_real, scores_fake):
    """Least-squares GAN objectives summed over score groups."""
    if len(scores_real) != len(scores_fake):
        raise ModelError("score group count mismatch")
    d_loss = None
    g_loss = None
    for sr, sf in zip(scores_real, scores_fake):
        check_finite(sr, "real scores")
        check_finite(sf, "fake scores")
        d_term = torch.mean((1.0 - sr) ** 2) + torch.mean(sf**2)
        g_term = torch.mean((1.0 - sf) ** 2)
        d_loss = d_term if d_loss is None else d_loss + d_term
        g_loss = g_term if g_loss is None else g_loss + g_term
    if d_loss is None:
        raise ModelError("no score groups")
    return d_loss, g_loss


def feature_matching_loss(fmaps_real, fmaps_fake) -> torch.Tensor:
    """Mean absolute feature difference, averaged over all layers."""
    if len(fmaps_real) != len(fmaps_fake) or len(fmaps_real) == 0:
        raise ModelError("feature map structure mismatch or empty")
    total = None
    count = 0
    for group_r, group_f in zip(fmaps_real, fmaps_fake):
        if len(group_r) != len(group_f):
            raise ModelError("feature map structure mismatch")
        for fr, ff in zip(group_r, group_f):
            if fr.shape != ff.shape:
                raise ModelError(f"feature shape mismatch {tuple(fr.shape)} vs {tuple(ff.shape)}")
            term = torch.mean(torch.abs(fr.detach() - ff))
            total = term if total is None else total + term
            count += 1
    return total / count
