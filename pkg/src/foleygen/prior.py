"""Conditional prior over the latent grid.

The condition for each clip is the sum of three parts of equal width:
the category vector expanded along time, a learnable positional grid, and a
style vector (self-attentive pooling of the posterior latents at train time,
a standard-normal draw at inference).  A stack of large-kernel residual conv
layers turns the condition grid into per-frame Gaussian stats.
"""

from __future__ import annotations

import torch
from torch import nn
from torch.nn import functional as F

from .encoder import check_finite
from .errors import ModelError


class SelfAttentivePooling(nn.Module):
    """Softmax attention over time; output is a convex combination of columns.

    The score head is zero-initialized, so attention starts uniform (a plain
    time average) and learns to reweight frames.
    """

    def __init__(self, channels: int):
        super().__init__()
        self.score = nn.Conv1d(channels, 1, 1)
        nn.init.zeros_(self.score.weight)
        nn.init.zeros_(self.score.bias)

    def forward(self, values: torch.Tensor, queries: torch.Tensor | None = None):
        """values (B, C, T) -> (pooled (B, C), weights (B, T)).

        Attention scores come from `queries` when given (the posterior mean),
        otherwise from `values` themselves.
        """
        check_finite(values, "pooling input")
        source = values if queries is None else queries
        if queries is not None:
            check_finite(queries, "pooling queries")
        if source.shape != values.shape:
            raise ModelError("queries must match values shape")
        scores = self.score(source).squeeze(1)  # (B, T)
        weights = torch.softmax(scores, dim=-1)
        pooled = torch.sum(values * weights.unsqueeze(1), dim=-1)
        return pooled, weights


def batch_stat_loss(vectors: torch.Tensor) -> torch.Tensor:
    """Squared distance of batch statistics from the standard normal's.

    Per dimension, population mean and std over the batch; the loss is the
    dimension average of mean^2 + (std - 1)^2.  Needs at least two vectors.
    """
    if vectors.dim() != 2:
        raise ModelError(f"expected (B, C) vectors, got {tuple(vectors.shape)}")
    if vectors.size(0) < 2:
        raise ModelError("batch statistics need at least 2 vectors")
    mean = vectors.mean(dim=0)
    std = vectors.std(dim=0, unbiased=False)
    return (mean.square() + (std - 1.0).square()).mean()


def build_condition(
    category_vec: torch.Tensor,
    positional: torch.Tensor,
    style: torch.Tensor,
) -> torch.Tensor:
    """grid[b, d, t] = category_vec[b, d] + positional[d, t] + style[b, d]."""
    if category_vec.dim() == 1:
        category_vec = category_vec.unsqueeze(0)
    if style.dim() == 1:
        style = style.unsqueeze(0)
    if positional.dim() != 2:
        raise ModelError("positional grid must be (C, T)")
    for name, v in (("category vector", category_vec), ("positional grid", positional), ("style vector", style)):
        check_finite(v, name)
    return category_vec.unsqueeze(-1) + positional.unsqueeze(0) + style.unsqueeze(-1)


class FramePriorNetwork(nn.Module):
    """Residual stack of large-kernel 1-D convolutions producing prior stats.

    Each layer is leaky-ReLU then a same-padded conv then a residual add; the
    output head is a zero-initialized 1x1 conv, so a fresh network yields
    mu = 0 and sigma = 1 everywhere.
    """

    def __init__(self, channels: int, kernel: int = 35, layers: int = 6, slope: float = 0.2):
        super().__init__()
        if kernel % 2 != 1:
            raise ModelError("frame prior kernel must be odd")
        self.slope = slope
        self.convs = nn.ModuleList(
            nn.Conv1d(channels, channels, kernel, padding=kernel // 2) for _ in range(layers)
        )
        self.out = nn.Conv1d(channels, 2 * channels, 1)
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)
        self.channels = channels

    @property
    def receptive_field(self) -> int:
        k = self.convs[0].kernel_size[0] if len(self.convs) else 1
        return len(self.convs) * (k - 1) + 1

    def forward(self, cond: torch.Tensor):
        """cond (B, C, T) -> (mu, log_std), each (B, C, T)."""
        check_finite(cond, "frame prior input")
        h = cond
        for conv in self.convs:
            h = h + conv(F.leaky_relu(h, self.slope))
        stats = self.out(h)
        return torch.split(stats, self.channels, dim=1)


class PriorEncoder(nn.Module):
    """Positional grid + pooling + frame prior network over a fixed frame count."""

    def __init__(
        self,
        channels: int,
        frames: int,
        kernel: int = 35,
        layers: int = 6,
        slope: float = 0.2,
    ):
        super().__init__()
        self.frames = frames
        self.positional = nn.Parameter(torch.randn(channels, frames) * 0.02)
        self.sap = SelfAttentivePooling(channels)
        self.fpn = FramePriorNetwork(channels, kernel, layers, slope)

    def condition(self, category_vec: torch.Tensor, style: torch.Tensor) -> torch.Tensor:
        return build_condition(category_vec, self.positional, style)

    def forward(self, category_vec: torch.Tensor, style: torch.Tensor):
        return self.fpn(self.condition(category_vec, style))


def _generator_from(seed: int | None, generator: torch.Generator | None) -> torch.Generator | None:
    if generator is not None:
        return generator
    if seed is None:
        return None
    g = torch.Generator()
    g.manual_seed(int(seed))
    return g


def sample_gaussian(
    mean: torch.Tensor,
    log_std: torch.Tensor,
    noise_scale: float = 1.0,
    seed: int | None = None,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """z = mean + noise_scale * sigma * eps with eps from a seeded generator."""
    if noise_scale < 0:
        raise ModelError(f"noise_scale must be >= 0, got {noise_scale}")
    if mean.shape != log_std.shape:
        raise ModelError("mean and log_std shapes differ")
    gen = _generator_from(seed, generator)
    eps = torch.randn(mean.shape, generator=gen, dtype=mean.dtype, device=mean.device)
    return mean + noise_scale * torch.exp(log_std) * eps


def inference_style(
    dim: int,
    seed: int | None = None,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Standard-normal style vector used in place of pooled posteriors at inference."""
    gen = _generator_from(seed, generator)
    return torch.randn(dim, generator=gen)
