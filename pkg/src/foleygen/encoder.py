"""Category embedding, posterior encoder q(z|x, c), and the coupling flow f(z|c).

The posterior encoder is a stack of non-causal dilated 1-D convolutions with
gated activations and global conditioning; the flow alternates affine
coupling layers (conditioned the same way) with channel flips.  Couplings
start at identity: the final projection of each coupling is zero-initialized.
"""

from __future__ import annotations

import torch
from torch import nn
from torch.nn import functional as F
from torch.nn.utils.parametrizations import weight_norm

from .errors import ModelError


def check_finite(x: torch.Tensor, what: str) -> None:
    if not torch.isfinite(x).all():
        raise ModelError(f"{what} contains non-finite values")


def as_condition(g: torch.Tensor | None) -> torch.Tensor | None:
    """Accept (B, C) or (B, C, 1) global conditioning, return (B, C, 1)."""
    if g is None:
        return None
    if g.dim() == 2:
        return g.unsqueeze(-1)
    if g.dim() == 3 and g.size(-1) == 1:
        return g
    raise ModelError(f"condition must be (B, C) or (B, C, 1), got {tuple(g.shape)}")


class CategoryEmbedding(nn.Module):
    """One learnable vector per category; the width matches the latent width."""

    def __init__(self, num_categories: int, dim: int):
        super().__init__()
        self.num_categories = num_categories
        self.dim = dim
        self.table = nn.Embedding(num_categories, dim)

    @property
    def weight(self) -> torch.Tensor:
        return self.table.weight

    def forward(self, ids) -> torch.Tensor:
        ids = torch.as_tensor(ids, dtype=torch.long)
        scalar = ids.dim() == 0
        if scalar:
            ids = ids.unsqueeze(0)
        if ids.numel() > 0 and (int(ids.min()) < 0 or int(ids.max()) >= self.num_categories):
            raise ModelError(
                f"category id out of range 0..{self.num_categories - 1}: {ids.tolist()}"
            )
        out = self.table(ids)
        return out.squeeze(0) if scalar else out


class GatedConvStack(nn.Module):
    """WaveNet-style stack: dilated conv, gated tanh/sigmoid, residual + skip."""

    def __init__(
        self,
        hidden: int,
        kernel: int,
        dilation_rate: int,
        layers: int,
        cond_channels: int = 0,
    ):
        super().__init__()
        if kernel % 2 != 1:
            raise ModelError("kernel size must be odd")
        self.hidden = hidden
        self.layers = layers
        self.in_layers = nn.ModuleList()
        self.res_skip_layers = nn.ModuleList()
        if cond_channels > 0:
            self.cond_layer = weight_norm(nn.Conv1d(cond_channels, 2 * hidden * layers, 1))
        else:
            self.cond_layer = None
        for i in range(layers):
            dilation = dilation_rate**i
            padding = (kernel * dilation - dilation) // 2
            self.in_layers.append(
                weight_norm(nn.Conv1d(hidden, 2 * hidden, kernel, dilation=dilation, padding=padding))
            )
            res_skip = 2 * hidden if i < layers - 1 else hidden
            self.res_skip_layers.append(weight_norm(nn.Conv1d(hidden, res_skip, 1)))

    def forward(self, x: torch.Tensor, g: torch.Tensor | None = None) -> torch.Tensor:
        output = torch.zeros_like(x)
        if g is not None and self.cond_layer is not None:
            g = self.cond_layer(g)
        for i in range(self.layers):
            x_in = self.in_layers[i](x)
            if g is not None and self.cond_layer is not None:
                off = i * 2 * self.hidden
                x_in = x_in + g[:, off : off + 2 * self.hidden]
            t, s = torch.split(x_in, self.hidden, dim=1)
            acts = torch.tanh(t) * torch.sigmoid(s)
            res_skip = self.res_skip_layers[i](acts)
            if i < self.layers - 1:
                x = x + res_skip[:, : self.hidden]
                output = output + res_skip[:, self.hidden :]
            else:
                output = output + res_skip
        return output


class PosteriorEncoder(nn.Module):
    """Map a linear spectrogram to per-frame Gaussian stats and a sample."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        hidden: int,
        kernel: int = 5,
        dilation_rate: int = 1,
        layers: int = 16,
        cond_channels: int = 0,
    ):
        super().__init__()
        self.out_channels = out_channels
        self.pre = nn.Conv1d(in_channels, hidden, 1)
        self.enc = GatedConvStack(hidden, kernel, dilation_rate, layers, cond_channels)
        self.proj = nn.Conv1d(hidden, 2 * out_channels, 1)

    def forward(
        self,
        spec: torch.Tensor,
        g: torch.Tensor | None = None,
        generator: torch.Generator | None = None,
    ):
        """Returns (z, mu, log_std), each (B, out_channels, T)."""
        check_finite(spec, "posterior encoder input")
        x = self.pre(spec)
        x = self.enc(x, as_condition(g))
        stats = self.proj(x)
        mu, log_std = torch.split(stats, self.out_channels, dim=1)
        eps = torch.randn(mu.shape, generator=generator, dtype=mu.dtype, device=mu.device)
        z = mu + eps * torch.exp(log_std)
        return z, mu, log_std


class AffineCoupling(nn.Module):
    """Affine coupling over a channel split; zero-init projection = identity map."""

    def __init__(
        self,
        channels: int,
        hidden: int,
        kernel: int = 5,
        dilation_rate: int = 1,
        layers: int = 4,
        cond_channels: int = 0,
        mean_only: bool = False,
    ):
        super().__init__()
        if channels % 2 != 0:
            raise ModelError("coupling needs an even channel count")
        self.half = channels // 2
        self.mean_only = mean_only
        self.pre = nn.Conv1d(self.half, hidden, 1)
        self.enc = GatedConvStack(hidden, kernel, dilation_rate, layers, cond_channels)
        self.post = nn.Conv1d(hidden, self.half * (1 if mean_only else 2), 1)
        nn.init.zeros_(self.post.weight)
        nn.init.zeros_(self.post.bias)

    def _stats(self, x0: torch.Tensor, g: torch.Tensor | None):
        h = self.pre(x0)
        h = self.enc(h, g)
        stats = self.post(h)
        if self.mean_only:
            return stats, torch.zeros_like(stats)
        return torch.split(stats, self.half, dim=1)

    def forward(self, x: torch.Tensor, g: torch.Tensor | None = None):
        x0, x1 = torch.split(x, self.half, dim=1)
        m, logs = self._stats(x0, g)
        y1 = m + x1 * torch.exp(logs)
        logdet = torch.sum(logs, dim=(1, 2))
        return torch.cat([x0, y1], dim=1), logdet

    def inverse(self, y: torch.Tensor, g: torch.Tensor | None = None) -> torch.Tensor:
        y0, y1 = torch.split(y, self.half, dim=1)
        m, logs = self._stats(y0, g)
        x1 = (y1 - m) * torch.exp(-logs)
        return torch.cat([y0, x1], dim=1)


class ChannelFlip(nn.Module):
    """Reverse channel order; volume preserving."""

    def forward(self, x: torch.Tensor, g=None):
        return torch.flip(x, dims=(1,)), x.new_zeros(x.size(0))

    def inverse(self, y: torch.Tensor, g=None) -> torch.Tensor:
        return torch.flip(y, dims=(1,))


class CouplingFlow(nn.Module):
    """Stack of (affine coupling, channel flip) blocks with global conditioning."""

    def __init__(
        self,
        channels: int,
        hidden: int,
        kernel: int = 5,
        dilation_rate: int = 1,
        layers: int = 4,
        blocks: int = 4,
        cond_channels: int = 0,
        mean_only: bool = False,
    ):
        super().__init__()
        self.steps = nn.ModuleList()
        for _ in range(blocks):
            self.steps.append(
                AffineCoupling(channels, hidden, kernel, dilation_rate, layers, cond_channels, mean_only)
            )
            self.steps.append(ChannelFlip())

    def forward(self, z: torch.Tensor, g: torch.Tensor | None = None):
        """Returns (f(z), logdet) with logdet summed over all couplings, shape (B,)."""
        check_finite(z, "flow input")
        g = as_condition(g)
        logdet = z.new_zeros(z.size(0))
        x = z
        for step in self.steps:
            x, ld = step(x, g)
            logdet = logdet + ld
        return x, logdet

    def inverse(self, y: torch.Tensor, g: torch.Tensor | None = None) -> torch.Tensor:
        check_finite(y, "flow inverse input")
        g = as_condition(g)
        x = y
        for step in reversed(self.steps):
            x = step.inverse(x, g)
        return x
