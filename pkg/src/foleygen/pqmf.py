"""Pseudo-QMF analysis/synthesis filterbank (near-perfect reconstruction).

Kaiser-windowed prototype lowpass, cosine-modulated into subband filters.
Used by the discriminators to obtain decimated views of full-rate audio.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from scipy.signal.windows import kaiser

# (taps, cutoff ratio, kaiser beta) tuned per band count for near-perfect
# reconstruction; more bands need a longer prototype
_DESIGNS = {
    2: (256, 0.25, 10.0),
    4: (192, 0.13, 10.0),
    8: (62, 0.07949452, 9.0),
    16: (256, 0.03, 10.0),
}


def design_prototype_filter(taps: int = 62, cutoff_ratio: float = 0.142, beta: float = 9.0) -> np.ndarray:
    if taps % 2 != 0:
        raise ValueError("taps must be even")
    if not 0.0 < cutoff_ratio < 1.0:
        raise ValueError("cutoff_ratio must be in (0, 1)")
    omega = np.pi * cutoff_ratio
    n = np.arange(taps + 1) - 0.5 * taps
    with np.errstate(invalid="ignore"):
        h = np.sin(omega * n) / (np.pi * n)
    h[taps // 2] = cutoff_ratio
    return h * kaiser(taps + 1, beta)


class PQMF(torch.nn.Module):
    def __init__(
        self,
        subbands: int,
        taps: int | None = None,
        cutoff_ratio: float | None = None,
        beta: float | None = None,
    ):
        super().__init__()
        default = _DESIGNS.get(subbands, (62, 0.6 / subbands, 9.0))
        taps = default[0] if taps is None else taps
        cutoff_ratio = default[1] if cutoff_ratio is None else cutoff_ratio
        beta = default[2] if beta is None else beta
        proto = design_prototype_filter(taps, cutoff_ratio, beta)
        n = np.arange(taps + 1)
        analysis = np.zeros((subbands, taps + 1))
        synthesis = np.zeros((subbands, taps + 1))
        for k in range(subbands):
            arg = (2 * k + 1) * (np.pi / (2 * subbands)) * (n - taps / 2)
            analysis[k] = 2 * proto * np.cos(arg + (-1) ** k * np.pi / 4)
            synthesis[k] = 2 * proto * np.cos(arg - (-1) ** k * np.pi / 4)
        self.register_buffer("analysis_filter", torch.from_numpy(analysis).float().unsqueeze(1))
        self.register_buffer("synthesis_filter", torch.from_numpy(synthesis).float().unsqueeze(0))
        updown = torch.zeros(subbands, subbands, subbands)
        for k in range(subbands):
            updown[k, k, 0] = 1.0
        self.register_buffer("updown_filter", updown)
        self.subbands = subbands
        self.taps = taps

    def analysis(self, x: torch.Tensor) -> torch.Tensor:
        """(B, 1, T) -> (B, subbands, T // subbands)."""
        x = F.pad(x, (self.taps // 2, self.taps // 2))
        x = F.conv1d(x, self.analysis_filter)
        return F.conv1d(x, self.updown_filter, stride=self.subbands)

    def synthesis(self, x: torch.Tensor) -> torch.Tensor:
        """(B, subbands, T // subbands) -> (B, 1, T)."""
        x = F.conv_transpose1d(x, self.updown_filter * self.subbands, stride=self.subbands)
        x = F.pad(x, (self.taps // 2, self.taps // 2))
        return F.conv1d(x, self.synthesis_filter)
