"""Training objective: flow-transported KL, mel reconstruction, and aggregation.

The KL term is the usual single-sample estimate with the posterior entropy
taken analytically: per element

    log sigma_p - log sigma_q - 1/2 + (f(z_q) - mu_p)^2 / (2 sigma_p^2)

averaged over elements, minus the flow log-determinant normalized by the
element count.  With an identity flow its expectation is the closed-form
diagonal-Gaussian KL.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from .errors import ModelError


@dataclass(frozen=True)
class LossWeights:
    mel: float = 45.0
    kl: float = 1.0
    fm: float = 2.0
    stat: float = 1.0


@dataclass
class LossReport:
    kl: float
    mel: float
    adv_g: float
    adv_d: float
    fm: float
    stat: float
    total_g: float

    def as_dict(self) -> dict:
        return {
            "kl": self.kl,
            "mel": self.mel,
            "adv_g": self.adv_g,
            "adv_d": self.adv_d,
            "fm": self.fm,
            "stat": self.stat,
            "total_g": self.total_g,
        }


def kl_flowed(
    mu_q: torch.Tensor,
    log_std_q: torch.Tensor,
    z_flowed: torch.Tensor,
    logdet: torch.Tensor,
    mu_p: torch.Tensor,
    log_std_p: torch.Tensor,
) -> torch.Tensor:
    """Per-element KL estimate between the flowed posterior and the prior."""
    shapes = {t.shape for t in (mu_q, log_std_q, z_flowed, mu_p, log_std_p)}
    if len(shapes) != 1:
        raise ModelError(f"shape mismatch across KL inputs: {sorted(map(tuple, shapes))}")
    pointwise = (
        log_std_p
        - log_std_q
        - 0.5
        + 0.5 * (z_flowed - mu_p) ** 2 * torch.exp(-2.0 * log_std_p)
    )
    per_item = mu_q[0].numel() if mu_q.dim() > 2 else mu_q.numel()
    logdet = torch.as_tensor(logdet, dtype=mu_q.dtype)
    return pointwise.mean() - logdet.mean() / per_item


def gaussian_kl(mu_q, log_std_q, mu_p, log_std_p) -> torch.Tensor:
    """Closed-form diagonal-Gaussian KL(q || p), per-element mean."""
    var_q = torch.exp(2.0 * log_std_q)
    var_p = torch.exp(2.0 * log_std_p)
    kl = log_std_p - log_std_q - 0.5 + 0.5 * (var_q + (mu_q - mu_p) ** 2) / var_p
    return kl.mean()


def mel_loss(real: torch.Tensor, generated: torch.Tensor) -> torch.Tensor:
    if real.shape != generated.shape:
        raise ModelError(f"mel shape mismatch {tuple(real.shape)} vs {tuple(generated.shape)}")
    return torch.mean(torch.abs(real - generated))


def total_generator_loss(
    kl,
    mel,
    adv_g,
    fm,
    stat,
    weights: LossWeights,
    adv_d=0.0,
) -> LossReport:
    """Aggregate weighted generator loss; rejects non-finite components by name."""
    parts = {"kl": kl, "mel": mel, "adv_g": adv_g, "adv_d": adv_d, "fm": fm, "stat": stat}
    values = {}
    for name, value in parts.items():
        v = float(value.detach()) if torch.is_tensor(value) else float(value)
        if not math.isfinite(v):
            raise ModelError(f"non-finite loss component: {name} = {v}")
        values[name] = v
    total = (
        weights.kl * values["kl"]
        + weights.mel * values["mel"]
        + values["adv_g"]
        + weights.fm * values["fm"]
        + weights.stat * values["stat"]
    )
    return LossReport(total_g=total, **values)
