"""Frechet-distance evaluation, checkpoint/noise-scale grid search, ensembling.

The audio embedder is pluggable.  The reference backend summarizes each clip
by the per-band mean and standard deviation of its log-mel spectrogram
(d = 2 * mel_bands); an adapter for an external pretrained classifier module
fills the same interface when such weights are available.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .dataset import AudioClip, CategoryTable, load_clip
from .errors import EvaluationError, GridSearchError
from .spectral import SpectrogramConfig, mel_spectrogram

COARSE_SCALES = (0.25, 0.5, 0.75, 1.0, 1.25, 1.5)
FINE_SCALES = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0)


class AudioEmbedder:
    """Deterministic map clip -> d-dimensional vector, d >= 2."""

    dimension: int = 0

    def embed(self, clip: AudioClip) -> np.ndarray:
        raise NotImplementedError


class MelStatsEmbedder(AudioEmbedder):
    """Per-band mean/std of the log-mel spectrogram; needs no external weights."""

    def __init__(self, spec_cfg: SpectrogramConfig | None = None):
        self.spec_cfg = spec_cfg or SpectrogramConfig()
        self.dimension = 2 * self.spec_cfg.mel_bands

    def embed(self, clip: AudioClip) -> np.ndarray:
        mel = mel_spectrogram(torch.from_numpy(clip.samples), self.spec_cfg)
        mean = mel.mean(dim=-1)
        std = mel.std(dim=-1, unbiased=False)
        return torch.cat([mean, std]).numpy().astype(np.float64)


class TorchModuleEmbedder(AudioEmbedder):
    """Adapter for an external pretrained embedding network (TorchScript file).

    The module must map a (1, clip_samples) float tensor to a (1, d) vector.
    """

    def __init__(self, module_path, dimension: int):
        self.module = torch.jit.load(str(module_path), map_location="cpu")
        self.module.eval()
        self.dimension = dimension

    def embed(self, clip: AudioClip) -> np.ndarray:
        with torch.inference_mode():
            x = torch.from_numpy(clip.samples).unsqueeze(0)
            out = self.module(x)
        vec = out.reshape(-1).numpy().astype(np.float64)
        if vec.shape[0] != self.dimension:
            raise EvaluationError(
                f"external embedder returned d={vec.shape[0]}, expected {self.dimension}"
            )
        return vec


@dataclass
class GaussianStats:
    mean: np.ndarray
    cov: np.ndarray

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def fit_gaussian(embeddings: np.ndarray, eps: float = 1e-6) -> GaussianStats:
    """Sample mean and covariance (N-1 denominator), regularized with +eps*I."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if embeddings.ndim != 2:
        raise EvaluationError(f"expected (N, d) embeddings, got shape {embeddings.shape}")
    n, d = embeddings.shape
    if n < 2:
        raise EvaluationError(f"need at least 2 embeddings to fit a Gaussian, got {n}")
    mean = embeddings.mean(axis=0)
    centered = embeddings - mean
    cov = centered.T @ centered / (n - 1)
    cov = cov + eps * np.eye(d)
    return GaussianStats(mean=mean, cov=cov)


def _psd_sqrt(cov: np.ndarray, tol: float) -> np.ndarray:
    vals, vecs = np.linalg.eigh((cov + cov.T) / 2.0)
    scale = max(abs(vals.max()), 1.0)
    if vals.min() < -tol * scale:
        raise EvaluationError(f"covariance not PSD: min eigenvalue {vals.min():.3e}")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(a: GaussianStats, b: GaussianStats, tol: float = 1e-3) -> float:
    """||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)).

    The cross term is computed as Tr of the square root of the symmetrized
    product sqrt(S_a) S_b sqrt(S_a); eigenvalues below -tol * scale mean the
    square root did not converge and raise.
    """
    if a.dim != b.dim:
        raise EvaluationError(f"dimension mismatch: {a.dim} vs {b.dim}")
    diff = a.mean - b.mean
    sqrt_a = _psd_sqrt(a.cov, tol)
    inner = sqrt_a @ b.cov @ sqrt_a
    vals = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    scale = max(abs(vals).max(), 1.0)
    if vals.min() < -tol * scale:
        raise EvaluationError(
            f"matrix square root failed: min eigenvalue {vals.min():.3e} of the product"
        )
    tr_cross = np.sum(np.sqrt(np.clip(vals, 0.0, None)))
    return float(diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * tr_cross)


@dataclass
class FadReport:
    per_category: dict[str, float]
    average: float
    average_wo: dict[str, float]
    ckpt_step: int | None = None
    noise_scale: float | None = None

    def to_dict(self) -> dict:
        return {
            "per_category": self.per_category,
            "average": self.average,
            "average_wo": self.average_wo,
            "ckpt_step": self.ckpt_step,
            "noise_scale": self.noise_scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FadReport":
        return cls(
            per_category=dict(d["per_category"]),
            average=float(d["average"]),
            average_wo=dict(d.get("average_wo", {})),
            ckpt_step=d.get("ckpt_step"),
            noise_scale=d.get("noise_scale"),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path) -> "FadReport":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def report_from_values(
    per_category: dict[str, float],
    ckpt_step: int | None = None,
    noise_scale: float | None = None,
) -> FadReport:
    """Assemble a report (averages included) from known per-category distances."""
    names = list(per_category)
    avg = float(np.mean([per_category[n] for n in names]))
    avg_wo = {
        n: float(np.mean([per_category[m] for m in names if m != n])) for n in names
    }
    return FadReport(dict(per_category), avg, avg_wo, ckpt_step, noise_scale)


def _category_clips(root: Path, name: str, expected_rate: int, clip_seconds: float):
    sub = root / name
    if not sub.is_dir():
        raise EvaluationError(f"missing category directory {name!r} under {root}")
    paths = sorted(sub.rglob("*.wav"))
    return [load_clip(p, expected_rate, clip_seconds) for p in paths]


def embed_clips(clips, embedder: AudioEmbedder) -> np.ndarray:
    if not clips:
        raise EvaluationError("no clips to embed")
    return np.stack([embedder.embed(c) for c in clips])


def fad_report(
    real_dir,
    gen_dir,
    embedder: AudioEmbedder,
    table: CategoryTable | None = None,
    expected_rate: int = 22050,
    clip_seconds: float = 4.0,
    ckpt_step: int | None = None,
    noise_scale: float | None = None,
) -> FadReport:
    """Per-category Frechet distance between two corpora plus averages."""
    table = table or CategoryTable.default()
    real_dir, gen_dir = Path(real_dir), Path(gen_dir)
    per_category: dict[str, float] = {}
    for cid, name in table.entries:
        real = _category_clips(real_dir, name, expected_rate, clip_seconds)
        gen = _category_clips(gen_dir, name, expected_rate, clip_seconds)
        if len(real) < 2 or len(gen) < 2:
            raise EvaluationError(
                f"category {name!r} needs >= 2 clips on both sides "
                f"(real {len(real)}, generated {len(gen)})"
            )
        stats_real = fit_gaussian(embed_clips(real, embedder))
        stats_gen = fit_gaussian(embed_clips(gen, embedder))
        per_category[name] = frechet_distance(stats_real, stats_gen)
    return report_from_values(per_category, ckpt_step, noise_scale)


def grid_search(
    ckpts,
    gen_fn,
    real_dir,
    embedder: AudioEmbedder,
    coarse_scales=COARSE_SCALES,
    fine_scales=FINE_SCALES,
    table: CategoryTable | None = None,
    expected_rate: int = 22050,
    clip_seconds: float = 4.0,
) -> list[FadReport]:
    """Evaluate every (checkpoint, scale) pair over the coarse then fine grid.

    gen_fn(ckpt, scale) must return a directory holding generated clips in
    per-category subdirectories.  The coarse and fine grids are evaluated in
    full, even where they overlap.  A generation failure raises with the
    reports completed so far attached.
    """
    ckpts = list(ckpts)
    if not ckpts:
        raise EvaluationError("need at least one checkpoint")
    completed: list[FadReport] = []
    for ckpt in ckpts:
        for scale in tuple(coarse_scales) + tuple(fine_scales):
            try:
                gen_dir = gen_fn(ckpt, scale)
                report = fad_report(
                    real_dir,
                    gen_dir,
                    embedder,
                    table,
                    expected_rate,
                    clip_seconds,
                    ckpt_step=_ckpt_step(ckpt),
                    noise_scale=float(scale),
                )
            except Exception as exc:
                raise GridSearchError(
                    f"grid search failed at ckpt={ckpt} scale={scale}: {exc}", completed
                ) from exc
            completed.append(report)
    return completed


def _ckpt_step(ckpt) -> int | None:
    step = getattr(ckpt, "step", None)
    if step is not None:
        return int(step)
    if isinstance(ckpt, (int, np.integer)):
        return int(ckpt)
    return None


@dataclass
class EnsembleSpec:
    """Per-category winner: (ckpt_step, noise_scale, distance)."""

    per_category: dict[str, tuple[int | None, float | None, float]] = field(default_factory=dict)

    @property
    def distances(self) -> dict[str, float]:
        return {name: entry[2] for name, entry in self.per_category.items()}

    def average(self) -> float:
        return float(np.mean(list(self.distances.values())))

    def average_without(self, excluded: str) -> float:
        vals = [v for n, v in self.distances.items() if n != excluded]
        if not vals:
            raise EvaluationError("no categories left after exclusion")
        return float(np.mean(vals))

    def to_dict(self) -> dict:
        return {
            name: {"ckpt_step": s, "noise_scale": ns, "fad": d}
            for name, (s, ns, d) in self.per_category.items()
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def build_ensemble(reports) -> EnsembleSpec:
    """Per category, pick the report with the lowest distance.

    Ties break toward the earlier checkpoint step, then the lower noise scale.
    """
    reports = list(reports)
    if not reports:
        raise EvaluationError("need at least one report")
    names = list(reports[0].per_category)
    spec = EnsembleSpec()
    for name in names:
        def sort_key(r: FadReport):
            step = r.ckpt_step if r.ckpt_step is not None else float("inf")
            scale = r.noise_scale if r.noise_scale is not None else float("inf")
            return (r.per_category[name], step, scale)

        best = min(reports, key=sort_key)
        spec.per_category[name] = (best.ckpt_step, best.noise_scale, best.per_category[name])
    return spec


def embedding_similarity_report(weights) -> np.ndarray:
    """Pairwise cosine similarities of category embedding rows (symmetric, diag 1)."""
    w = np.asarray(
        weights.detach().numpy() if isinstance(weights, torch.Tensor) else weights,
        dtype=np.float64,
    )
    if w.ndim != 2:
        raise EvaluationError("expected a (categories, dim) weight matrix")
    norms = np.linalg.norm(w, axis=1)
    if not np.all(np.isfinite(w)):
        raise EvaluationError("embedding weights contain non-finite values")
    if np.any(norms == 0):
        raise EvaluationError("zero embedding vector; cosine similarity undefined")
    unit = w / norms[:, None]
    sim = unit @ unit.T
    np.fill_diagonal(sim, 1.0)
    return sim


def write_similarity_csv(sim: np.ndarray, names, path) -> None:
    """Lower-triangular CSV (including the diagonal)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["category_a", "category_b", "cosine_similarity"])
        for i in range(sim.shape[0]):
            for j in range(i + 1):
                writer.writerow([names[i], names[j], f"{sim[i, j]:.6f}"])
