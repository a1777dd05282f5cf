"""WAV corpus ingestion, catalog statistics, and length histograms.

The corpus layout is one subdirectory per category (DogBark, Footstep, ...),
optionally overridden by a CSV manifest of (filename, category_id) rows.
Clips are PCM16 mono at the configured rate; short clips are zero-padded to
the full clip length, long ones truncated with a warning.
"""

from __future__ import annotations

import csv
import json
import re
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import DatasetError

DEFAULT_CATEGORY_NAMES = (
    "DogBark",
    "Footstep",
    "GunShot",
    "Keyboard",
    "MovingMotorVehicle",
    "Rain",
    "SneezeCough",
)


def _canon(name: str) -> str:
    return re.sub(r"[^a-z0-9]", "", name.lower())


@dataclass(frozen=True)
class CategoryTable:
    """Ordered (id, name) pairs; ids must be 0..n-1 with unique names."""

    entries: tuple[tuple[int, str], ...]

    def __post_init__(self):
        ids = [i for i, _ in self.entries]
        names = [n for _, n in self.entries]
        if ids != list(range(len(ids))):
            raise DatasetError(f"category ids must be 0..{len(ids) - 1} in order, got {ids}")
        if len(set(names)) != len(names):
            raise DatasetError("category names must be unique")

    @classmethod
    def default(cls) -> "CategoryTable":
        return cls(tuple(enumerate(DEFAULT_CATEGORY_NAMES)))

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for _, n in self.entries)

    def name_of(self, category_id: int) -> str:
        if not 0 <= category_id < len(self.entries):
            raise DatasetError(f"category id {category_id} out of range 0..{len(self) - 1}")
        return self.entries[category_id][1]

    def id_of(self, name: str) -> int:
        canon = _canon(name)
        for i, n in self.entries:
            if _canon(n) == canon:
                return i
        raise DatasetError(f"unknown category name {name!r}")


@dataclass
class AudioClip:
    samples: np.ndarray  # float32 in [-1, 1]
    sample_rate: int
    category_id: int | None = None
    source_path: str = ""

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class DatasetCatalog:
    clips_per_category: dict[int, int]
    total: int
    effective_lengths: dict[int, list[float]]
    clip_seconds: float
    table: CategoryTable = field(default_factory=CategoryTable.default)


def load_clip(
    path,
    expected_rate: int = 22050,
    clip_seconds: float = 4.0,
    category_id: int | None = None,
) -> AudioClip:
    """Load a mono PCM16 WAV, normalize to [-1, 1], zero-pad to the clip length."""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"no such file: {path}")
    try:
        rate, data = wavfile.read(str(path))
    except Exception as exc:
        raise DatasetError(f"could not decode {path}: {exc}") from exc
    if rate != expected_rate:
        raise DatasetError(f"{path}: sample rate {rate} != expected {expected_rate}")
    if data.ndim != 1:
        raise DatasetError(f"{path}: expected mono, got {data.ndim} channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float32) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float32)
        if len(samples) and np.abs(samples).max() > 1.0 + 1e-6:
            raise DatasetError(f"{path}: float samples exceed [-1, 1]")
    else:
        raise DatasetError(f"{path}: unsupported sample format {data.dtype}")

    target = int(round(expected_rate * clip_seconds))
    if len(samples) > target:
        warnings.warn(f"{path}: {len(samples)} samples truncated to {target}", stacklevel=2)
        samples = samples[:target]
    elif len(samples) < target:
        samples = np.pad(samples, (0, target - len(samples)))
    return AudioClip(samples, expected_rate, category_id, str(path))


def write_wav(path, samples: np.ndarray, sample_rate: int) -> None:
    """Write float samples in [-1, 1] as PCM16."""
    pcm = np.clip(np.round(np.asarray(samples, dtype=np.float64) * 32767.0), -32768, 32767)
    wavfile.write(str(path), sample_rate, pcm.astype(np.int16))


def effective_length(clip: AudioClip, threshold: float = 0.0) -> float:
    """Duration up to the last sample with |value| > threshold; 0.0 if all below."""
    idx = np.nonzero(np.abs(clip.samples) > threshold)[0]
    if len(idx) == 0:
        return 0.0
    return float(idx[-1] + 1) / clip.sample_rate


def _read_manifest(manifest_path: Path, root: Path, table: CategoryTable):
    assignments: list[tuple[Path, int]] = []
    bad: list[str] = []
    with open(manifest_path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().lower() in ("filename", "file"):
                continue
            fname, raw_id = row[0].strip(), row[1].strip()
            try:
                cid = int(raw_id)
            except ValueError:
                cid = -1
            if not 0 <= cid < len(table):
                bad.append(fname)
                continue
            assignments.append((root / fname, cid))
    if bad:
        raise DatasetError(f"manifest rows with unknown category: {bad}")
    return assignments


def _assignments_from_layout(root: Path, table: CategoryTable):
    canon_to_id = {_canon(name): cid for cid, name in table.entries}
    assignments: list[tuple[Path, int]] = []
    unknown: list[str] = []
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        cid = canon_to_id.get(_canon(sub.name))
        wavs = sorted(sub.rglob("*.wav"))
        if cid is None:
            unknown.extend(str(w) for w in wavs)
            continue
        assignments.extend((w, cid) for w in wavs)
    stray = sorted(str(p) for p in root.glob("*.wav"))
    unknown.extend(stray)
    if unknown:
        raise DatasetError(f"files with unknown category label: {unknown}")
    return assignments


def list_assignments(
    root,
    table: CategoryTable | None = None,
    manifest: str | Path | None = None,
) -> list[tuple[Path, int]]:
    """All (wav path, category id) pairs under a corpus root."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root is not a directory: {root}")
    table = table or CategoryTable.default()
    if manifest is not None:
        return _read_manifest(Path(manifest), root, table)
    return _assignments_from_layout(root, table)


def scan_dataset(
    root,
    table: CategoryTable | None = None,
    manifest: str | Path | None = None,
    expected_rate: int = 22050,
    clip_seconds: float = 4.0,
    threshold: float = 0.0,
    workers: int = 4,
) -> DatasetCatalog:
    """Walk the corpus, count clips per category, and record effective lengths."""
    table = table or CategoryTable.default()
    assignments = list_assignments(root, table, manifest)

    counts = {cid: 0 for cid, _ in table.entries}
    lengths: dict[int, list[float]] = {cid: [] for cid, _ in table.entries}

    def measure(item):
        path, cid = item
        clip = load_clip(path, expected_rate, clip_seconds, cid)
        return cid, effective_length(clip, threshold)

    if workers > 1 and len(assignments) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(measure, assignments))
    else:
        results = [measure(a) for a in assignments]

    for cid, length in results:
        counts[cid] += 1
        lengths[cid].append(length)

    return DatasetCatalog(
        clips_per_category=counts,
        total=sum(counts.values()),
        effective_lengths=lengths,
        clip_seconds=clip_seconds,
        table=table,
    )


def length_histogram(catalog: DatasetCatalog, bins: int):
    """Per-category histograms of effective lengths over [0, clip_seconds].

    Returns (bin_edges, {category_id: counts}); counts per category sum to
    that category's clip count.
    """
    if bins < 1:
        raise DatasetError("bins must be >= 1")
    edges = np.linspace(0.0, catalog.clip_seconds, bins + 1)
    hists = {}
    for cid, lengths in catalog.effective_lengths.items():
        counts, _ = np.histogram(lengths, bins=bins, range=(0.0, catalog.clip_seconds))
        hists[cid] = counts
    return edges, hists


def full_length_fraction(catalog: DatasetCatalog, tolerance: float = 0.0) -> float:
    """Fraction of clips whose unpadded length reaches the full clip duration."""
    if catalog.total == 0:
        return 0.0
    hits = sum(
        1
        for lengths in catalog.effective_lengths.values()
        for length in lengths
        if length >= catalog.clip_seconds - tolerance
    )
    return hits / catalog.total


def catalog_report(catalog: DatasetCatalog) -> dict:
    """JSON-friendly summary: counts, totals, and full-length fractions."""
    per_category = {}
    for cid, name in catalog.table.entries:
        lengths = catalog.effective_lengths.get(cid, [])
        n = catalog.clips_per_category.get(cid, 0)
        at_full = sum(1 for v in lengths if v >= catalog.clip_seconds)
        per_category[name] = {
            "category_id": cid,
            "count": n,
            "fraction_full_length": (at_full / n) if n else 0.0,
            "mean_effective_seconds": float(np.mean(lengths)) if lengths else 0.0,
        }
    return {
        "total": catalog.total,
        "clip_seconds": catalog.clip_seconds,
        "fraction_full_length_exact": full_length_fraction(catalog),
        # tolerant variant: clips whose tail falls within 10 ms of full length
        "fraction_full_length_within_10ms": full_length_fraction(catalog, tolerance=0.01),
        "categories": per_category,
    }


def write_report(catalog: DatasetCatalog, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(catalog_report(catalog), fh, indent=2)


def write_histogram_csv(catalog: DatasetCatalog, bins: int, path) -> None:
    edges, hists = length_histogram(catalog, bins)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["category", "bin_start", "bin_end", "count"])
        for cid, name in catalog.table.entries:
            for b in range(bins):
                writer.writerow([name, f"{edges[b]:.6f}", f"{edges[b + 1]:.6f}", int(hists[cid][b])])
