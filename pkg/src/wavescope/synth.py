"""Synthetic bandpass-noise dataset generator (desk-scale stand-in for the
urban-sound corpus) plus onset test signals."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import ContractError
from .signal_io import DatasetIndex, ManifestEntry, Waveform, write_wav

DEFAULT_CENTERS = (400.0, 1200.0, 3000.0)


def bandpass_noise(
    rng: np.random.Generator, n: int, sample_rate: int, center: float, width: float
) -> np.ndarray:
    """Random-phase noise whose spectrum is confined to center +/- width/2."""
    if not 0 < center < sample_rate / 2:
        raise ContractError(f"center {center} outside (0, Nyquist)")
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    mask = np.abs(freqs - center) <= width / 2.0
    if not np.any(mask):
        raise ContractError(f"band {center}+/-{width / 2} covers no FFT bin at n={n}")
    spec = np.zeros(freqs.size, dtype=np.complex128)
    spec[mask] = np.exp(2j * np.pi * rng.uniform(size=int(mask.sum())))
    x = np.fft.irfft(spec, n=n)
    return x / np.max(np.abs(x))


def class_centers(n_classes: int, centers=None) -> list[float]:
    """Band centers per class: the canonical 400/1200/3000 Hz triple for three
    classes, otherwise a log-spaced grid over the same range."""
    if centers is not None:
        if len(centers) != n_classes:
            raise ContractError(f"{len(centers)} centers for {n_classes} classes")
        return [float(c) for c in centers]
    if n_classes == len(DEFAULT_CENTERS):
        return list(DEFAULT_CENTERS)
    return list(np.geomspace(DEFAULT_CENTERS[0], DEFAULT_CENTERS[-1], n_classes))


def synth_dataset(
    out_dir,
    n_classes: int = 3,
    per_class: int = 100,
    seed: int = 0,
    sample_rate: int = 8000,
    seconds: float = 1.0,
    n_folds: int = 10,
    centers=None,
    width_factor: float = 0.25,
) -> Path:
    """Write fold<k>/ WAV files plus a metadata CSV; returns the CSV path.

    Class c emits bandpass noise at its center frequency (relative width
    `width_factor`), with per-clip gain jitter. Clips are assigned to folds
    round-robin so every fold sees every class.
    """
    if not 1 <= n_folds <= 10:
        raise ContractError(f"n_folds must be in 1..10, got {n_folds}")
    if n_classes > 10:
        raise ContractError("at most 10 classes (manifest schema limit)")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    freq_centers = class_centers(n_classes, centers)
    n = int(round(seconds * sample_rate))

    rows = []
    for class_id, center in enumerate(freq_centers):
        name = f"band{int(round(center))}hz"
        for k in range(per_class):
            fold = (class_id * per_class + k) % n_folds + 1
            x = bandpass_noise(rng, n, sample_rate, center, width_factor * center)
            x *= rng.uniform(0.5, 0.9)
            fname = f"synth-{class_id}-{k:03d}.wav"
            fold_dir = out_dir / f"fold{fold}"
            fold_dir.mkdir(exist_ok=True)
            write_wav(fold_dir / fname, Waveform(x, sample_rate))
            rows.append((fname, fold, class_id, name))

    manifest = out_dir / "meta.csv"
    with open(manifest, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["slice_file_name", "fold", "classID", "class"])
        writer.writerows(rows)
    return manifest


def make_onset_clip(
    rng: np.random.Generator,
    sample_rate: int = 8000,
    seconds: float = 1.0,
    onset_s: float = 0.15,
    burst_s: float = 0.25,
    center: float = 900.0,
    width: float = 700.0,
) -> Waveform:
    """Silence, then a decaying bandpass burst: a bark-like test transient."""
    n = int(round(seconds * sample_rate))
    onset = int(round(onset_s * sample_rate))
    burst_len = int(round(burst_s * sample_rate))
    burst = bandpass_noise(rng, burst_len, sample_rate, center, width)
    burst *= np.exp(-np.linspace(0.0, 5.0, burst_len))
    x = np.zeros(n)
    x[onset : onset + burst_len] = burst[: max(0, n - onset)]
    return Waveform(0.8 * x, sample_rate)
