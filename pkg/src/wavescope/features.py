"""MFCC extraction: Hann frames -> power spectrum -> mel filterbank -> log -> DCT-II."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .signal_io import Waveform
from .transforms import _fft_pow2, next_pow2

_LOG_FLOOR = 1e-10


@dataclass
class MfccConfig:
    n_mfcc: int = 40
    n_mels: int | None = None  # defaults to max(40, 2 * n_mfcc)
    frame_ms: float = 25.0
    hop_ms: float = 10.0
    fmin: float = 0.0
    fmax: float | None = None  # defaults to Nyquist

    def resolved_n_mels(self) -> int:
        return self.n_mels if self.n_mels is not None else max(40, 2 * self.n_mfcc)


@dataclass
class FeatureMatrix:
    """Coefficients arranged [n_mfcc x n_frames] plus the frame rate in Hz."""

    values: np.ndarray
    frame_rate: float


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    sample_rate: int, n_fft: int, n_mels: int, fmin: float = 0.0, fmax: float | None = None
) -> np.ndarray:
    """Triangular mel filters, shape (n_mels, n_fft // 2 + 1)."""
    if n_mels < 1:
        raise ContractError(f"n_mels must be >= 1, got {n_mels}")
    nyquist = sample_rate / 2.0
    if fmax is None:
        fmax = nyquist
    if fmax > nyquist:
        raise ContractError(f"fmax {fmax} exceeds Nyquist {nyquist}")

    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    bin_freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft

    bank = np.zeros((n_mels, bin_freqs.size))
    for i in range(n_mels):
        left, center, right = edges[i], edges[i + 1], edges[i + 2]
        rising = (bin_freqs - left) / max(center - left, 1e-12)
        falling = (right - bin_freqs) / max(right - center, 1e-12)
        bank[i] = np.maximum(0.0, np.minimum(rising, falling))
    return bank


def _dct2_ortho_matrix(n: int) -> np.ndarray:
    k = np.arange(n)[:, None]
    m = np.arange(n)[None, :]
    mat = np.cos(np.pi * (2 * m + 1) * k / (2 * n)) * np.sqrt(2.0 / n)
    mat[0] /= np.sqrt(2.0)
    return mat


def mfcc(w: Waveform, cfg: MfccConfig) -> FeatureMatrix:
    """Extract MFCCs. Frame count = floor((N - frame) / hop) + 1."""
    frame_len = int(round(cfg.frame_ms * w.sample_rate / 1000.0))
    hop = int(round(cfg.hop_ms * w.sample_rate / 1000.0))
    if frame_len < 1 or cfg.frame_ms < 1.0:
        raise ContractError(f"frame_ms must be >= 1 ms, got {cfg.frame_ms}")
    if len(w) < frame_len:
        raise ContractError("signal shorter than one frame")
    n_mels = cfg.resolved_n_mels()
    if cfg.n_mfcc > n_mels:
        raise ContractError(f"n_mfcc {cfg.n_mfcc} exceeds n_mels {n_mels}")

    nfft = next_pow2(frame_len)
    bank = mel_filterbank(w.sample_rate, nfft, n_mels, cfg.fmin, cfg.fmax)
    dct = _dct2_ortho_matrix(n_mels)[: cfg.n_mfcc]
    window = np.hanning(frame_len)

    n_frames = (len(w) - frame_len) // hop + 1
    frames = np.zeros((n_frames, nfft))
    for i in range(n_frames):
        frames[i, :frame_len] = w.samples[i * hop : i * hop + frame_len] * window
    power = np.abs(_fft_pow2(frames)[:, : nfft // 2 + 1]) ** 2
    mel_energy = power @ bank.T
    coeffs = dct @ np.log(mel_energy + _LOG_FLOOR).T
    return FeatureMatrix(coeffs, w.sample_rate / hop)


def write_features_csv(fm: FeatureMatrix, cfg: MfccConfig, path) -> None:
    """Row-major CSV: a config header comment, then one row per coefficient."""
    with open(path, "w") as fh:
        fh.write(
            f"# n_mfcc={cfg.n_mfcc} n_mels={cfg.resolved_n_mels()} "
            f"frame_ms={cfg.frame_ms} hop_ms={cfg.hop_ms} "
            f"fmin={cfg.fmin} fmax={cfg.fmax} frame_rate={fm.frame_rate}\n"
        )
        fh.write("coeff," + ",".join(f"t{i}" for i in range(fm.values.shape[1])) + "\n")
        for k, row in enumerate(fm.values):
            fh.write(f"{k}," + ",".join(f"{v:.8g}" for v in row) + "\n")
