"""Fourier and wavelet transforms.

Everything here is self-contained numpy: a radix-2 FFT (with a direct-sum
DFT kept around as an oracle), STFT, and a continuous wavelet transform with
its numerically calibrated inverse. Wavelet atoms are discretized, mean-
corrected and L2-normalized, so a matched filter response peaks at 1.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .signal_io import Waveform


@dataclass
class Spectrum:
    """Complex FFT bins plus the frequency step between adjacent bins."""

    bins: np.ndarray
    bin_hz: float


def next_pow2(n: int) -> int:
    """Smallest power of two >= n."""
    return 1 << max(0, (int(n) - 1).bit_length())


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def dft_naive(x, sample_rate: float = 1.0) -> Spectrum:
    """Direct O(N^2) discrete Fourier transform (test oracle)."""
    x = np.asarray(x)
    if x.size < 1:
        raise ContractError("dft_naive needs at least one sample")
    n = x.size
    k = np.arange(n)
    basis = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return Spectrum(basis @ x.astype(np.complex128), sample_rate / n)


def _fft_pow2(a: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Iterative radix-2 Cooley-Tukey along the last axis (N must be 2^k)."""
    a = np.asarray(a, dtype=np.complex128)
    n = a.shape[-1]
    levels = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(levels):
        rev |= ((idx >> b) & 1) << (levels - 1 - b)
    out = a[..., rev]

    sign = 1.0 if inverse else -1.0
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(sign * 2j * np.pi * np.arange(half) / size)
        blocks = out.reshape(*out.shape[:-1], n // size, size)
        even = blocks[..., :half]
        odd = blocks[..., half:] * tw
        out = np.concatenate([even + odd, even - odd], axis=-1).reshape(*out.shape)
        size *= 2
    if inverse:
        out = out / n
    return out


def fft(x, sample_rate: float = 1.0) -> Spectrum:
    """Radix-2 FFT. The input length must be a power of two (caller pads)."""
    x = np.asarray(x)
    if not _is_pow2(x.size):
        raise ContractError(f"fft length must be a power of two, got {x.size}")
    return Spectrum(_fft_pow2(x), sample_rate / x.size)


def ifft(spectrum: Spectrum) -> np.ndarray:
    """Inverse of :func:`fft`; returns complex samples."""
    bins = np.asarray(spectrum.bins)
    if not _is_pow2(bins.size):
        raise ContractError(f"ifft length must be a power of two, got {bins.size}")
    return _fft_pow2(bins, inverse=True)


def power_spectrum(x, pad_to: int | None = None) -> np.ndarray:
    """|FFT|^2 over the non-negative bins [0, N/2], zero-padded to a power of two."""
    x = np.asarray(x, dtype=np.float64)
    nfft = pad_to if pad_to is not None else next_pow2(x.size)
    if not _is_pow2(nfft) or nfft < x.size:
        raise ContractError(f"pad_to must be a power of two >= len(x), got {pad_to}")
    buf = np.zeros(nfft)
    buf[: x.size] = x
    bins = _fft_pow2(buf)
    return np.abs(bins[: nfft // 2 + 1]) ** 2


def stft(x, window_len: int, hop: int, window_fn=np.hanning) -> np.ndarray:
    """Short-time power spectrogram, shape (n_frames, nfft/2 + 1).

    Frames are windowed (Hann by default), zero-padded to the next power of
    two, and reduced to |FFT|^2. n_frames = floor((N - window_len)/hop) + 1.
    """
    x = np.asarray(x, dtype=np.float64)
    if hop <= 0:
        raise ContractError(f"hop must be positive, got {hop}")
    if window_len > x.size:
        raise ContractError("window_len exceeds signal length")
    window = window_fn(window_len)
    n_frames = (x.size - window_len) // hop + 1
    nfft = next_pow2(window_len)
    frames = np.zeros((n_frames, nfft))
    for i in range(n_frames):
        frames[i, :window_len] = x[i * hop : i * hop + window_len] * window
    bins = _fft_pow2(frames)
    return np.abs(bins[:, : nfft // 2 + 1]) ** 2


# --------------------------------------------------------------------------
# Wavelets
# --------------------------------------------------------------------------

_MORLET_OMEGA0 = 6.0


@dataclass(frozen=True)
class WaveletBasis:
    """A mother wavelet: its name, truncation half-width, and the factor
    mapping scale to peak frequency (f_peak = center_freq_factor * sr / scale).
    """

    kind: str
    base_support: float
    center_freq_factor: float


MORLET = WaveletBasis("morlet", 6.0, _MORLET_OMEGA0 / (2.0 * np.pi))
MEXICAN_HAT = WaveletBasis("mexican_hat", 6.0, np.sqrt(2.0) / (2.0 * np.pi))

_BASES = {b.kind: b for b in (MORLET, MEXICAN_HAT)}


def get_basis(kind: str) -> WaveletBasis:
    try:
        return _BASES[kind]
    except KeyError:
        raise ContractError(f"unknown wavelet basis {kind!r}") from None


def _mother(kind: str, t: np.ndarray) -> np.ndarray:
    if kind == "morlet":
        # zero-mean corrected complex Morlet
        correction = np.exp(-0.5 * _MORLET_OMEGA0**2)
        return (np.pi**-0.25) * (np.exp(1j * _MORLET_OMEGA0 * t) - correction) * np.exp(
            -0.5 * t**2
        )
    if kind == "mexican_hat":
        return (2.0 / (np.sqrt(3.0) * np.pi**0.25)) * (1.0 - t**2) * np.exp(-0.5 * t**2)
    raise ContractError(f"unknown wavelet basis {kind!r}")


def wavelet_samples(basis: WaveletBasis, scale: float, n: int) -> np.ndarray:
    """Discretize the wavelet at `scale` on an n-point grid centered at (n-1)/2.

    The residual sample mean is removed (admissibility) and the result is
    L2-normalized.
    """
    if scale <= 0:
        raise ContractError(f"scale must be positive, got {scale}")
    if n < 3:
        raise ContractError(f"need at least 3 samples, got {n}")
    t = (np.arange(n) - (n - 1) / 2.0) / scale
    psi = _mother(basis.kind, t) / np.sqrt(scale)
    psi = psi - psi.mean()
    return psi / np.linalg.norm(psi)


def _atom_length(basis: WaveletBasis, scale: float) -> int:
    half = int(np.ceil(basis.base_support * scale))
    return 2 * half + 1


def scales_for_band(
    basis: WaveletBasis, sample_rate: float, f_min: float, f_max: float, n_scales: int
) -> np.ndarray:
    """Geometric scale grid whose peak frequencies span [f_min, f_max]."""
    if not 0 < f_min < f_max:
        raise ContractError("need 0 < f_min < f_max")
    freqs = np.geomspace(f_max, f_min, n_scales)
    return basis.center_freq_factor * sample_rate / freqs


def _convolve_same(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Full convolution trimmed to len(x), centered on the kernel midpoint.

    Unlike np.convolve(mode="same"), stays aligned to x even when the kernel
    is longer than the signal.
    """
    full = np.convolve(x, kernel)
    start = (kernel.size - 1) // 2
    return full[start : start + x.size]


@dataclass
class Scalogram:
    """CWT coefficients on a (scale, time) grid.

    `coefficients[s][i]` is the correlation of the signal with the scale-s
    atom centered at sample i*hop.
    """

    coefficients: np.ndarray
    scales: np.ndarray
    hop: int
    sample_rate: int
    signal_len: int
    basis_kind: str

    @property
    def peak_freqs(self) -> np.ndarray:
        """Per-scale peak frequency in Hz."""
        return _BASES[self.basis_kind].center_freq_factor * self.sample_rate / self.scales


def cwt(w: Waveform, scales, basis: WaveletBasis, hop: int = 1) -> Scalogram:
    """Continuous wavelet transform with zero-padded (same-length) evaluation."""
    scales = np.atleast_1d(np.asarray(scales, dtype=np.float64))
    if scales.size == 0:
        raise ContractError("cwt needs at least one scale")
    if np.any(scales <= 0):
        raise ContractError("all scales must be positive")
    if hop <= 0:
        raise ContractError(f"hop must be positive, got {hop}")

    x = w.samples
    complex_basis = basis.kind == "morlet"
    n_times = int(np.ceil(len(x) / hop))
    coeffs = np.zeros((scales.size, n_times), dtype=np.complex128 if complex_basis else np.float64)
    for s, a in enumerate(scales):
        atom = wavelet_samples(basis, a, _atom_length(basis, a))
        row = _convolve_same(x, np.conj(atom)[::-1])
        coeffs[s] = row[::hop]
    return Scalogram(coeffs, scales, hop, w.sample_rate, len(x), basis.kind)


def _check_geometric(scales: np.ndarray) -> None:
    if scales.size == 1:
        warnings.warn("single-scale inverse is lossy", stacklevel=3)
        return
    ratios = scales[1:] / scales[:-1]
    if np.any(ratios <= 1.0) or np.ptp(ratios) > 0.01 * ratios.mean():
        raise ContractError("icwt requires an ascending geometric scale grid")


def admissibility_constant(
    basis: WaveletBasis, scales, signal_len: int, hop: int = 1
) -> float:
    """Numeric normalization for the discrete inverse CWT.

    Accumulates the synthesis response sum_s |Psi_s(w)|^2 / a_s on an FFT
    grid (folded for the real-part output) and returns its level over the
    covered band.
    """
    scales = np.atleast_1d(np.asarray(scales, dtype=np.float64))
    nfft = next_pow2(max(signal_len, _atom_length(basis, scales.max())))
    response = np.zeros(nfft)
    for a in scales:
        atom = wavelet_samples(basis, a, _atom_length(basis, a))
        buf = np.zeros(nfft, dtype=np.complex128)
        buf[: atom.size] = atom
        response += np.abs(_fft_pow2(buf)) ** 2 / a
    folded = 0.5 * (response + np.roll(response[::-1], 1))
    # broadband bases (mexican hat) roll off slowly at the grid edges, so
    # estimate the plateau level from the top of the response only
    band = folded >= 0.9 * folded.max()
    return float(np.median(folded[band])) / hop


def icwt(scalogram: Scalogram, basis: WaveletBasis) -> Waveform:
    """Invert a CWT by summing scale-wise synthesis convolutions.

    Exact up to the flatness of the accumulated basis response over the
    signal band; callers should keep signal content inside the covered
    scale range.
    """
    scales = np.asarray(scalogram.scales, dtype=np.float64)
    _check_geometric(scales)
    n = scalogram.signal_len
    hop = scalogram.hop

    acc = np.zeros(n, dtype=np.complex128)
    for a, row in zip(scales, scalogram.coefficients):
        up = np.zeros(n, dtype=np.complex128)
        up[::hop][: row.size] = row
        atom = wavelet_samples(basis, a, _atom_length(basis, a))
        acc += _convolve_same(up, atom) / a

    c_psi = admissibility_constant(basis, scales, n, hop)
    return Waveform(np.real(acc) / c_psi, scalogram.sample_rate)


def write_scalogram_csv(scalogram: Scalogram, path) -> None:
    """One row per scale: the scale value followed by coefficient magnitudes."""
    mags = np.abs(scalogram.coefficients)
    with open(path, "w") as fh:
        fh.write(
            f"# basis={scalogram.basis_kind} hop={scalogram.hop} "
            f"sample_rate={scalogram.sample_rate}\n"
        )
        fh.write("scale," + ",".join(f"t{i}" for i in range(mags.shape[1])) + "\n")
        for a, row in zip(scalogram.scales, mags):
            fh.write(f"{a:.8g}," + ",".join(f"{v:.8g}" for v in row) + "\n")
