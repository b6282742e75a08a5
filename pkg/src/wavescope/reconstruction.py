"""Recover a waveform from first-layer activations.

Two inversion modes around the bias-subtracted activations S - b:

* ``least_squares`` -- treat the whole bank as one linear analysis operator
  A (strided valid correlation) and solve the ridge problem
  min_x ||A x - (S - b)||^2 + eps ||x||^2 by conjugate gradient on the
  normal equations. This is the well-posed reading of a per-filter kernel
  "inverse".
* ``spectral_division`` -- literal per-filter Wiener deconvolution:
  sum_m ifft(fft(S_m - b_m) conj(W_m) / (|W_m|^2 + eps)), scaled by 1/C_m.

Both are followed by optional moving-average smoothing and cross-correlation
realignment against the original when it is available.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .filter_analysis import FilterBank
from .signal_io import Waveform
from .transforms import _fft_pow2, next_pow2

MODES = ("least_squares", "spectral_division")


@dataclass
class ReconConfig:
    c_m: float = 1.0  # global normalization constant (paper experiment used 5.5)
    mode: str = "least_squares"
    ridge: float | None = None  # eps; default 1e-6 * max |W_m(f)|^2
    smooth_window: int = 5
    align_search: int | None = None  # +/- samples; default kernel_len
    cg_max_iter: int = 2000
    cg_tol: float = 1e-12

    def __post_init__(self):
        if self.c_m == 0:
            raise ContractError("c_m must be nonzero")
        if self.mode not in MODES:
            raise ContractError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.ridge is not None and self.ridge < 0:
            raise ContractError("ridge must be >= 0")


@dataclass
class ReconResult:
    recovered: Waveform
    shift: int
    rel_error: float | None
    coding_basis: np.ndarray | None = None
    cg_converged: bool = True


def _default_ridge(bank: FilterBank) -> float:
    nfft = next_pow2(2 * bank.kernel_len)
    peak = 0.0
    for row in bank.weights:
        buf = np.zeros(nfft)
        buf[: row.size] = row
        peak = max(peak, float(np.max(np.abs(_fft_pow2(buf)) ** 2)))
    return 1e-6 * peak


def analyze(bank: FilterBank, x: np.ndarray) -> np.ndarray:
    """Apply the bank as a strided valid correlation (no bias): (L,) -> (M, Lo)."""
    if x.size < bank.kernel_len:
        raise ContractError(f"signal length {x.size} < kernel length {bank.kernel_len}")
    win = np.lib.stride_tricks.sliding_window_view(x, bank.kernel_len)[:: bank.stride]
    return bank.weights @ win.T


def analyze_adjoint(bank: FilterBank, coeffs: np.ndarray, out_len: int) -> np.ndarray:
    """Adjoint of :func:`analyze`: scatter coefficients back to signal length."""
    m, lo = coeffs.shape
    k, s = bank.kernel_len, bank.stride
    up = np.zeros((m, (lo - 1) * s + 1))
    up[:, ::s] = coeffs
    pad_tail = out_len - (lo - 1) * s - 1
    if pad_tail < 0:
        raise ContractError("coefficient grid does not fit the requested length")
    gpad = np.pad(up, ((0, 0), (k - 1, pad_tail)))
    wing = np.lib.stride_tricks.sliding_window_view(gpad, k, axis=1)
    return np.einsum("mtk,mk->t", wing, bank.weights[:, ::-1])


def _cg_normal(bank: FilterBank, target: np.ndarray, length: int, eps: float,
               max_iter: int, tol: float) -> tuple[np.ndarray, bool]:
    """CG on (A^T A + eps I) x = A^T target; returns (best iterate, converged)."""

    def apply(v):
        return analyze_adjoint(bank, analyze(bank, v), length) + eps * v

    b = analyze_adjoint(bank, target, length)
    x = np.zeros(length)
    r = b.copy()
    p = r.copy()
    rs = float(r @ r)
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return x, True
    best_x, best_res = x.copy(), np.sqrt(rs)
    for _ in range(max_iter):
        ap = apply(p)
        denom = float(p @ ap)
        if denom <= 0:
            break
        alpha = rs / denom
        x += alpha * p
        r -= alpha * ap
        rs_new = float(r @ r)
        if np.sqrt(rs_new) < best_res:
            best_res = np.sqrt(rs_new)
            best_x = x.copy()
        if np.sqrt(rs_new) <= tol * b_norm:
            return best_x, True
        p = r + (rs_new / rs) * p
        rs = rs_new
    return best_x, False


def _smooth(x: np.ndarray, window: int) -> np.ndarray:
    if window <= 1:
        return x
    kernel = np.ones(window) / window
    return np.convolve(x, kernel, mode="same")


def realign(recovered: np.ndarray, original: np.ndarray, search: int) -> tuple[int, float]:
    """Shift (within +/- search samples) maximizing cross-correlation.

    Returns (shift, Pearson correlation at that shift). A small |correlation|
    means the alignment is low-confidence.
    """
    n = min(recovered.size, original.size)
    rec, orig = recovered[:n], original[:n]
    full = np.correlate(orig, rec, mode="full")  # lag s at index n-1+s
    lags = np.arange(-search, search + 1)
    idx = np.clip(n - 1 + lags, 0, full.size - 1)
    shift = int(lags[np.argmax(full[idx])])

    shifted = np.zeros(n)
    if shift >= 0:
        shifted[shift:] = rec[: n - shift]
    else:
        shifted[:shift] = rec[-shift:]
    denom = np.std(shifted) * np.std(orig)
    corr = float(np.mean((shifted - shifted.mean()) * (orig - orig.mean())) / denom) if denom > 0 else 0.0
    return shift, corr


def apply_shift(x: np.ndarray, shift: int) -> np.ndarray:
    out = np.zeros_like(x)
    if shift >= 0:
        out[shift:] = x[: x.size - shift]
    elif -shift < x.size:
        out[:shift] = x[-shift:]
    return out


def recon_error(x: np.ndarray, xhat: np.ndarray) -> float:
    """Relative L2 error ||x - xhat|| / ||x||."""
    n = min(x.size, xhat.size)
    ref = np.linalg.norm(x[:n])
    if ref == 0:
        raise ContractError("reference signal has zero energy")
    return float(np.linalg.norm(x[:n] - xhat[:n]) / ref)


def _recover_spectral(bank: FilterBank, coeffs: np.ndarray, length: int, eps: float) -> np.ndarray:
    m, lo = coeffs.shape
    k, stride = bank.kernel_len, bank.stride
    nfft = next_pow2(length + k)
    acc = np.zeros(length)
    for i in range(m):
        row = bank.weights[i]
        if not np.any(row):
            warnings.warn(f"filter {i} is identically zero; excluded from recovery", stacklevel=3)
            continue
        up = np.zeros(nfft)
        up[: (lo - 1) * stride + 1 : stride] = coeffs[i]
        wbuf = np.zeros(nfft)
        wbuf[:k] = row
        wspec = _fft_pow2(wbuf)
        inv = np.conj(wspec) / (np.abs(wspec) ** 2 + eps)
        acc += np.real(_fft_pow2(_fft_pow2(up) * inv, inverse=True))[:length]
    return acc * stride


def recover(
    coeffs: np.ndarray,
    bank: FilterBank,
    cfg: ReconConfig,
    original: np.ndarray | None = None,
    length: int | None = None,
) -> ReconResult:
    """Invert first-layer activations back to a waveform.

    `coeffs` is the raw conv output (bias still included), shape
    [n_filters x out_len] produced with this bank's stride. When `original`
    is given the result is realigned against it and the relative L2 error
    after alignment is reported.
    """
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.ndim != 2 or coeffs.shape[0] != bank.n_filters:
        raise ContractError(f"coefficients shape {coeffs.shape} does not match bank")
    if length is None:
        length = original.size if original is not None else (
            (coeffs.shape[1] - 1) * bank.stride + bank.kernel_len
        )
    eps = cfg.ridge if cfg.ridge is not None else _default_ridge(bank)
    target = coeffs - bank.biases[:, None]

    converged = True
    if cfg.mode == "least_squares":
        x, converged = _cg_normal(bank, target, length, eps, cfg.cg_max_iter, cfg.cg_tol)
    else:
        x = _recover_spectral(bank, target, length, eps)
    x = _smooth(x, cfg.smooth_window) / cfg.c_m

    shift, rel = 0, None
    if original is not None:
        search = cfg.align_search if cfg.align_search is not None else bank.kernel_len
        shift, _ = realign(x, original, search)
        x = apply_shift(x, shift)
        rel = recon_error(original, x)
    return ReconResult(Waveform(x, bank.sample_rate), shift, rel, cg_converged=converged)


def inverse_basis(bank: FilterBank, cfg: ReconConfig, length: int | None = None) -> np.ndarray:
    """Per-filter synthesis waveforms (the coding basis), [n_filters x length].

    In least-squares mode, row m is the ridge pseudo-inverse image of a unit
    coefficient for filter m at the center output position; in spectral mode
    it is the centered inverse Wiener filter. Zero kernels are excluded
    (zero row) with a warning. Rows are smoothed per the config.
    """
    if length is None:
        length = 8 * bank.kernel_len
    if length < bank.kernel_len:
        raise ContractError("length must cover at least one kernel")
    eps = cfg.ridge if cfg.ridge is not None else _default_ridge(bank)
    out = np.zeros((bank.n_filters, length))
    lo = (length - bank.kernel_len) // bank.stride + 1
    center = lo // 2

    for m in range(bank.n_filters):
        if not np.any(bank.weights[m]):
            warnings.warn(f"filter {m} is identically zero; excluded from basis", stacklevel=2)
            continue
        if cfg.mode == "least_squares":
            unit = np.zeros((bank.n_filters, lo))
            unit[m, center] = 1.0
            basis, _ = _cg_normal(bank, unit, length, eps, cfg.cg_max_iter, cfg.cg_tol)
        else:
            nfft = next_pow2(2 * length)
            wbuf = np.zeros(nfft)
            wbuf[: bank.kernel_len] = bank.weights[m]
            wspec = _fft_pow2(wbuf)
            inv = np.real(_fft_pow2(np.conj(wspec) / (np.abs(wspec) ** 2 + eps), inverse=True))
            centered = np.roll(inv, nfft // 2)
            start = nfft // 2 - length // 2
            basis = centered[start : start + length]
        out[m] = _smooth(basis, cfg.smooth_window)
    return out
