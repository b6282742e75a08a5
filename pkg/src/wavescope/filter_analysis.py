"""Spectral characterization of a learned first conv layer.

The first layer's weight matrix is treated as a filterbank: per-kernel power
spectra, center frequency / bandwidth estimates, the exponential trend of
sorted center frequencies, and side-by-side activation maps against a CWT.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import neuralnet as nn
from .errors import ContractError
from .models import load_checkpoint
from .signal_io import Waveform
from .transforms import Scalogram, WaveletBasis, cwt, power_spectrum


@dataclass
class FilterBank:
    """First-conv-layer weights [n_filters x kernel_len] plus biases."""

    weights: np.ndarray
    biases: np.ndarray
    stride: int
    sample_rate: int

    @property
    def n_filters(self) -> int:
        return self.weights.shape[0]

    @property
    def kernel_len(self) -> int:
        return self.weights.shape[1]


def bank_from_model(model: nn.Sequential, sample_rate: int) -> FilterBank:
    conv = model.first_conv()
    if not isinstance(conv, nn.Conv1d):
        raise ContractError("first conv layer is not 1-D; only the raw pipeline has a filterbank")
    if conv.in_channels != 1:
        raise ContractError("first conv layer must have a single input channel")
    return FilterBank(conv.weights[:, 0, :].copy(), conv.biases.copy(), conv.stride, sample_rate)


def bank_from_checkpoint(path) -> FilterBank:
    model, model_cfg, _, _ = load_checkpoint(path)
    return bank_from_model(model, model_cfg.sample_rate)


@dataclass
class FilterReport:
    """Per-filter spectral summary plus the exponential rank-curve fit."""

    center_freqs: np.ndarray  # NaN for filters with an all-zero spectrum
    bandwidths: np.ndarray
    spectra: np.ndarray  # [n_filters x (pad_to/2 + 1)]
    bin_hz: float
    sort_order: np.ndarray  # filter indices ordered by ascending center freq
    fit_alpha: float | None = None
    fit_beta: float | None = None
    fit_r2: float | None = None


@dataclass
class ActivationMap:
    """Absolute first-layer activations [n_filters x out_len] with time axis."""

    values: np.ndarray
    times: np.ndarray  # window-center time of each column, seconds
    sample_rate: int


def kernel_spectrum(bank: FilterBank, pad_to: int = 1024) -> tuple[np.ndarray, float]:
    """Per-filter power spectra, zero-padded to `pad_to` bins.

    Returns (spectra [n_filters x (pad_to/2+1)], bin width in Hz).
    """
    if pad_to < bank.kernel_len:
        raise ContractError(f"pad_to {pad_to} < kernel length {bank.kernel_len}")
    spectra = np.stack([power_spectrum(row, pad_to=pad_to) for row in bank.weights])
    return spectra, bank.sample_rate / pad_to


def estimate_fc_fb(spectrum: np.ndarray, bin_hz: float) -> tuple[float, float] | None:
    """Center frequency (peak bin) and -3 dB bandwidth (contiguous half-max
    region around the peak). Returns None for an all-zero spectrum."""
    spectrum = np.asarray(spectrum, dtype=np.float64)
    peak = spectrum.max()
    if peak <= 0.0:
        return None
    k = int(spectrum.argmax())
    half = peak / 2.0
    lo = k
    while lo > 0 and spectrum[lo - 1] >= half:
        lo -= 1
    hi = k
    while hi < spectrum.size - 1 and spectrum[hi + 1] >= half:
        hi += 1
    return k * bin_hz, (hi - lo + 1) * bin_hz


def sort_and_fit(center_freqs) -> tuple[np.ndarray, float, float, float]:
    """Sort center frequencies ascending and fit ln(f_c) = ln(alpha) + beta*rank.

    Filters with f_c <= 0 or NaN are excluded from the fit. R^2 of a
    zero-variance target is defined as 1.

    Returns (sorted f_c, alpha, beta, r_squared).
    """
    fc = np.asarray(center_freqs, dtype=np.float64)
    fc_sorted = np.sort(fc[~np.isnan(fc)])
    valid = fc_sorted[fc_sorted > 0]
    if valid.size < 3:
        raise ContractError(f"fit refused: only {valid.size} filters with positive f_c")
    rank = np.arange(valid.size, dtype=np.float64)
    logf = np.log(valid)
    beta, ln_alpha = np.polyfit(rank, logf, 1)
    residuals = logf - (ln_alpha + beta * rank)
    ss_tot = float(np.sum((logf - logf.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(residuals**2)) / ss_tot
    return fc_sorted, float(np.exp(ln_alpha)), float(beta), r2


def analyze_bank(bank: FilterBank, pad_to: int = 1024) -> FilterReport:
    """Full per-filter report; the exponential fit is skipped (None fields)
    when fewer than 3 filters have a nonzero spectrum."""
    spectra, bin_hz = kernel_spectrum(bank, pad_to)
    fc = np.full(bank.n_filters, np.nan)
    fb = np.full(bank.n_filters, np.nan)
    for m in range(bank.n_filters):
        est = estimate_fc_fb(spectra[m], bin_hz)
        if est is not None:
            fc[m], fb[m] = est
    order = np.argsort(np.where(np.isnan(fc), np.inf, fc), kind="stable")
    report = FilterReport(fc, fb, spectra, bin_hz, order)
    try:
        _, alpha, beta, r2 = sort_and_fit(fc)
    except ContractError:
        return report
    report.fit_alpha, report.fit_beta, report.fit_r2 = alpha, beta, r2
    return report


def _bank_conv(bank: FilterBank, x: np.ndarray) -> np.ndarray:
    layer = nn.Conv1d(1, bank.n_filters, bank.kernel_len, stride=bank.stride)
    layer.weights[...] = bank.weights[:, None, :]
    layer.biases[...] = bank.biases
    return layer.forward(x[None, None, :])[0]


def activation_map(bank: FilterBank, w: Waveform, subtract_bias: bool = False) -> ActivationMap:
    """Absolute first-layer response per filter over time.

    With `subtract_bias` the constant bias offset is removed first (display
    mode: silence maps to zero).
    """
    if w.sample_rate != bank.sample_rate:
        raise ContractError(
            f"waveform rate {w.sample_rate} != bank rate {bank.sample_rate}"
        )
    out = _bank_conv(bank, w.samples)
    if subtract_bias:
        out = out - bank.biases[:, None]
    out_len = out.shape[1]
    centers = np.arange(out_len) * bank.stride + (bank.kernel_len - 1) / 2.0
    return ActivationMap(np.abs(out), centers / w.sample_rate, w.sample_rate)


@dataclass
class CwtComparison:
    """Normalized time-marginal energy envelopes of a conv activation map and
    a CWT scalogram on a shared time grid, plus their Pearson correlation
    (None when either envelope is degenerate)."""

    times: np.ndarray
    conv_envelope: np.ndarray
    cwt_envelope: np.ndarray
    correlation: float | None
    conv_map: ActivationMap
    scalogram: Scalogram


def _energy_envelope(values: np.ndarray) -> np.ndarray:
    env = np.sum(np.abs(values) ** 2, axis=0)
    peak = env.max()
    return env / peak if peak > 0 else env


def compare_with_cwt(
    w: Waveform,
    bank: FilterBank,
    scales,
    basis: WaveletBasis,
    hop: int = 1,
    n_grid: int = 256,
) -> CwtComparison:
    """Feed one clip through the learned bank and a CWT, then compare the
    time-marginal energy envelopes."""
    amap = activation_map(bank, w, subtract_bias=True)
    scalogram = cwt(w, scales, basis, hop=hop)

    conv_env = _energy_envelope(amap.values)
    cwt_env = _energy_envelope(np.abs(scalogram.coefficients))
    cwt_times = np.arange(cwt_env.size) * hop / w.sample_rate

    t0 = max(amap.times[0], cwt_times[0])
    t1 = min(amap.times[-1], cwt_times[-1])
    grid = np.linspace(t0, t1, n_grid)
    conv_i = np.interp(grid, amap.times, conv_env)
    cwt_i = np.interp(grid, cwt_times, cwt_env)

    correlation = None
    if np.std(conv_i) > 0 and np.std(cwt_i) > 0:
        correlation = float(np.corrcoef(conv_i, cwt_i)[0, 1])
    return CwtComparison(grid, conv_i, cwt_i, correlation, amap, scalogram)


def write_filter_csv(report: FilterReport, path) -> None:
    """One row per filter: index, center frequency, bandwidth."""
    with open(path, "w") as fh:
        fh.write("filter,f_c_hz,f_b_hz\n")
        for m in range(report.center_freqs.size):
            fc, fb = report.center_freqs[m], report.bandwidths[m]
            fc_s = "" if np.isnan(fc) else f"{fc:.6g}"
            fb_s = "" if np.isnan(fb) else f"{fb:.6g}"
            fh.write(f"{m},{fc_s},{fb_s}\n")
        if report.fit_beta is not None:
            fh.write(
                f"# fit: alpha={report.fit_alpha:.6g} beta={report.fit_beta:.6g} "
                f"r2={report.fit_r2:.8g}\n"
            )


def write_comparison_csv(cmp: CwtComparison, path) -> None:
    with open(path, "w") as fh:
        corr = "" if cmp.correlation is None else f"{cmp.correlation:.6g}"
        fh.write(f"# pearson_correlation={corr}\n")
        fh.write("time_s,conv_envelope,cwt_envelope\n")
        for t, a, b in zip(cmp.times, cmp.conv_envelope, cmp.cwt_envelope):
            fh.write(f"{t:.6g},{a:.8g},{b:.8g}\n")
