"""Figure rendering. Every report path writes PNGs next to its CSV output."""

from __future__ import annotations

import numpy as np
import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .filter_analysis import ActivationMap, CwtComparison, FilterReport
from .models import TrainHistory
from .signal_io import Waveform
from .transforms import Scalogram

_DPI = 120


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_waveform_png(w: Waveform, path, title: str = "waveform") -> None:
    fig, ax = plt.subplots(figsize=(8, 2.4))
    t = np.arange(len(w)) / w.sample_rate
    ax.plot(t, w.samples, lw=0.6, color="k")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("amplitude")
    ax.set_title(title)
    _finish(fig, path)


def save_spectrum_png(freqs, power, path, title: str = "power spectrum") -> None:
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.plot(freqs, power, lw=0.8, color="k")
    ax.set_xlabel("frequency [Hz]")
    ax.set_ylabel("power")
    ax.set_title(title)
    _finish(fig, path)


def save_matrix_png(matrix, path, title: str = "", xlabel: str = "frame",
                    ylabel: str = "bin", extent=None, log_scale: bool = False) -> None:
    """Grayscale heatmap of a (rows x columns) matrix."""
    values = np.abs(np.asarray(matrix, dtype=np.float64))
    if log_scale:
        values = np.log10(values + 1e-12)
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.imshow(values, aspect="auto", origin="lower", cmap="gray", extent=extent,
              interpolation="nearest")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    _finish(fig, path)


def save_scalogram_png(s: Scalogram, path, title: str = "scalogram") -> None:
    extent = (0, s.signal_len / s.sample_rate, 0, s.scales.size)
    save_matrix_png(np.abs(s.coefficients), path, title=title,
                    xlabel="time [s]", ylabel="scale index", extent=extent)


def save_activation_png(amap: ActivationMap, path, title: str = "first-layer activations") -> None:
    extent = (amap.times[0], amap.times[-1], 0, amap.values.shape[0])
    save_matrix_png(amap.values, path, title=title, xlabel="time [s]",
                    ylabel="filter", extent=extent)


def save_filter_spectra_png(report: FilterReport, path) -> None:
    """All filter power spectra as rows, sorted by center frequency."""
    sorted_spectra = report.spectra[report.sort_order]
    n_bins = report.spectra.shape[1]
    extent = (0, (n_bins - 1) * report.bin_hz, 0, sorted_spectra.shape[0])
    save_matrix_png(sorted_spectra, path, title="filter spectra (sorted by center frequency)",
                    xlabel="frequency [Hz]", ylabel="filter rank", extent=extent, log_scale=True)


def save_filter_grid_png(report: FilterReport, path, n_show: int = 8) -> None:
    """A few individual filter spectra, one panel each."""
    picks = report.sort_order[:: max(1, len(report.sort_order) // n_show)][:n_show]
    freqs = np.arange(report.spectra.shape[1]) * report.bin_hz
    cols = 4
    rows = int(np.ceil(len(picks) / cols))
    fig, axes = plt.subplots(rows, cols, figsize=(10, 2.2 * rows), squeeze=False)
    for ax, m in zip(axes.ravel(), picks):
        ax.plot(freqs, report.spectra[m], lw=0.8, color="k")
        fc = report.center_freqs[m]
        ax.set_title(f"filter {m}" + ("" if np.isnan(fc) else f"  f_c={fc:.0f} Hz"), fontsize=8)
        ax.tick_params(labelsize=7)
    for ax in axes.ravel()[len(picks):]:
        ax.axis("off")
    _finish(fig, path)


def save_center_freq_fit_png(report: FilterReport, path) -> None:
    """Sorted center frequencies vs rank with the fitted exponential curve."""
    fc = report.center_freqs[~np.isnan(report.center_freqs)]
    fc = np.sort(fc)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(np.arange(fc.size), fc, "ko", ms=3, label="center frequency")
    if report.fit_beta is not None:
        rank = np.arange(fc[fc > 0].size)
        ax.plot(rank, report.fit_alpha * np.exp(report.fit_beta * rank), "r-",
                lw=1, label=f"fit (R$^2$={report.fit_r2:.3f})")
    ax.set_xlabel("filter rank")
    ax.set_ylabel("f_c [Hz]")
    ax.legend(fontsize=8)
    _finish(fig, path)


def save_envelope_pair_png(cmp: CwtComparison, path) -> None:
    fig, ax = plt.subplots(figsize=(8, 3))
    ax.plot(cmp.times, cmp.conv_envelope, "k-", lw=1, label="conv layer")
    ax.plot(cmp.times, cmp.cwt_envelope, "r--", lw=1, label="CWT")
    corr = "n/a" if cmp.correlation is None else f"{cmp.correlation:.3f}"
    ax.set_title(f"time-marginal energy envelopes (r={corr})")
    ax.set_xlabel("time [s]")
    ax.legend(fontsize=8)
    _finish(fig, path)


def save_overlay_png(original: Waveform, recovered: Waveform, path) -> None:
    fig, ax = plt.subplots(figsize=(8, 3))
    t = np.arange(len(original)) / original.sample_rate
    ax.plot(t, original.samples, "k-", lw=0.6, label="original")
    tr = np.arange(len(recovered)) / recovered.sample_rate
    ax.plot(tr, recovered.samples, "r-", lw=0.6, alpha=0.7, label="recovered")
    ax.set_xlabel("time [s]")
    ax.legend(fontsize=8)
    ax.set_title("recovered vs original")
    _finish(fig, path)


def save_basis_strip_png(bases: np.ndarray, path, n_show: int = 6) -> None:
    """A strip of per-filter coding-basis waveforms."""
    n_show = min(n_show, bases.shape[0])
    fig, axes = plt.subplots(1, n_show, figsize=(2.2 * n_show, 2.2), squeeze=False)
    for i, ax in enumerate(axes[0]):
        ax.plot(bases[i], "k-", lw=0.7)
        ax.set_title(f"basis {i}", fontsize=8)
        ax.tick_params(labelsize=6)
    _finish(fig, path)


def save_history_png(history: TrainHistory, path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    epochs = np.arange(len(history.losses))
    ax.plot(epochs, history.losses, "k-o", ms=3, label="loss")
    ax2 = ax.twinx()
    ax2.plot(epochs, history.accuracies, "r-s", ms=3, label="accuracy")
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss")
    ax2.set_ylabel("training accuracy")
    ax.set_title(f"stop: {history.stop_reason}")
    _finish(fig, path)
