"""Audio I/O, resampling, segmentation, and dataset manifest loading.

WAV support is deliberately narrow: RIFF/WAVE containers holding 16-bit PCM
or 32-bit IEEE float frames, any channel count (averaged to mono on read).
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, FormatError, UnsupportedFormatError, ValidationError

_PCM16 = 1
_IEEE_FLOAT = 3


@dataclass
class Waveform:
    """A mono signal: sample values (nominally in [-1, 1]) plus their rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size < 1:
            raise ValidationError("waveform must be a non-empty 1-D sample sequence")
        if not np.all(np.isfinite(self.samples)):
            raise ValidationError("waveform contains non-finite samples")
        if int(self.sample_rate) <= 0:
            raise ValidationError(f"sample_rate must be positive, got {self.sample_rate}")
        self.sample_rate = int(self.sample_rate)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        """Length in seconds."""
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class ManifestEntry:
    path: Path
    fold: int
    class_id: int
    class_name: str


@dataclass
class DatasetIndex:
    """Manifest entries grouped into the standard 10-fold layout."""

    entries: list[ManifestEntry] = field(default_factory=list)

    def folds(self) -> list[int]:
        return sorted({e.fold for e in self.entries})

    def by_fold(self) -> dict[int, list[ManifestEntry]]:
        groups: dict[int, list[ManifestEntry]] = {}
        for e in self.entries:
            groups.setdefault(e.fold, []).append(e)
        return groups

    def __len__(self) -> int:
        return len(self.entries)


def _read_chunks(data: bytes):
    """Yield (chunk id, payload) pairs from the body of a RIFF file."""
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, pos)
        payload = data[pos + 8 : pos + 8 + size]
        if len(payload) < size:
            raise FormatError(f"truncated {cid!r} chunk: expected {size} bytes")
        yield cid, payload
        pos += 8 + size + (size & 1)  # chunks are word-aligned


def read_wav(path) -> Waveform:
    """Read a RIFF/WAVE file as a mono waveform.

    16-bit PCM samples are scaled by 1/32768; multichannel audio is averaged
    to mono.

    Raises:
        FormatError: the file is not a well-formed RIFF/WAVE container.
        UnsupportedFormatError: codec other than PCM16 / float32.
    """
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise FormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    frames = None
    for cid, payload in _read_chunks(data):
        if cid == b"fmt ":
            if len(payload) < 16:
                raise FormatError(f"{path}: fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", payload, 0)
        elif cid == b"data":
            frames = payload
    if fmt is None or frames is None:
        raise FormatError(f"{path}: missing fmt or data chunk")

    audio_format, n_channels, sample_rate, _, _, bits = fmt
    if n_channels < 1:
        raise FormatError(f"{path}: channel count {n_channels}")
    if audio_format == _PCM16 and bits == 16:
        raw = np.frombuffer(frames[: len(frames) - len(frames) % (2 * n_channels)], dtype="<i2")
        samples = raw.astype(np.float64) / 32768.0
    elif audio_format == _IEEE_FLOAT and bits == 32:
        raw = np.frombuffer(frames[: len(frames) - len(frames) % (4 * n_channels)], dtype="<f4")
        samples = raw.astype(np.float64)
    else:
        raise UnsupportedFormatError(
            f"{path}: unsupported codec (format tag {audio_format}, {bits}-bit)"
        )
    if samples.size == 0:
        raise FormatError(f"{path}: empty data chunk")
    if n_channels > 1:
        samples = samples.reshape(-1, n_channels).mean(axis=1)
    return Waveform(samples, sample_rate)


def write_wav(path, w: Waveform, encoding: str = "pcm16") -> None:
    """Write a mono waveform as RIFF/WAVE, 16-bit PCM (default) or float32."""
    if encoding == "pcm16":
        fmt_tag, bits = _PCM16, 16
        clipped = np.clip(np.round(w.samples * 32767.0), -32768, 32767)
        payload = clipped.astype("<i2").tobytes()
    elif encoding == "float32":
        fmt_tag, bits = _IEEE_FLOAT, 32
        payload = w.samples.astype("<f4").tobytes()
    else:
        raise ContractError(f"unknown encoding {encoding!r}")

    byte_rate = w.sample_rate * bits // 8
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, fmt_tag, 1, w.sample_rate, byte_rate, bits // 8, bits,
        b"data", len(payload),
    )
    Path(path).write_bytes(header + payload)


def _antialias_kernel(cutoff: float, half_width: int = 32) -> np.ndarray:
    """Hann-windowed sinc low-pass, unity DC gain. `cutoff` in cycles/sample."""
    u = np.arange(-half_width, half_width + 1, dtype=np.float64)
    taps = 2.0 * cutoff * np.sinc(2.0 * cutoff * u)
    taps *= np.hanning(u.size)
    return taps / taps.sum()


def resample(w: Waveform, target_sr: int) -> Waveform:
    """Resample to `target_sr` Hz.

    Downsampling first applies a windowed-sinc low-pass at 0.45x the target
    Nyquist, then linear interpolation; upsampling interpolates directly.
    Output length is round(n * target_sr / sr).
    """
    if target_sr <= 0:
        raise ContractError(f"target_sr must be positive, got {target_sr}")
    if target_sr == w.sample_rate:
        return Waveform(w.samples.copy(), w.sample_rate)

    x = w.samples
    if target_sr < w.sample_rate:
        cutoff = 0.45 * (target_sr / 2.0) / w.sample_rate
        x = np.convolve(x, _antialias_kernel(cutoff), mode="same")

    n_out = int(round(len(w) * target_sr / w.sample_rate))
    n_out = max(n_out, 1)
    positions = np.arange(n_out) * (w.sample_rate / target_sr)
    out = np.interp(positions, np.arange(x.size), x)
    return Waveform(out, target_sr)


def clip_or_pad(w: Waveform, seconds: float) -> Waveform:
    """Force the waveform to exactly `seconds` long: truncate or zero-pad at the end."""
    if seconds <= 0:
        raise ContractError(f"seconds must be positive, got {seconds}")
    n_target = int(round(seconds * w.sample_rate))
    if len(w) >= n_target:
        out = w.samples[:n_target]
    else:
        out = np.concatenate([w.samples, np.zeros(n_target - len(w))])
    return Waveform(out, w.sample_rate)


def split_clips(w: Waveform, clip_seconds: float) -> list[Waveform]:
    """Cut into contiguous, non-overlapping clips of `clip_seconds` each.

    The duration must divide evenly into clips.
    """
    n_clip = int(round(clip_seconds * w.sample_rate))
    if n_clip < 1:
        raise ContractError(f"clip_seconds too small: {clip_seconds}")
    if len(w) % n_clip != 0:
        raise ContractError(
            f"clip length {n_clip} does not divide signal length {len(w)}"
        )
    return [
        Waveform(w.samples[i : i + n_clip].copy(), w.sample_rate)
        for i in range(0, len(w), n_clip)
    ]


_REQUIRED_COLUMNS = ("slice_file_name", "fold", "classID", "class")


def load_manifest(csv_path, audio_root) -> DatasetIndex:
    """Load an UrbanSound8K-style metadata CSV.

    Audio files are expected under ``audio_root/fold<k>/<slice_file_name>``.
    Entries come back sorted by (fold, filename).

    Raises:
        FormatError: a required column is missing.
        ValidationError: fold outside 1..10, class id outside 0..9, or a
            referenced file does not exist.
    """
    audio_root = Path(audio_root)
    entries = []
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in _REQUIRED_COLUMNS if c not in header]
        if missing:
            raise FormatError(f"{csv_path}: missing column(s) {', '.join(missing)}")
        for row in reader:
            fold = int(row["fold"])
            class_id = int(row["classID"])
            if not 1 <= fold <= 10:
                raise ValidationError(f"fold {fold} outside 1..10")
            if not 0 <= class_id <= 9:
                raise ValidationError(f"classID {class_id} outside 0..9")
            path = audio_root / f"fold{fold}" / row["slice_file_name"]
            if not path.exists():
                raise ValidationError(f"manifest references missing file {path}")
            entries.append(ManifestEntry(path, fold, class_id, row["class"]))
    entries.sort(key=lambda e: (e.fold, e.path.name))
    return DatasetIndex(entries)
