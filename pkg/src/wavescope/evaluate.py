"""K-fold cross-validation with clip-level majority voting and Table-style
accuracy reports."""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, FormatError
from .features import MfccConfig, mfcc
from .models import ModelConfig, TrainConfig, build_model, predict_batch, train
from .signal_io import DatasetIndex, ManifestEntry, Waveform, clip_or_pad, read_wav, resample, split_clips

# reported reference accuracies for the full corpus (not computed here)
REFERENCE_BASELINES = {"svm_rbf": 0.70, "cnn_logmel": 0.737}


def majority_vote(clip_predictions) -> int:
    """Most frequent class id; ties break toward the lowest id."""
    if len(clip_predictions) == 0:
        raise ContractError("majority_vote needs at least one prediction")
    counts = Counter(int(c) for c in clip_predictions)
    best = max(counts.values())
    return min(c for c, n in counts.items() if n == best)


@dataclass
class FoldResult:
    fold: int
    predictions: list[tuple[str, int, int]]  # (file name, true class, predicted class)
    accuracy: float


@dataclass
class EvalReport:
    pipeline: str
    kernel_len: int | None
    n_filters: int | None
    n_mfcc: int | None
    freq_khz: float
    fold_ids: list[int] = field(default_factory=list)
    fold_accuracies: list[float] = field(default_factory=list)

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.fold_accuracies)) if self.fold_accuracies else float("nan")


def load_clip(entry: ManifestEntry, sample_rate: int, seconds: float) -> Waveform:
    w = read_wav(entry.path)
    w = resample(w, sample_rate)
    return clip_or_pad(w, seconds)


def _as_model_input(w: Waveform, model_cfg: ModelConfig, mfcc_cfg: MfccConfig | None):
    if model_cfg.arch == "raw":
        return w.samples[None, :]
    fm = mfcc(w, mfcc_cfg or MfccConfig(n_mfcc=model_cfg.n_mfcc))
    return fm.values[None, :, :]


def prepare_inputs(
    entries,
    model_cfg: ModelConfig,
    vote_seconds: float | None = None,
    mfcc_cfg: MfccConfig | None = None,
):
    """Vectorize manifest entries for training/prediction.

    Returns (inputs, labels, groups): `groups[i]` is the index of the source
    file for row i, so that sub-clip predictions can be regrouped for voting.
    When `vote_seconds` is set, each file contributes its 1-second-style
    sub-clips instead of one full-length example.
    """
    xs, ys, groups = [], [], []
    for gi, entry in enumerate(entries):
        w = load_clip(entry, model_cfg.sample_rate, model_cfg.clip_seconds)
        clips = split_clips(w, vote_seconds) if vote_seconds else [w]
        for clip in clips:
            xs.append(_as_model_input(clip, model_cfg, mfcc_cfg))
            ys.append(entry.class_id)
            groups.append(gi)
    return np.stack(xs), np.array(ys, dtype=np.intp), np.array(groups, dtype=np.intp)


def _fold_seed(base_seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([base_seed, fold]).generate_state(1)[0])


def evaluate_fold(
    index: DatasetIndex,
    fold: int,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    use_clip_voting: bool = False,
    vote_seconds: float = 1.0,
    mfcc_cfg: MfccConfig | None = None,
) -> FoldResult:
    """Train on every fold but `fold`, evaluate on `fold`."""
    test_entries = [e for e in index.entries if e.fold == fold]
    train_entries = [e for e in index.entries if e.fold != fold]
    if not test_entries:
        raise ContractError(f"fold {fold} has no test files")
    if not train_entries:
        raise ContractError(f"fold {fold} leaves no training files")
    assert not {e.path for e in test_entries} & {e.path for e in train_entries}

    vote = vote_seconds if use_clip_voting else None
    x_train, y_train, _ = prepare_inputs(train_entries, model_cfg, vote, mfcc_cfg)
    x_test, y_test, groups = prepare_inputs(test_entries, model_cfg, vote, mfcc_cfg)

    seed = _fold_seed(train_cfg.seed, fold)
    model = build_model(model_cfg, x_train.shape[1:], rng=np.random.default_rng(seed))
    fold_train_cfg = TrainConfig(**{**train_cfg.__dict__, "seed": seed})
    model, _ = train(model, (x_train, y_train), fold_train_cfg)

    clip_pred = predict_batch(model, x_test).argmax(axis=1)
    predictions = []
    correct = 0
    for gi, entry in enumerate(test_entries):
        votes = clip_pred[groups == gi]
        pred = majority_vote(votes)
        predictions.append((entry.path.name, entry.class_id, pred))
        correct += int(pred == entry.class_id)
    return FoldResult(fold, predictions, correct / len(test_entries))


def kfold_evaluate(
    index: DatasetIndex,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    use_clip_voting: bool = False,
    vote_seconds: float = 1.0,
    mfcc_cfg: MfccConfig | None = None,
) -> tuple[EvalReport, list[FoldResult]]:
    """Leave-one-fold-out over every fold present in the manifest."""
    folds = index.folds()
    if len(folds) < 2:
        raise ContractError(f"k-fold evaluation needs >= 2 folds, got {len(folds)}")
    results = []
    for fold in folds:
        if not any(e.fold == fold for e in index.entries):
            warnings.warn(f"fold {fold} has no files; skipped", stacklevel=2)
            continue
        results.append(
            evaluate_fold(index, fold, model_cfg, train_cfg, use_clip_voting, vote_seconds, mfcc_cfg)
        )
    report = EvalReport(
        pipeline=model_cfg.arch,
        kernel_len=model_cfg.kernel_len if model_cfg.arch == "raw" else None,
        n_filters=model_cfg.n_filters if model_cfg.arch == "raw" else None,
        n_mfcc=model_cfg.n_mfcc if model_cfg.arch == "mfcc" else None,
        freq_khz=model_cfg.sample_rate / 1000.0,
        fold_ids=[r.fold for r in results],
        fold_accuracies=[r.accuracy for r in results],
    )
    return report, results


REPORT_HEADER = "pipeline,f1,nb_f,n_mfcc,freq_khz,acc"


def write_report(report: EvalReport, path) -> None:
    """Table-style CSV: the summary row, reference baselines as comments,
    then a per-fold breakdown. An empty report writes only the header."""

    def cell(v):
        return "" if v is None else str(v)

    with open(path, "w") as fh:
        fh.write(REPORT_HEADER + "\n")
        if not report.fold_ids:
            return
        fh.write(
            f"{report.pipeline},{cell(report.kernel_len)},{cell(report.n_filters)},"
            f"{cell(report.n_mfcc)},{report.freq_khz:g},{report.mean_accuracy:.6g}\n"
        )
        for name, acc in REFERENCE_BASELINES.items():
            fh.write(f"# reference {name}={acc} (reported, not computed)\n")
        fh.write("fold,accuracy\n")
        for fold, acc in zip(report.fold_ids, report.fold_accuracies):
            fh.write(f"{fold},{acc:.6g}\n")


def read_report(path) -> EvalReport:
    """Parse a file produced by :func:`write_report`."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != REPORT_HEADER:
        raise FormatError(f"{path}: missing report header")
    body = [ln for ln in lines[1:] if ln and not ln.startswith("#")]
    if not body:
        return EvalReport("", None, None, None, float("nan"))

    cells = body[0].split(",")
    opt = lambda s: None if s == "" else int(s)
    report = EvalReport(cells[0], opt(cells[1]), opt(cells[2]), opt(cells[3]), float(cells[4]))
    for ln in body[1:]:
        if ln == "fold,accuracy":
            continue
        fold_s, acc_s = ln.split(",")
        report.fold_ids.append(int(fold_s))
        report.fold_accuracies.append(float(acc_s))
    return report
