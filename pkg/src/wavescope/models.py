"""Reference architectures, the training loop, and checkpoint I/O.

Two pipelines:
  * ``raw``  -- 1-D CNN on waveform samples; the first layer's kernel length
    and filter count are the analyzable filterbank.
  * ``mfcc`` -- small VGG-style 2-D CNN on MFCC matrices.

A checkpoint is the weight container from neuralnet.py plus ``model_config``,
``train_config``, and ``history`` JSON entries, one file per fold.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import neuralnet as nn
from .errors import ContractError


@dataclass
class ModelConfig:
    arch: str = "raw"  # raw | mfcc
    kernel_len: int = 72  # first conv kernel length (raw pipeline)
    n_filters: int = 32
    stride: int = 2
    n_classes: int = 10
    sample_rate: int = 8000
    clip_seconds: float = 4.0
    n_mfcc: int = 40  # mfcc pipeline only


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    decay_rate: float = 0.1
    epochs_per_decay: int = 3
    max_epochs: int = 30
    patience: int = 3
    min_delta: float = 1e-4  # relative loss improvement that counts
    batch_size: int = 16
    seed: int = 0


@dataclass
class TrainHistory:
    losses: list[float] = field(default_factory=list)
    accuracies: list[float] = field(default_factory=list)
    lrs: list[float] = field(default_factory=list)
    stop_reason: str = ""

    def __len__(self) -> int:
        return len(self.losses)


class EarlyStopping:
    """Stops after `patience` consecutive epochs without a relative loss
    improvement of at least `min_delta`."""

    def __init__(self, patience: int, min_delta: float):
        if patience < 1:
            raise ContractError(f"patience must be >= 1, got {patience}")
        self.patience = patience
        self.min_delta = min_delta
        self.best = np.inf
        self.streak = 0

    def update(self, loss: float) -> bool:
        """Record an epoch loss; True means training should stop now."""
        if loss < self.best * (1.0 - self.min_delta):
            self.best = loss
            self.streak = 0
        else:
            self.streak += 1
        return self.streak >= self.patience


def build_raw_model(cfg: ModelConfig, input_len: int, rng=None) -> nn.Sequential:
    """Waveform CNN: wide strided conv, then two conv/pool stages and two
    dense layers. Raises if `input_len` cannot feed the whole stack."""
    rng = rng or np.random.default_rng(0)
    nf = cfg.n_filters

    def shrink(length, kernel, stride):
        out = (length - kernel) // stride + 1
        if out < 1:
            raise ContractError(f"input length {input_len} too short for the stack")
        return out

    l1 = shrink(input_len, cfg.kernel_len, cfg.stride)
    p1 = shrink(l1, 8, 8)
    l2 = shrink(p1, 5, 1)
    p2 = shrink(l2, 4, 4)
    l3 = shrink(p2, 5, 1)
    p3 = shrink(l3, 4, 4)

    return nn.Sequential(
        [
            nn.Conv1d(1, nf, cfg.kernel_len, stride=cfg.stride, rng=rng),
            nn.ReLU(),
            nn.MaxPool1d(8),
            nn.Conv1d(nf, 2 * nf, 5, rng=rng),
            nn.ReLU(),
            nn.MaxPool1d(4),
            nn.Conv1d(2 * nf, 2 * nf, 5, rng=rng),
            nn.ReLU(),
            nn.MaxPool1d(4),
            nn.Flatten(),
            nn.Dense(2 * nf * p3, 128, rng=rng),
            nn.ReLU(),
            nn.Dense(128, cfg.n_classes, rng=rng),
        ]
    )


def build_mfcc_model(cfg: ModelConfig, input_shape: tuple[int, int], rng=None) -> nn.Sequential:
    """Two VGG blocks (2x Conv2d 3x3 + ReLU, MaxPool 2x2) over an
    [n_mfcc x n_frames] feature matrix, then Dense(128) -> Dense(n_classes)."""
    rng = rng or np.random.default_rng(0)
    nf = cfg.n_filters
    h, w = input_shape

    def conv_shrink(h, w):
        if h < 3 or w < 3:
            raise ContractError(f"feature matrix {input_shape} too small for the stack")
        return h - 2, w - 2

    h1, w1 = conv_shrink(*conv_shrink(h, w))
    h1, w1 = h1 // 2, w1 // 2
    h2, w2 = conv_shrink(*conv_shrink(h1, w1))
    h2, w2 = h2 // 2, w2 // 2
    if h2 < 1 or w2 < 1:
        raise ContractError(f"feature matrix {input_shape} too small for the stack")

    return nn.Sequential(
        [
            nn.Conv2d(1, nf, 3, rng=rng),
            nn.ReLU(),
            nn.Conv2d(nf, nf, 3, rng=rng),
            nn.ReLU(),
            nn.MaxPool2d(2),
            nn.Conv2d(nf, 2 * nf, 3, rng=rng),
            nn.ReLU(),
            nn.Conv2d(2 * nf, 2 * nf, 3, rng=rng),
            nn.ReLU(),
            nn.MaxPool2d(2),
            nn.Flatten(),
            nn.Dense(2 * nf * h2 * w2, 128, rng=rng),
            nn.ReLU(),
            nn.Dense(128, cfg.n_classes, rng=rng),
        ]
    )


def build_model(cfg: ModelConfig, input_shape, rng=None) -> nn.Sequential:
    if cfg.arch == "raw":
        return build_raw_model(cfg, int(input_shape[-1]), rng=rng)
    if cfg.arch == "mfcc":
        return build_mfcc_model(cfg, tuple(input_shape[-2:]), rng=rng)
    raise ContractError(f"unknown arch {cfg.arch!r}")


def train(
    model: nn.Sequential, dataset: tuple[np.ndarray, np.ndarray], cfg: TrainConfig
) -> tuple[nn.Sequential, TrainHistory]:
    """Mini-batch Adam with step-decayed lr and patience-based early stopping.

    `dataset` is (inputs, labels): inputs batched along axis 0, integer
    labels. Deterministic for a fixed seed (one shuffle stream).
    """
    inputs, labels = dataset
    n = len(labels)
    if n == 0:
        raise ContractError("training set is empty")
    if inputs.shape[0] != n:
        raise ContractError("inputs and labels lengths differ")

    rng = np.random.default_rng(cfg.seed)
    params = model.parameters()
    state = nn.adam_init(params)
    schedule = nn.LrSchedule(cfg.learning_rate, cfg.decay_rate, cfg.epochs_per_decay)
    stopper = EarlyStopping(cfg.patience, cfg.min_delta)
    history = TrainHistory()

    for epoch in range(cfg.max_epochs):
        lr = nn.lr_at_epoch(schedule, epoch)
        order = rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        aborted = False
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            logits = model.forward(inputs[idx])
            loss, probs = nn.softmax_xent(logits, labels[idx])
            if not np.isfinite(loss):
                history.stop_reason = "nan"
                history.losses.append(float("nan"))
                history.accuracies.append(float("nan"))
                history.lrs.append(lr)
                aborted = True
                break
            model.backward(nn.softmax_xent_backward(probs, labels[idx]))
            nn.adam_step(params, model.gradients(), state, lr)
            loss_sum += loss * idx.size
            correct += int(np.sum(probs.argmax(axis=1) == labels[idx]))
        if aborted:
            break

        history.losses.append(loss_sum / n)
        history.accuracies.append(correct / n)
        history.lrs.append(lr)
        if stopper.update(history.losses[-1]):
            history.stop_reason = "patience"
            break
    if not history.stop_reason:
        history.stop_reason = "max_epochs"
    return model, history


def predict(model: nn.Sequential, x: np.ndarray) -> np.ndarray:
    """Probability vector for a single input (no batch axis)."""
    return nn.softmax(model.forward(x[None, ...]))[0]


def predict_batch(model: nn.Sequential, xs: np.ndarray) -> np.ndarray:
    return nn.softmax(model.forward(xs))


def save_checkpoint(path, model, model_cfg: ModelConfig, train_cfg: TrainConfig, history: TrainHistory) -> None:
    nn.save_weights(
        path,
        model,
        extra_meta={
            "model_config": asdict(model_cfg),
            "train_config": asdict(train_cfg),
            "history": asdict(history),
        },
    )


def load_checkpoint(path):
    """Returns (model, ModelConfig, TrainConfig, TrainHistory)."""
    meta = nn.read_weights_meta(path)
    model = nn.load_weights(path)
    model_cfg = ModelConfig(**meta["model_config"])
    train_cfg = TrainConfig(**meta["train_config"])
    history = TrainHistory(**meta["history"])
    return model, model_cfg, train_cfg, history


def write_history_csv(history: TrainHistory, path) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,loss,accuracy,lr\n")
        for i, (l, a, r) in enumerate(zip(history.losses, history.accuracies, history.lrs)):
            fh.write(f"{i},{l:.8g},{a:.8g},{r:.8g}\n")
        fh.write(f"# stop_reason={history.stop_reason}\n")
