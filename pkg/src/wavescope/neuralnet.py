"""From-scratch differentiable layers, Adam, and the learning-rate schedule.

Layers operate on batched float64 arrays: (B, C, L) for 1-D, (B, C, H, W)
for 2-D. Each layer caches what its hand-derived backward pass needs;
`backward` returns the input gradient and fills `layer.grads` to mirror
`layer.params`.

Weight container layout (also used for full checkpoints, see models.py):
a .npz archive with
  * ``meta`` -- JSON string: {"format": "wavescope-weights", "version": 1,
    "layers": [{"kind": ..., <hyperparameters>}, ...]}
  * ``L<ii>_<name>`` -- one float64 array per parameter of layer ii, in the
    order listed by that layer's ``param_names`` (e.g. ``L00_weights``,
    ``L00_biases``). Conv1d weights are [n_filters x in_channels x
    kernel_len], row-major; Dense weights are [n_out x n_in].
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ContractError


def _uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Layer:
    """Minimal layer protocol; parameter-free layers keep empty lists."""

    param_names: tuple[str, ...] = ()

    def __init__(self):
        self.params: list[np.ndarray] = []
        self.grads: list[np.ndarray] = []

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def spec(self) -> dict:
        return {"kind": self.kind}


class Conv1d(Layer):
    """Valid (no padding) 1-D convolution in correlation orientation:

    out[b, m, i] = sum_{c,k} weights[m, c, k] * x[b, c, i*stride + k] + biases[m]
    """

    kind = "conv1d"
    param_names = ("weights", "biases")

    def __init__(self, in_channels, n_filters, kernel_len, stride=1, rng=None):
        super().__init__()
        if kernel_len < 1 or n_filters < 1:
            raise ContractError("kernel_len and n_filters must be >= 1")
        rng = rng or np.random.default_rng()
        self.in_channels = in_channels
        self.n_filters = n_filters
        self.kernel_len = kernel_len
        self.stride = stride
        self.weights = _uniform_init(rng, (n_filters, in_channels, kernel_len), in_channels * kernel_len)
        self.biases = np.zeros(n_filters)
        self.params = [self.weights, self.biases]
        self.grads = [np.zeros_like(self.weights), np.zeros_like(self.biases)]
        self._cache = None

    def spec(self) -> dict:
        return {
            "kind": self.kind,
            "in_channels": self.in_channels,
            "n_filters": self.n_filters,
            "kernel_len": self.kernel_len,
            "stride": self.stride,
        }

    @classmethod
    def from_spec(cls, s):
        return cls(s["in_channels"], s["n_filters"], s["kernel_len"], s["stride"])

    def out_len(self, in_len: int) -> int:
        return (in_len - self.kernel_len) // self.stride + 1

    def forward(self, x):
        b, c, length = x.shape
        if c != self.in_channels:
            raise ContractError(f"expected {self.in_channels} channels, got {c}")
        if length < self.kernel_len:
            raise ContractError(f"input length {length} < kernel length {self.kernel_len}")
        lo = self.out_len(length)
        win = np.lib.stride_tricks.sliding_window_view(x, self.kernel_len, axis=2)
        win = win[:, :, :: self.stride, :]
        cols = np.ascontiguousarray(win.transpose(0, 2, 1, 3)).reshape(b * lo, c * self.kernel_len)
        out = cols @ self.weights.reshape(self.n_filters, -1).T + self.biases
        self._cache = (x.shape, cols)
        return out.reshape(b, lo, self.n_filters).transpose(0, 2, 1)

    def backward(self, grad_out):
        (b, c, length), cols = self._cache
        lo = self.out_len(length)
        if grad_out.shape != (b, self.n_filters, lo):
            raise ContractError(f"grad shape {grad_out.shape} != {(b, self.n_filters, lo)}")
        g2 = np.ascontiguousarray(grad_out.transpose(0, 2, 1)).reshape(b * lo, self.n_filters)
        self.grads[0][...] = (g2.T @ cols).reshape(self.weights.shape)
        self.grads[1][...] = grad_out.sum(axis=(0, 2))

        # input gradient: dilate by stride, pad, correlate with flipped kernels
        k = self.kernel_len
        up = np.zeros((b, self.n_filters, (lo - 1) * self.stride + 1))
        up[:, :, :: self.stride] = grad_out
        pad_tail = length - (lo - 1) * self.stride - 1
        gpad = np.pad(up, ((0, 0), (0, 0), (k - 1, pad_tail)))
        wing = np.lib.stride_tricks.sliding_window_view(gpad, k, axis=2)
        colsg = np.ascontiguousarray(wing.transpose(0, 2, 1, 3)).reshape(b * length, self.n_filters * k)
        wflip = self.weights[:, :, ::-1].transpose(1, 0, 2).reshape(c, self.n_filters * k)
        return (colsg @ wflip.T).reshape(b, length, c).transpose(0, 2, 1)


class Conv2d(Layer):
    """Valid 2-D convolution (correlation orientation), stride 1."""

    kind = "conv2d"
    param_names = ("weights", "biases")

    def __init__(self, in_channels, n_filters, kernel_size, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng()
        self.in_channels = in_channels
        self.n_filters = n_filters
        self.kernel_size = kernel_size
        kh = kw = kernel_size
        self.weights = _uniform_init(rng, (n_filters, in_channels, kh, kw), in_channels * kh * kw)
        self.biases = np.zeros(n_filters)
        self.params = [self.weights, self.biases]
        self.grads = [np.zeros_like(self.weights), np.zeros_like(self.biases)]
        self._cache = None

    def spec(self) -> dict:
        return {
            "kind": self.kind,
            "in_channels": self.in_channels,
            "n_filters": self.n_filters,
            "kernel_size": self.kernel_size,
        }

    @classmethod
    def from_spec(cls, s):
        return cls(s["in_channels"], s["n_filters"], s["kernel_size"])

    def forward(self, x):
        b, c, h, w = x.shape
        k = self.kernel_size
        if c != self.in_channels:
            raise ContractError(f"expected {self.in_channels} channels, got {c}")
        if h < k or w < k:
            raise ContractError(f"input {h}x{w} smaller than kernel {k}x{k}")
        ho, wo = h - k + 1, w - k + 1
        win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
        cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(b * ho * wo, c * k * k)
        out = cols @ self.weights.reshape(self.n_filters, -1).T + self.biases
        self._cache = (x.shape, cols)
        return out.reshape(b, ho, wo, self.n_filters).transpose(0, 3, 1, 2)

    def backward(self, grad_out):
        (b, c, h, w), cols = self._cache
        k = self.kernel_size
        ho, wo = h - k + 1, w - k + 1
        if grad_out.shape != (b, self.n_filters, ho, wo):
            raise ContractError(f"grad shape {grad_out.shape} != {(b, self.n_filters, ho, wo)}")
        g2 = np.ascontiguousarray(grad_out.transpose(0, 2, 3, 1)).reshape(b * ho * wo, self.n_filters)
        self.grads[0][...] = (g2.T @ cols).reshape(self.weights.shape)
        self.grads[1][...] = grad_out.sum(axis=(0, 2, 3))

        gpad = np.pad(grad_out, ((0, 0), (0, 0), (k - 1, k - 1), (k - 1, k - 1)))
        wing = np.lib.stride_tricks.sliding_window_view(gpad, (k, k), axis=(2, 3))
        colsg = np.ascontiguousarray(wing.transpose(0, 2, 3, 1, 4, 5)).reshape(b * h * w, self.n_filters * k * k)
        wflip = self.weights[:, :, ::-1, ::-1].transpose(1, 0, 2, 3).reshape(c, self.n_filters * k * k)
        return (colsg @ wflip.T).reshape(b, h, w, c).transpose(0, 3, 1, 2)


class ReLU(Layer):
    kind = "relu"

    def __init__(self):
        super().__init__()
        self._mask = None

    @classmethod
    def from_spec(cls, s):
        return cls()

    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad_out):
        return grad_out * self._mask


class MaxPool1d(Layer):
    """Disjoint max pooling over windows of `k`; a trailing remainder is dropped.

    Backward routes each window's gradient to the earliest maximal index.
    """

    kind = "maxpool1d"

    def __init__(self, k):
        super().__init__()
        self.k = k
        self._cache = None

    def spec(self) -> dict:
        return {"kind": self.kind, "k": self.k}

    @classmethod
    def from_spec(cls, s):
        return cls(s["k"])

    def forward(self, x):
        b, c, length = x.shape
        lo = length // self.k
        if lo < 1:
            raise ContractError(f"input length {length} < pool window {self.k}")
        view = x[:, :, : lo * self.k].reshape(b, c, lo, self.k)
        idx = view.argmax(axis=-1)
        self._cache = (x.shape, idx)
        return np.take_along_axis(view, idx[..., None], axis=-1)[..., 0]

    def backward(self, grad_out):
        (b, c, length), idx = self._cache
        lo = length // self.k
        gx = np.zeros((b, c, lo, self.k))
        np.put_along_axis(gx, idx[..., None], grad_out[..., None], axis=-1)
        out = np.zeros((b, c, length))
        out[:, :, : lo * self.k] = gx.reshape(b, c, lo * self.k)
        return out


class MaxPool2d(Layer):
    kind = "maxpool2d"

    def __init__(self, k):
        super().__init__()
        self.k = k
        self._cache = None

    def spec(self) -> dict:
        return {"kind": self.kind, "k": self.k}

    @classmethod
    def from_spec(cls, s):
        return cls(s["k"])

    def forward(self, x):
        b, c, h, w = x.shape
        k = self.k
        ho, wo = h // k, w // k
        if ho < 1 or wo < 1:
            raise ContractError(f"input {h}x{w} < pool window {k}x{k}")
        view = x[:, :, : ho * k, : wo * k].reshape(b, c, ho, k, wo, k)
        flat = np.ascontiguousarray(view.transpose(0, 1, 2, 4, 3, 5)).reshape(b, c, ho, wo, k * k)
        idx = flat.argmax(axis=-1)
        self._cache = (x.shape, idx)
        return np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]

    def backward(self, grad_out):
        (b, c, h, w), idx = self._cache
        k = self.k
        ho, wo = h // k, w // k
        gflat = np.zeros((b, c, ho, wo, k * k))
        np.put_along_axis(gflat, idx[..., None], grad_out[..., None], axis=-1)
        gview = gflat.reshape(b, c, ho, wo, k, k).transpose(0, 1, 2, 4, 3, 5)
        out = np.zeros((b, c, h, w))
        out[:, :, : ho * k, : wo * k] = gview.reshape(b, c, ho * k, wo * k)
        return out


class Flatten(Layer):
    kind = "flatten"

    def __init__(self):
        super().__init__()
        self._shape = None

    @classmethod
    def from_spec(cls, s):
        return cls()

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out):
        return grad_out.reshape(self._shape)


class Dense(Layer):
    kind = "dense"
    param_names = ("weights", "biases")

    def __init__(self, n_in, n_out, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng()
        self.n_in = n_in
        self.n_out = n_out
        self.weights = _uniform_init(rng, (n_out, n_in), n_in)
        self.biases = np.zeros(n_out)
        self.params = [self.weights, self.biases]
        self.grads = [np.zeros_like(self.weights), np.zeros_like(self.biases)]
        self._x = None

    def spec(self) -> dict:
        return {"kind": self.kind, "n_in": self.n_in, "n_out": self.n_out}

    @classmethod
    def from_spec(cls, s):
        return cls(s["n_in"], s["n_out"])

    def forward(self, x):
        if x.shape[1] != self.n_in:
            raise ContractError(f"expected {self.n_in} inputs, got {x.shape[1]}")
        self._x = x
        return x @ self.weights.T + self.biases

    def backward(self, grad_out):
        self.grads[0][...] = grad_out.T @ self._x
        self.grads[1][...] = grad_out.sum(axis=0)
        return grad_out @ self.weights


_LAYER_KINDS = {
    cls.kind: cls for cls in (Conv1d, Conv2d, ReLU, MaxPool1d, MaxPool2d, Flatten, Dense)
}


class Sequential:
    """A plain layer stack. One training loop owns and mutates it."""

    def __init__(self, layers: list[Layer]):
        self.layers = layers

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def parameters(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params]

    def gradients(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads]

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def first_conv(self) -> Conv1d | Conv2d:
        for layer in self.layers:
            if isinstance(layer, (Conv1d, Conv2d)):
                return layer
        raise ContractError("model has no convolutional layer")


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_xent(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch plus the probability matrix."""
    probs = softmax(logits)
    b = logits.shape[0]
    picked = probs[np.arange(b), labels]
    loss = float(-np.mean(np.log(np.maximum(picked, 1e-300))))
    return loss, probs


def softmax_xent_backward(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Gradient of the mean cross-entropy w.r.t. the logits."""
    b = probs.shape[0]
    grad = probs.copy()
    grad[np.arange(b), labels] -= 1.0
    return grad / b


# --------------------------------------------------------------------------
# Optimization
# --------------------------------------------------------------------------

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0


def adam_init(params: list[np.ndarray]) -> AdamState:
    return AdamState([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(
    params: list[np.ndarray], grads: list[np.ndarray], state: AdamState, lr: float
) -> list[np.ndarray]:
    """One in-place Adam update with bias correction."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ContractError("params/grads/state lengths differ")
    state.t += 1
    bc1 = 1.0 - ADAM_BETA1**state.t
    bc2 = 1.0 - ADAM_BETA2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ContractError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
    return params


@dataclass
class LrSchedule:
    """Step decay: lr0 / (1 + decay_rate)^(epoch // epochs_per_decay)."""

    lr: float = 0.001
    decay_rate: float = 0.1
    epochs_per_decay: int = 3


def lr_at_epoch(schedule: LrSchedule, epoch: int) -> float:
    if epoch < 0:
        raise ContractError(f"epoch must be >= 0, got {epoch}")
    return schedule.lr / (1.0 + schedule.decay_rate) ** (epoch // schedule.epochs_per_decay)


# --------------------------------------------------------------------------
# Weight container I/O (layout documented in the module docstring)
# --------------------------------------------------------------------------

WEIGHTS_FORMAT = "wavescope-weights"
WEIGHTS_VERSION = 1


def save_weights(path, model: Sequential, extra_meta: dict | None = None) -> None:
    meta = {
        "format": WEIGHTS_FORMAT,
        "version": WEIGHTS_VERSION,
        "layers": [layer.spec() for layer in model.layers],
    }
    if extra_meta:
        meta.update(extra_meta)
    arrays = {"meta": np.array(json.dumps(meta))}
    for i, layer in enumerate(model.layers):
        for name, p in zip(layer.param_names, layer.params):
            arrays[f"L{i:02d}_{name}"] = p
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def read_weights_meta(path) -> dict:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
    if meta.get("format") != WEIGHTS_FORMAT:
        raise ContractError(f"{path}: not a {WEIGHTS_FORMAT} file")
    if meta.get("version") != WEIGHTS_VERSION:
        raise ContractError(f"{path}: unsupported container version {meta.get('version')}")
    return meta


def load_weights(path) -> Sequential:
    meta = read_weights_meta(path)
    layers = []
    with np.load(path, allow_pickle=False) as data:
        for i, spec in enumerate(meta["layers"]):
            cls = _LAYER_KINDS[spec["kind"]]
            layer = cls.from_spec(spec)
            for j, name in enumerate(layer.param_names):
                stored = data[f"L{i:02d}_{name}"]
                if stored.shape != layer.params[j].shape:
                    raise ContractError(
                        f"{path}: layer {i} {name} shape {stored.shape} != {layer.params[j].shape}"
                    )
                layer.params[j][...] = stored
            layers.append(layer)
    return Sequential(layers)
