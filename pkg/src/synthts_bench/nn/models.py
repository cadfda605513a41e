"""Layers and the six fixed classifier architectures.

Sizes are fixed defaults (no tuning):

========  ==============================================================
MLP       flatten, 2 x [dense 128, relu, dropout 0.2], dense -> classes
AE        dense 256 -> 64 code -> classes; mirrored decoder reconstructs x
CNN       2 x [conv k7 16/32, relu, maxpool 2], dense 64, relu, dense
FCN       conv k8/5/3 64/128/64 each + batch-norm + relu, GAP, dense
ResNet    3 residual FCN triples (1x1 projection when widths differ), GAP
ConvLSTM  conv k7 32, relu, maxpool 4, LSTM 64 (last state), dense
========  ==============================================================
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Tensor

ARCHITECTURES = ("MLP", "AE", "CNN", "FCN", "ConvLSTM", "ResNet")
DEFAULT_DTYPE = np.float32


class ShapeError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------

class Module:
    def parameters(self) -> list[Tensor]:
        return []

    def buffers(self) -> list[np.ndarray]:
        return []

    def output_shape(self, shape):
        return shape

    def astype(self, dtype):
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        for holder, key in self._buffer_slots():
            holder[key] = holder[key].astype(dtype)
        return self

    def _buffer_slots(self):
        return []


def _uniform(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype), requires_grad=True)


class Dense(Module):
    def __init__(self, n_in, n_out, rng, dtype=DEFAULT_DTYPE):
        self.n_in, self.n_out = n_in, n_out
        self.w = _uniform(rng, (n_in, n_out), n_in, dtype)
        self.b = _uniform(rng, (n_out,), n_in, dtype)

    def __call__(self, x, train):
        return ag.add(ag.matmul(x, self.w), self.b)

    def parameters(self):
        return [self.w, self.b]

    def output_shape(self, shape):
        if shape != (self.n_in,):
            raise ShapeError(f"Dense expects ({self.n_in},), got {shape}")
        return (self.n_out,)


class Conv1d(Module):
    def __init__(self, c_in, c_out, kernel, rng, dtype=DEFAULT_DTYPE):
        self.c_in, self.c_out, self.kernel = c_in, c_out, kernel
        self.w = _uniform(rng, (c_out, c_in, kernel), c_in * kernel, dtype)
        self.b = _uniform(rng, (c_out,), c_in * kernel, dtype)

    def __call__(self, x, train):
        return ag.conv1d(x, self.w, self.b)

    def parameters(self):
        return [self.w, self.b]

    def output_shape(self, shape):
        if len(shape) != 2 or shape[0] != self.c_in:
            raise ShapeError(f"Conv1d expects ({self.c_in}, L), got {shape}")
        return (self.c_out, shape[1])


class BatchNorm(Module):
    def __init__(self, channels, dtype=DEFAULT_DTYPE):
        self.channels = channels
        self.gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)
        self.running = {"mean": np.zeros(channels, dtype=dtype), "var": np.ones(channels, dtype=dtype)}

    def __call__(self, x, train):
        return ag.batch_norm(x, self.gamma, self.beta, self.running, train)

    def parameters(self):
        return [self.gamma, self.beta]

    def buffers(self):
        return [self.running["mean"], self.running["var"]]

    def _buffer_slots(self):
        return [(self.running, "mean"), (self.running, "var")]

    def output_shape(self, shape):
        if shape[0] != self.channels:
            raise ShapeError(f"BatchNorm expects {self.channels} channels, got {shape}")
        return shape


class ReLU(Module):
    def __call__(self, x, train):
        return ag.relu(x)


class Flatten(Module):
    def __call__(self, x, train):
        return ag.flatten(x)

    def output_shape(self, shape):
        return (int(np.prod(shape)),)


class MaxPool(Module):
    def __init__(self, size):
        self.size = size

    def __call__(self, x, train):
        return ag.maxpool1d(x, self.size)

    def output_shape(self, shape):
        if shape[1] // self.size < 1:
            raise ShapeError(f"MaxPool({self.size}) needs length >= {self.size}, got {shape[1]}")
        return (shape[0], shape[1] // self.size)


class GlobalAvgPool(Module):
    def __call__(self, x, train):
        return ag.global_avg_pool(x)

    def output_shape(self, shape):
        return (shape[0],)


class Dropout(Module):
    def __init__(self, p, owner):
        self.p = p
        self.owner = owner  # model holding the dropout rng

    def __call__(self, x, train):
        return ag.dropout(x, self.p, self.owner.rng, train)


class LSTM(Module):
    """Consumes (B, C, T) feature maps as a length-T sequence; returns (B, H)."""

    def __init__(self, n_in, hidden, rng, dtype=DEFAULT_DTYPE):
        self.n_in, self.hidden = n_in, hidden
        self.wx = _uniform(rng, (n_in, 4 * hidden), hidden, dtype)
        self.wh = _uniform(rng, (hidden, 4 * hidden), hidden, dtype)
        self.b = _uniform(rng, (4 * hidden,), hidden, dtype)

    def __call__(self, x, train):
        return ag.lstm(ag.transpose(x, (0, 2, 1)), self.wx, self.wh, self.b)

    def parameters(self):
        return [self.wx, self.wh, self.b]

    def output_shape(self, shape):
        if len(shape) != 2 or shape[0] != self.n_in:
            raise ShapeError(f"LSTM expects ({self.n_in}, T), got {shape}")
        return (self.hidden,)


class Sequential(Module):
    def __init__(self, *layers):
        self.layers = list(layers)

    def __call__(self, x, train):
        for layer in self.layers:
            x = layer(x, train)
        return x

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def buffers(self):
        return [b for layer in self.layers for b in layer.buffers()]

    def _buffer_slots(self):
        return [s for layer in self.layers for s in layer._buffer_slots()]

    def output_shape(self, shape):
        for layer in self.layers:
            shape = layer.output_shape(shape)
        return shape


class Residual(Module):
    """``relu(body(x) + shortcut(x))``; the shortcut is identity when absent."""

    def __init__(self, body, shortcut=None):
        self.body = body
        self.shortcut = shortcut

    def __call__(self, x, train):
        s = x if self.shortcut is None else self.shortcut(x, train)
        return ag.relu(ag.add(self.body(x, train), s))

    def parameters(self):
        return self.body.parameters() + (self.shortcut.parameters() if self.shortcut else [])

    def buffers(self):
        return self.body.buffers() + (self.shortcut.buffers() if self.shortcut else [])

    def _buffer_slots(self):
        return self.body._buffer_slots() + (self.shortcut._buffer_slots() if self.shortcut else [])

    def output_shape(self, shape):
        out = self.body.output_shape(shape)
        short = shape if self.shortcut is None else self.shortcut.output_shape(shape)
        if out != short:
            raise ShapeError(f"residual branch shapes differ: {out} vs {short}")
        return out


# ---------------------------------------------------------------------------
# Architectures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelSpec:
    arch: str
    input_shape: tuple[int, int]  # (C, L)
    n_classes: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ShapeError(f"unknown architecture {self.arch!r}; choose from {ARCHITECTURES}")
        if self.n_classes < 2:
            raise ShapeError("a classifier needs at least 2 classes")
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))

    def to_dict(self):
        return {"arch": self.arch, "input_shape": list(self.input_shape), "n_classes": self.n_classes,
                "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["arch"], tuple(d["input_shape"]), int(d["n_classes"]), dict(d.get("params", {})))


DEFAULTS = {
    "MLP": {"width": 128, "dropout": 0.2},
    "AE": {"hidden": 256, "code": 64, "recon_weight": 0.5},
    "CNN": {"filters": (16, 32), "kernel": 7, "dense": 64},
    "FCN": {"filters": (64, 128, 64), "kernels": (8, 5, 3)},
    "ResNet": {"filters": (64, 128, 64), "kernels": (8, 5, 3), "blocks": 3},
    "ConvLSTM": {"filters": 32, "kernel": 7, "pool": 4, "hidden": 64},
}


class Classifier(Module):
    """Network producing class logits; ``loss`` is cross-entropy unless overridden."""

    def __init__(self, spec: ModelSpec, net: Module, seed: int):
        self.spec = spec
        self.net = net
        self.seed = seed
        self.rng = np.random.default_rng(seed)

    def logits(self, x: Tensor, train: bool) -> Tensor:
        return self.net(x, train)

    def loss(self, x: np.ndarray, y: np.ndarray, train: bool) -> Tensor:
        return ag.cross_entropy(self.logits(Tensor(x), train), y)

    def parameters(self):
        return self.net.parameters()

    def buffers(self):
        return self.net.buffers()

    def _buffer_slots(self):
        return self.net._buffer_slots()

    @property
    def dtype(self):
        return self.parameters()[0].data.dtype

    def n_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))

    def get_state(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self.parameters()] + [b.copy() for b in self.buffers()]

    def set_state(self, state):
        params = self.parameters()
        slots = self._buffer_slots()
        if len(state) != len(params) + len(slots):
            raise ShapeError("state does not match model")
        for p, v in zip(params, state):
            if p.data.shape != v.shape:
                raise ShapeError(f"parameter shape {p.data.shape} != {v.shape}")
            p.data = v.astype(p.data.dtype, copy=True)
        for (holder, key), v in zip(slots, state[len(params):]):
            holder[key] = v.astype(holder[key].dtype, copy=True)

    def predict_proba(self, X, batch_size: int = 256) -> np.ndarray:
        """Class probabilities in evaluation mode (dropout off, running batch-norm stats)."""
        X = np.asarray(X, dtype=self.dtype)
        if X.ndim != 3 or X.shape[1:] != self.spec.input_shape:
            raise ShapeError(f"expected batch of shape [B, {self.spec.input_shape[0]}, "
                             f"{self.spec.input_shape[1]}], got {X.shape}")
        out = [ag.softmax(self.logits(Tensor(X[i:i + batch_size]), False).data.astype(np.float64))
               for i in range(0, len(X), batch_size)]
        return np.concatenate(out)


class AutoencoderClassifier(Classifier):
    def __init__(self, spec, encoder, head, decoder, recon_weight, seed):
        super().__init__(spec, Sequential(encoder, head), seed)
        self.encoder, self.head, self.decoder = encoder, head, decoder
        self.recon_weight = recon_weight

    def logits(self, x, train):
        return self.head(self.encoder(x, train), train)

    def loss(self, x, y, train):
        xt = Tensor(x)
        code = self.encoder(xt, train)
        ce = ag.cross_entropy(self.head(code, train), y)
        recon = self.decoder(code, train)
        return ag.add(ce, ag.scale(ag.mse(recon, x.reshape(len(x), -1)), self.recon_weight))

    def parameters(self):
        return self.encoder.parameters() + self.head.parameters() + self.decoder.parameters()


def _fcn_triple(c_in, filters, kernels, rng, dtype, final_relu=True):
    layers = []
    c = c_in
    for i, (f, k) in enumerate(zip(filters, kernels)):
        layers += [Conv1d(c, f, k, rng, dtype), BatchNorm(f, dtype)]
        if final_relu or i < len(filters) - 1:
            layers.append(ReLU())
        c = f
    return Sequential(*layers)


def build(spec: ModelSpec, seed: int = 0, dtype=DEFAULT_DTYPE) -> Classifier:
    """Instantiate an architecture with seeded uniform fan-in initialization."""
    rng = np.random.default_rng(seed)
    C, L = spec.input_shape
    K = spec.n_classes
    p = {**DEFAULTS[spec.arch], **spec.params}
    arch = spec.arch

    if arch == "MLP":
        model = Classifier(spec, None, seed)
        w = p["width"]
        model.net = Sequential(Flatten(), Dense(C * L, w, rng, dtype), ReLU(), Dropout(p["dropout"], model),
                               Dense(w, w, rng, dtype), ReLU(), Dropout(p["dropout"], model),
                               Dense(w, K, rng, dtype))
    elif arch == "AE":
        h, code = p["hidden"], p["code"]
        encoder = Sequential(Flatten(), Dense(C * L, h, rng, dtype), ReLU(), Dense(h, code, rng, dtype), ReLU())
        head = Dense(code, K, rng, dtype)
        decoder = Sequential(Dense(code, h, rng, dtype), ReLU(), Dense(h, C * L, rng, dtype))
        model = AutoencoderClassifier(spec, encoder, head, decoder, p["recon_weight"], seed)
        decoder.output_shape(encoder.output_shape((C, L)))
    elif arch == "CNN":
        f1, f2 = p["filters"]
        k = p["kernel"]
        model = Classifier(spec, Sequential(
            Conv1d(C, f1, k, rng, dtype), ReLU(), MaxPool(2),
            Conv1d(f1, f2, k, rng, dtype), ReLU(), MaxPool(2),
            Flatten(), Dense(f2 * ((L // 2) // 2), p["dense"], rng, dtype), ReLU(),
            Dense(p["dense"], K, rng, dtype)), seed)
    elif arch == "FCN":
        if L < 8:
            raise ShapeError("FCN needs windows of length >= 8")
        model = Classifier(spec, Sequential(
            _fcn_triple(C, p["filters"], p["kernels"], rng, dtype), GlobalAvgPool(),
            Dense(p["filters"][-1], K, rng, dtype)), seed)
    elif arch == "ResNet":
        if L < 8:
            raise ShapeError("ResNet needs windows of length >= 8")
        blocks, c = [], C
        out = p["filters"][-1]
        for _ in range(p["blocks"]):
            short = None if c == out else Sequential(Conv1d(c, out, 1, rng, dtype), BatchNorm(out, dtype))
            blocks.append(Residual(_fcn_triple(c, p["filters"], p["kernels"], rng, dtype, final_relu=False), short))
            c = out
        model = Classifier(spec, Sequential(*blocks, GlobalAvgPool(), Dense(out, K, rng, dtype)), seed)
    else:  # ConvLSTM
        f = p["filters"]
        model = Classifier(spec, Sequential(
            Conv1d(C, f, p["kernel"], rng, dtype), ReLU(), MaxPool(p["pool"]),
            LSTM(f, p["hidden"], rng, dtype), Dense(p["hidden"], K, rng, dtype)), seed)

    out_shape = model.net.output_shape((C, L))
    if out_shape != (K,):
        raise ShapeError(f"{arch} produces {out_shape}, expected ({K},)")
    return model
