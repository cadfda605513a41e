"""Training recipe, checkpoint selection, scoring and gradient checks."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .autograd import Tensor
from .models import Classifier, ModelSpec, build


class TrainingError(ValueError):
    pass


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 100
    batch_size: int = 32
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise TrainingError("epochs and batch_size must be positive")

    def to_dict(self):
        return {"epochs": self.epochs, "batch_size": self.batch_size, "lr": self.lr, "beta1": self.beta1,
                "beta2": self.beta2, "eps": self.eps, "seed": self.seed}


class Adam:
    """Bias-corrected Adam over a list of tensors."""

    def __init__(self, params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            step = self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data = (p.data - step).astype(p.data.dtype)


@dataclass
class TrainedModel:
    """A classifier restored to its best-validation-loss epoch."""

    model: Classifier
    trace: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    seed: int = 0
    config: dict = field(default_factory=dict)

    @property
    def spec(self) -> ModelSpec:
        return self.model.spec

    @property
    def best_val_loss(self) -> float:
        return self.trace[self.best_epoch]["val_loss"]

    def predict_proba(self, X) -> np.ndarray:
        return self.model.predict_proba(X)

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        state = self.model.get_state()
        blob = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes() for a in state)
        manifest = {"spec": self.spec.to_dict(), "seed": self.seed, "best_epoch": self.best_epoch,
                    "trace": self.trace, "config": self.config,
                    "arrays": [list(a.shape) for a in state]}
        (directory / "model.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        (directory / "params.f32").write_bytes(blob)

    @classmethod
    def load(cls, directory) -> "TrainedModel":
        directory = Path(directory)
        manifest = json.loads((directory / "model.json").read_text())
        raw = np.frombuffer((directory / "params.f32").read_bytes(), dtype="<f4")
        state, off = [], 0
        for shape in manifest["arrays"]:
            n = int(np.prod(shape))
            if off + n > raw.size:
                raise TrainingError(f"{directory}: parameter blob is truncated")
            state.append(raw[off:off + n].reshape(shape).astype(np.float32))
            off += n
        if off != raw.size:
            raise TrainingError(f"{directory}: parameter blob has trailing data")
        model = build(ModelSpec.from_dict(manifest["spec"]), manifest["seed"])
        model.set_state(state)
        return cls(model, manifest["trace"], manifest["best_epoch"], manifest["seed"], manifest["config"])


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def evaluate_loss(model: Classifier, X, y, batch_size=256) -> float:
    total = 0.0
    for i in range(0, len(X), batch_size):
        xb, yb = X[i:i + batch_size], y[i:i + batch_size]
        total += float(model.loss(xb, yb, train=False).data) * len(xb)
    return total / len(X)


def train(model: Classifier, train_set, val_set, cfg: TrainingConfig = TrainingConfig()) -> TrainedModel:
    """Fit for exactly ``cfg.epochs`` epochs and keep the lowest-validation-loss checkpoint.

    ``train_set`` and ``val_set`` are ``(X, y)`` pairs; there is deliberately
    no way to pass test data here.
    """
    Xtr, ytr = np.asarray(train_set[0], dtype=model.dtype), np.asarray(train_set[1], dtype=np.int64)
    Xva, yva = np.asarray(val_set[0], dtype=model.dtype), np.asarray(val_set[1], dtype=np.int64)
    if len(Xtr) == 0 or len(Xva) == 0:
        raise TrainingError("training and validation splits must be non-empty")
    if len(np.unique(ytr)) < 2:
        raise TrainingError("training set holds a single class")
    if set(np.unique(yva)) - set(np.unique(ytr)):
        raise TrainingError("validation labels not seen in training")
    if ytr.max() >= model.spec.n_classes:
        raise TrainingError("label out of range for the model's class count")

    model.rng = np.random.default_rng([cfg.seed, 0xD0])
    opt = Adam(model.parameters(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    trace, best, best_state = [], np.inf, None
    best_epoch = -1
    for epoch in range(cfg.epochs):
        rng = np.random.default_rng([cfg.seed, epoch])
        running = 0.0
        for idx in _batches(len(Xtr), cfg.batch_size, rng):
            opt.zero_grad()
            loss = model.loss(Xtr[idx], ytr[idx], train=True)
            loss.backward()
            opt.step()
            running += float(loss.data) * len(idx)
        val = evaluate_loss(model, Xva, yva)
        trace.append({"epoch": epoch, "train_loss": running / len(Xtr), "val_loss": val})
        if val < best:
            best, best_epoch, best_state = val, epoch, model.get_state()
    model.set_state(best_state)
    return TrainedModel(model, trace, best_epoch, cfg.seed, cfg.to_dict())


# ---------------------------------------------------------------------------
# Scores
# ---------------------------------------------------------------------------

def binary_auroc(scores, labels) -> float:
    """P(random positive outscores random negative), ties counting one half."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise TrainingError("AUROC needs at least one positive and one negative")
    ranks = rankdata(s)
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auroc(scores, labels) -> float:
    """Binary AUROC for 1-D scores; support-weighted one-vs-rest AUROC for (n, K) probabilities."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.ndim == 1:
        return binary_auroc(scores, labels)
    K = scores.shape[1]
    if K == 2:
        return binary_auroc(scores[:, 1], labels == 1)
    counts = np.bincount(labels, minlength=K)
    if np.any(counts == 0):
        raise TrainingError(f"one-vs-rest AUROC needs every class in the labels, counts {counts.tolist()}")
    per = np.array([binary_auroc(scores[:, k], labels == k) for k in range(K)])
    return float((per * counts / counts.sum()).sum())


def accuracy(predictions, labels) -> float:
    p = np.asarray(predictions)
    y = np.asarray(labels)
    if p.shape != y.shape:
        raise TrainingError(f"length mismatch: {p.shape} vs {y.shape}")
    if p.size == 0:
        raise TrainingError("accuracy of an empty set")
    return float((p == y).mean())


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_error: float
    checked: int
    skipped_kinks: int


def gradient_check_report(model: Classifier, X, y, eps: float = 1e-5, per_tensor: int = 50, seed: int = 0,
                          floor: float = 1e-6, kink_tol: float = 1e-3) -> GradCheckReport:
    """Compare backprop gradients with central differences on sampled parameters.

    The model is cast to float64 in place. Up to ``per_tensor`` entries of
    every parameter tensor are checked; relative error is
    ``|a - n| / max(|a|, |n|, floor)``. An entry whose central differences at
    ``eps`` and ``eps/2`` disagree by more than ``kink_tol`` (relative) sits
    on a ReLU/max-pool kink inside the probe interval; it is counted in
    ``skipped_kinks`` instead of the error.
    """
    model.astype(np.float64)
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    rng = np.random.default_rng(seed)

    def loss_value():
        model.rng = np.random.default_rng(12345)  # identical dropout masks every evaluation
        return model.loss(X, y, train=True)

    def central(flat, k, h):
        orig = flat[k]
        flat[k] = orig + h
        up = float(loss_value().data)
        flat[k] = orig - h
        down = float(loss_value().data)
        flat[k] = orig
        return (up - down) / (2 * h)

    for p in model.parameters():
        p.grad = None
    loss_value().backward()
    analytic = [p.grad.copy() for p in model.parameters()]

    worst, checked, skipped = 0.0, 0, 0
    for p, g in zip(model.parameters(), analytic):
        flat = p.data.reshape(-1)
        picks = rng.choice(flat.size, size=min(per_tensor, flat.size), replace=False)
        for k in picks:
            num = central(flat, k, eps)
            half = central(flat, k, eps / 2)
            if abs(num - half) > kink_tol * max(abs(num), abs(half), floor):
                skipped += 1
                continue
            a = g.reshape(-1)[k]
            worst = max(worst, abs(a - num) / max(abs(a), abs(num), floor))
            checked += 1
    return GradCheckReport(float(worst), checked, skipped)


def gradient_check(model: Classifier, X, y, eps: float = 1e-5, **kwargs) -> float:
    """Max relative error of backprop against central finite differences (64-bit)."""
    return gradient_check_report(model, X, y, eps, **kwargs).max_rel_error
