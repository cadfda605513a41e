"""Reference generators with known answers.

Degradations of a real dataset stand in for generative-model output so every
quality metric and utility protocol can be calibrated against a case whose
answer is known in advance. The toy task is a small, labelled dataset that
is separable by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .pipeline import ChannelSpec, PipelineError, WindowedDataset

KINDS = ("identity", "jitter", "amplitude-scale", "circular-shift", "white-noise", "label-permute")


class RefgenError(PipelineError):
    pass


@dataclass(frozen=True)
class DegradationSpec:
    """One degradation and its parameter.

    Parameters
    ----------
    kind : str
        One of :data:`KINDS`.
    sigma : float
        Standard deviation of the additive noise for ``jitter``.
    alpha : float
        Multiplier for ``amplitude-scale``; must be positive.
    shift : int
        Samples to rotate each window by for ``circular-shift``. The shift is
        taken modulo the window length, so ``shift == L`` is the identity.
    seed : int
    """

    kind: str
    sigma: float = 0.0
    alpha: float = 1.0
    shift: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise RefgenError(f"unknown degradation kind {self.kind!r}; choose from {', '.join(KINDS)}")
        if not (self.sigma >= 0 and np.isfinite(self.sigma)):
            raise RefgenError(f"sigma must be a finite value >= 0, got {self.sigma}")
        if not (self.alpha > 0 and np.isfinite(self.alpha)):
            raise RefgenError(f"alpha must be > 0, got {self.alpha}")
        if int(self.shift) != self.shift or self.shift < 0:
            raise RefgenError(f"shift must be a non-negative integer, got {self.shift}")

    def to_dict(self):
        out = {"kind": self.kind, "seed": self.seed}
        if self.kind == "jitter":
            out["sigma"] = self.sigma
        elif self.kind == "amplitude-scale":
            out["alpha"] = self.alpha
        elif self.kind == "circular-shift":
            out["shift"] = int(self.shift)
        return out


def generate(real: WindowedDataset, spec: DegradationSpec) -> WindowedDataset:
    """Produce a synthetic stand-in for ``real``.

    Shape, labels and subjects are kept (``label-permute`` shuffles the
    labels and leaves the windows alone). The result records ``spec`` under
    ``provenance["degradation"]``.
    """
    rng = np.random.default_rng(spec.seed)
    data, labels = real.data, real.labels
    kind = spec.kind
    if kind == "jitter" and spec.sigma > 0:
        noise = rng.normal(0.0, spec.sigma, size=data.shape)
        data = (data.astype(np.float64) + noise).astype(real.data.dtype)
    elif kind == "amplitude-scale" and spec.alpha != 1.0:
        data = (data.astype(np.float64) * spec.alpha).astype(real.data.dtype)
    elif kind == "circular-shift":
        k = int(spec.shift) % real.window_length
        if k:
            data = np.roll(data, k, axis=2)
    elif kind == "white-noise":
        flat = data.astype(np.float64).transpose(1, 0, 2).reshape(data.shape[1], -1)
        mean = flat.mean(axis=1)[None, :, None]
        std = flat.std(axis=1)[None, :, None]
        data = (mean + std * rng.standard_normal(data.shape)).astype(real.data.dtype)
    elif kind == "label-permute":
        labels = labels[rng.permutation(len(labels))]
    provenance = {"degradation": spec.to_dict(), "source": dict(real.provenance)}
    return WindowedDataset(np.array(data), np.array(labels), real.subjects, real.channels, real.rate,
                           real.window_seconds, real.n_classes, name=f"{real.name}+{kind}",
                           normalization=dict(real.normalization), provenance=provenance)


@dataclass(frozen=True)
class ToyTaskSpec:
    """Two-class task separable by construction.

    Class 0 windows carry a sinusoid at ``f0`` plus Gaussian noise; class 1
    windows are white noise of the same total variance, or, when ``f1`` is
    given, a sinusoid at ``f1`` with the same noise. Each channel draws its
    own random phase. ``amplitude / noise`` is the signal-to-noise ratio.
    """

    n_per_class: int | tuple[int, int] = 100
    length: int = 256
    rate: float = 64.0
    channels: int = 2
    f0: float = 2.0
    f1: float | None = None
    amplitude: float = 1.0
    noise: float = 0.5
    n_subjects: int = 10
    seed: int = 0
    counts: tuple[int, int] = field(init=False)

    def __post_init__(self):
        counts = self.n_per_class
        counts = (counts, counts) if np.isscalar(counts) else tuple(counts)
        if len(counts) != 2 or min(counts) < 1:
            raise RefgenError(f"need two positive class counts, got {counts}")
        object.__setattr__(self, "counts", tuple(int(c) for c in counts))
        nyq = self.rate / 2
        if not 0 < self.f0 < nyq:
            raise RefgenError(f"f0={self.f0} must lie in (0, {nyq})")
        if self.f1 is not None:
            if not 0 < self.f1 < nyq:
                raise RefgenError(f"f1={self.f1} must lie in (0, {nyq})")
            if self.f1 == self.f0:
                raise RefgenError("f0 and f1 must differ")
        if self.length < 4 or self.channels < 1 or self.n_subjects < 1:
            raise RefgenError("length >= 4, channels >= 1 and n_subjects >= 1 are required")
        if self.noise < 0 or self.amplitude <= 0:
            raise RefgenError("amplitude must be > 0 and noise >= 0")

    def to_dict(self):
        return {"n_per_class": list(self.counts), "length": self.length, "rate": self.rate,
                "channels": self.channels, "f0": self.f0, "f1": self.f1, "amplitude": self.amplitude,
                "noise": self.noise, "n_subjects": self.n_subjects, "seed": self.seed}


def _tone(rng, n, length, channels, freq, rate, amplitude):
    t = np.arange(length) / rate
    phase = rng.uniform(0, 2 * np.pi, size=(n, channels, 1))
    return amplitude * np.sin(2 * np.pi * freq * t + phase)


def make_toy_task(spec: ToyTaskSpec = ToyTaskSpec(), dtype=np.float32) -> WindowedDataset:
    rng = np.random.default_rng(spec.seed)
    n0, n1 = spec.counts
    shape = lambda n: (n, spec.channels, spec.length)  # noqa: E731
    x0 = _tone(rng, n0, spec.length, spec.channels, spec.f0, spec.rate, spec.amplitude)
    x0 = x0 + rng.normal(0.0, spec.noise, size=shape(n0))
    if spec.f1 is None:
        total = np.sqrt(spec.amplitude ** 2 / 2 + spec.noise ** 2)
        x1 = rng.normal(0.0, total, size=shape(n1))
    else:
        x1 = _tone(rng, n1, spec.length, spec.channels, spec.f1, spec.rate, spec.amplitude)
        x1 = x1 + rng.normal(0.0, spec.noise, size=shape(n1))
    data = np.concatenate([x0, x1]).astype(dtype)
    labels = np.repeat([0, 1], [n0, n1])
    order = rng.permutation(n0 + n1)
    subjects = np.array([f"toy{i % spec.n_subjects:02d}" for i in range(n0 + n1)])
    channels = tuple(ChannelSpec(f"ch{c}", spec.rate) for c in range(spec.channels))
    return WindowedDataset(data[order], labels[order], subjects, channels, spec.rate,
                           spec.length / spec.rate, 2, name="toy",
                           provenance={"toy_task": spec.to_dict()})
