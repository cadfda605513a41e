"""Sample-level similarity between real and synthetic windows.

Feature distances (CD, CrD, L2) compare 8-entry statistical summaries;
DTWD compares raw windows. Every metric is averaged over a
:class:`PairPlan` of real-synthetic pairs, per class, then over classes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .kernels import dtw_pairs
from .pipeline import WindowedDataset

log = logging.getLogger(__name__)

FEATURE_NAMES = ("mean", "std", "min", "max", "median", "rms", "skewness", "kurtosis")
FEATURE_METRICS = ("CD", "CrD", "L2")
SAMPLE_METRICS = FEATURE_METRICS + ("DTWD",)
DEFAULT_PAIR_CAP = 20_000


class MetricError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Features
# ---------------------------------------------------------------------------

def extract_features_batch(windows) -> np.ndarray:
    """(n, L) windows -> (n, 8) feature matrix, columns as in :data:`FEATURE_NAMES`."""
    X = np.asarray(windows, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] < 2:
        raise MetricError(f"expected (n, L>=2) windows, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise MetricError("non-finite values in window")
    mean = X.mean(axis=1)
    dev = X - mean[:, None]
    m2 = (dev ** 2).mean(axis=1)
    std = np.sqrt(m2)
    flat = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
    safe = np.where(flat, 1.0, m2)
    skew = np.where(flat, 0.0, (dev ** 3).mean(axis=1) / safe ** 1.5)
    kurt = np.where(flat, 0.0, (dev ** 4).mean(axis=1) / safe ** 2 - 3.0)
    std = np.where(flat, 0.0, std)
    return np.column_stack([mean, std, X.min(axis=1), X.max(axis=1), np.median(X, axis=1),
                            np.sqrt((X ** 2).mean(axis=1)), skew, kurt])


def extract_features(window) -> np.ndarray:
    return extract_features_batch(np.asarray(window, dtype=np.float64)[None, :])[0]


# ---------------------------------------------------------------------------
# Vector distances
# ---------------------------------------------------------------------------

def _rows(u, v):
    U = np.atleast_2d(np.asarray(u, dtype=np.float64))
    V = np.atleast_2d(np.asarray(v, dtype=np.float64))
    if U.shape[-1] != V.shape[-1]:
        raise MetricError(f"length mismatch: {U.shape[-1]} vs {V.shape[-1]}")
    return U, V


def cosine_distance_rows(U, V) -> np.ndarray:
    U, V = _rows(U, V)
    nu = np.linalg.norm(U, axis=1)
    nv = np.linalg.norm(V, axis=1)
    denom = nu * nv
    sim = np.einsum("ij,ij->i", U, V) / np.where(denom == 0, 1.0, denom)
    d = np.where(denom == 0, 1.0, 1.0 - sim)
    d = np.where(np.all(U == V, axis=1) & (denom > 0), 0.0, d)
    return np.clip(d, 0.0, 2.0)


def correlation_distance_rows(U, V) -> np.ndarray:
    U, V = _rows(U, V)
    if U.shape[1] < 2:
        raise MetricError("correlation distance needs vectors of length >= 2")
    Uc = U - U.mean(axis=1, keepdims=True)
    Vc = V - V.mean(axis=1, keepdims=True)
    nu = np.linalg.norm(Uc, axis=1)
    nv = np.linalg.norm(Vc, axis=1)
    denom = nu * nv
    r = np.einsum("ij,ij->i", Uc, Vc) / np.where(denom == 0, 1.0, denom)
    d = np.where(denom == 0, 1.0, 1.0 - r)
    d = np.where(np.all(U == V, axis=1) & (denom > 0), 0.0, d)
    return np.clip(d, 0.0, 2.0)


def euclidean_distance_rows(U, V) -> np.ndarray:
    U, V = _rows(U, V)
    return np.linalg.norm(U - V, axis=1)


def cosine_distance(u, v) -> float:
    """``1 - u.v / (|u||v|)``; 1 when either vector is zero."""
    return float(cosine_distance_rows(u, v)[0])


def correlation_distance(u, v) -> float:
    """``1 - pearson(u, v)``; 1 when either vector is constant."""
    return float(correlation_distance_rows(u, v)[0])


def euclidean_distance(u, v) -> float:
    return float(euclidean_distance_rows(u, v)[0])


def dtw_distance(x, y, band_radius: int | None = None) -> float:
    """Minimum cumulative ``|x_i - y_j|`` cost over monotone alignments.

    Steps are (1,0), (0,1) and (1,1); both endpoints are pinned. With
    ``band_radius`` the path is confined to ``|i - j| <= band_radius``.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size == 0 or y.size == 0:
        raise MetricError("DTW needs non-empty sequences")
    if band_radius is not None:
        if band_radius < 0:
            raise MetricError("band_radius must be >= 0")
        if abs(x.size - y.size) > band_radius:
            raise MetricError(f"band radius {band_radius} admits no path between lengths {x.size} and {y.size}")
    return float(dtw_pairs(x[None], y[None], np.zeros(1), np.zeros(1), band_radius)[0])


_ROW_DISTANCES = {"CD": cosine_distance_rows, "CrD": correlation_distance_rows, "L2": euclidean_distance_rows}


# ---------------------------------------------------------------------------
# Pair plans and averaging
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PairPlan:
    """Which real-synthetic pairs to average over.

    ``mode`` is ``"all"``, ``"capped"`` (uniform sample of ``max_pairs`` grid
    cells without replacement, fixed by ``seed``) or ``"diagonal"``
    (pair ``i`` with ``i``).
    """

    mode: str = "all"
    max_pairs: int = DEFAULT_PAIR_CAP
    seed: int = 0

    def __post_init__(self):
        if self.mode not in {"all", "capped", "diagonal"}:
            raise MetricError(f"unknown pair mode {self.mode!r}")
        if self.mode == "capped" and self.max_pairs < 1:
            raise MetricError("max_pairs must be >= 1")

    @classmethod
    def capped(cls, max_pairs=DEFAULT_PAIR_CAP, seed=0):
        return cls("capped", max_pairs, seed)

    def for_class(self, class_id: int) -> "PairPlan":
        if self.mode != "capped":
            return self
        seed = int(np.random.SeedSequence([self.seed, class_id]).generate_state(1)[0])
        return PairPlan("capped", self.max_pairs, seed)

    def pairs(self, n_real: int, n_synth: int) -> tuple[np.ndarray, np.ndarray]:
        if self.mode == "diagonal":
            k = np.arange(min(n_real, n_synth))
            return k, k.copy()
        total = n_real * n_synth
        if self.mode == "all" or self.max_pairs >= total:
            flat = np.arange(total)
        else:
            rng = np.random.default_rng(self.seed)
            flat = np.sort(rng.choice(total, size=self.max_pairs, replace=False))
        return flat // n_synth, flat % n_synth

    def to_dict(self):
        d = {"mode": self.mode}
        if self.mode == "capped":
            d.update(max_pairs=self.max_pairs, seed=self.seed)
        return d


def pair_values(metric: str, real_set, synth_set, plan: PairPlan = PairPlan(),
                band_radius: int | None = None) -> np.ndarray:
    """Metric value for every planned pair, in pair-index order."""
    R = np.asarray(real_set, dtype=np.float64)
    S = np.asarray(synth_set, dtype=np.float64)
    if R.ndim != 2 or S.ndim != 2 or len(R) == 0 or len(S) == 0:
        raise MetricError("mean_pairwise needs two non-empty (n, L) sets")
    ii, jj = plan.pairs(len(R), len(S))
    if metric in _ROW_DISTANCES:
        FR, FS = extract_features_batch(R), extract_features_batch(S)
        return _ROW_DISTANCES[metric](FR[ii], FS[jj])
    if metric == "DTWD":
        if band_radius is not None and abs(R.shape[1] - S.shape[1]) > band_radius:
            raise MetricError("band radius admits no path")
        return dtw_pairs(R, S, ii, jj, band_radius)
    raise MetricError(f"unknown sample metric {metric!r}")


def mean_pairwise(metric: str, real_set, synth_set, plan: PairPlan = PairPlan(),
                  band_radius: int | None = None) -> tuple[float, int]:
    """Mean metric over the planned pairs of one class; returns ``(mean, n_pairs)``."""
    vals = pair_values(metric, real_set, synth_set, plan, band_radius)
    return float(vals.mean()), int(vals.size)


@dataclass
class MetricResult:
    """One metric on one modality: per-class values and their unweighted mean.

    ``per_class`` keys are class ids (``-1`` when labels were pooled);
    ``None`` marks a class absent from one of the datasets.
    """

    metric: str
    per_class: dict[int, float | None]
    class_average: float | None
    pair_count: int = 0
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {"metric": self.metric, "per_class": {str(k): v for k, v in self.per_class.items()},
                "class_average": self.class_average, "pair_count": self.pair_count,
                "details": self.details}


SampleMetricResult = MetricResult


def average_present(metric: str, per_class: dict) -> float:
    present = [v for v in per_class.values() if v is not None]
    if not present:
        raise MetricError(f"{metric}: no class is present in both datasets")
    return float(np.mean(present))


def class_subsets(real: WindowedDataset, synth: WindowedDataset, channel, pooled: bool = False):
    """Yield ``(class_id, real_windows, synth_windows)``; ``pooled`` ignores labels."""
    R, S = real.channel(channel), synth.channel(channel)
    if pooled:
        yield -1, R, S
        return
    for c in range(max(real.n_classes, synth.n_classes)):
        yield c, R[real.labels == c], S[synth.labels == c]


def sample_metric(metric: str, real: WindowedDataset, synth: WindowedDataset, channel,
                  plan: PairPlan = PairPlan(), pooled: bool = False,
                  band_radius: int | None = None) -> MetricResult:
    """Per-class ``mean_pairwise`` on one modality plus the unweighted class average.

    Classes missing from either dataset are reported as ``None`` and skipped
    in the average.
    """
    per_class: dict[int, float | None] = {}
    total = 0
    for c, R, S in class_subsets(real, synth, channel, pooled):
        if len(R) == 0 or len(S) == 0:
            log.warning("class %d absent from %s data; %s cell left empty", c,
                        "real" if len(R) == 0 else "synthetic", metric)
            per_class[c] = None
            continue
        value, n = mean_pairwise(metric, R, S, plan.for_class(c), band_radius)
        per_class[c] = value
        total += n
    details = {"plan": plan.to_dict()}
    if band_radius is not None:
        details["band_radius"] = band_radius
    return MetricResult(metric, per_class, average_present(metric, per_class), total, details)
