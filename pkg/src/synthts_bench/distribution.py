"""Distribution-level quality: kernel MMD, spectral-entropy gap, exact t-SNE."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import perplexity_betas
from .pipeline import WindowedDataset
from .sample_metrics import MetricError, MetricResult, average_present, class_subsets

log = logging.getLogger(__name__)

BANDWIDTH_SUBSAMPLE = 2000


# ---------------------------------------------------------------------------
# MMD
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelConfig:
    """Exponentiated-quadratic kernel; ``bandwidth`` is a float or ``"median"``."""

    bandwidth: float | str = "median"
    seed: int = 0

    def __post_init__(self):
        if self.bandwidth != "median" and not (isinstance(self.bandwidth, (int, float)) and self.bandwidth > 0):
            raise MetricError("bandwidth must be a positive number or 'median'")


def _sq_dists(A, B):
    d = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d, 0.0)


def median_bandwidth(real_set, synth_set, seed: int = 0, cap: int = BANDWIDTH_SUBSAMPLE) -> tuple[float, bool]:
    """Median pairwise distance of the pooled points divided by sqrt(2).

    At most ``cap`` points (seeded uniform subsample) enter the median.
    Returns ``(sigma, fallback)``; ``fallback`` is True when every point is
    identical and sigma was set to 1.
    """
    Z = np.concatenate([np.asarray(real_set, float).reshape(len(real_set), -1),
                        np.asarray(synth_set, float).reshape(len(synth_set), -1)])
    if len(Z) > cap:
        Z = Z[np.sort(np.random.default_rng(seed).choice(len(Z), cap, replace=False))]
    iu = np.triu_indices(len(Z), k=1)
    d = np.sqrt(_sq_dists(Z, Z)[iu])
    if d.size == 0 or not np.any(d > 0):
        return 1.0, True
    med = float(np.median(d))
    if med == 0.0:
        # duplicates dominate; the median of the non-zero distances still scales with the data
        med = float(np.median(d[d > 0]))
    return med / math.sqrt(2.0), False


def mmd(real_set, synth_set, kernel: KernelConfig = KernelConfig()) -> tuple[float, float, bool]:
    """Biased (V-statistic) squared MMD with a Gaussian kernel.

    ``mean k(R,R) + mean k(S,S) - 2 mean k(R,S)``, which lies in [0, 2]
    because the kernel lies in (0, 1]. Returns ``(value, sigma, fallback)``.
    """
    R = np.asarray(real_set, dtype=np.float64)
    S = np.asarray(synth_set, dtype=np.float64)
    if len(R) == 0 or len(S) == 0:
        raise MetricError("MMD needs non-empty sets")
    R = R.reshape(len(R), -1)
    S = S.reshape(len(S), -1)
    if R.shape[1] != S.shape[1]:
        raise MetricError("MMD needs equal-length windows")
    if kernel.bandwidth == "median":
        sigma, fallback = median_bandwidth(R, S, kernel.seed)
        if fallback:
            log.warning("all points identical; MMD bandwidth falls back to 1")
    else:
        sigma, fallback = float(kernel.bandwidth), False
    g = 1.0 / (2.0 * sigma * sigma)
    krr = np.exp(-g * _sq_dists(R, R)).mean()
    kss = np.exp(-g * _sq_dists(S, S)).mean()
    krs = np.exp(-g * _sq_dists(R, S)).mean()
    value = float(np.clip(krr + kss - 2.0 * krs, 0.0, 2.0))
    return value, sigma, fallback


def mmd_metric(real: WindowedDataset, synth: WindowedDataset, channel, kernel: KernelConfig = KernelConfig(),
               pooled: bool = False, features: bool = False) -> MetricResult:
    """Per-class MMD on one modality, class-averaged.

    With ``features=True`` the 8-entry feature vectors replace raw windows.
    """
    from .sample_metrics import extract_features_batch

    per_class, sigmas, fallbacks = {}, {}, []
    for c, R, S in class_subsets(real, synth, channel, pooled):
        if len(R) == 0 or len(S) == 0:
            log.warning("class %d absent from one dataset; MMD cell left empty", c)
            per_class[c] = None
            continue
        if features:
            R, S = extract_features_batch(R), extract_features_batch(S)
        value, sigma, fb = mmd(R, S, kernel)
        per_class[c] = value
        sigmas[str(c)] = sigma
        if fb:
            fallbacks.append(c)
    details = {"bandwidth": kernel.bandwidth, "sigma": sigmas, "bandwidth_fallback": fallbacks,
               "representation": "features" if features else "raw"}
    return MetricResult("MMD", per_class, average_present("MMD", per_class), 0, details)


# ---------------------------------------------------------------------------
# Spectral entropy
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EntropyConfig:
    aggregation: str = "sum"

    def __post_init__(self):
        if self.aggregation not in {"sum", "mean"}:
            raise MetricError("aggregation must be 'sum' or 'mean'")


def spectral_entropy_batch(windows) -> np.ndarray:
    """Shannon entropy (bits) of each window's normalized periodogram, DC excluded."""
    X = np.asarray(windows, dtype=np.float64)
    if X.ndim == 1:
        X = X[None]
    if X.shape[1] < 4:
        raise MetricError("spectral entropy needs windows of length >= 4")
    if not np.all(np.isfinite(X)):
        raise MetricError("non-finite values in window")
    power = np.abs(np.fft.rfft(X, axis=1)[:, 1:X.shape[1] // 2 + 1]) ** 2
    total = power.sum(axis=1, keepdims=True)
    p = power / np.where(total > 0, total, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log2(p), 0.0)
    return np.where(total[:, 0] > 0, terms.sum(axis=1), 0.0)


def spectral_entropy(window) -> float:
    return float(spectral_entropy_batch(np.asarray(window, dtype=np.float64)[None])[0])


def aggregate_entropy(windows, cfg: EntropyConfig = EntropyConfig()) -> float:
    h = spectral_entropy_batch(windows)
    return float(h.sum() if cfg.aggregation == "sum" else h.mean())


def entropy_gap(real_set, synth_set, cfg: EntropyConfig = EntropyConfig()) -> float:
    if len(real_set) == 0 or len(synth_set) == 0:
        raise MetricError("entropy gap needs non-empty sets")
    return abs(aggregate_entropy(real_set, cfg) - aggregate_entropy(synth_set, cfg))


def entropy_metric(real: WindowedDataset, synth: WindowedDataset, channel,
                   cfg: EntropyConfig = EntropyConfig(), pooled: bool = False) -> MetricResult:
    per_class = {}
    for c, R, S in class_subsets(real, synth, channel, pooled):
        if len(R) == 0 or len(S) == 0:
            log.warning("class %d absent from one dataset; En cell left empty", c)
            per_class[c] = None
            continue
        per_class[c] = entropy_gap(R, S, cfg)
    return MetricResult("En", per_class, average_present("En", per_class), 0,
                        {"aggregation": cfg.aggregation})


# ---------------------------------------------------------------------------
# Exact t-SNE
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EmbeddingConfig:
    perplexity: float = 30.0
    iterations: int = 1000
    exaggeration: float = 12.0
    exaggeration_iters: int = 250
    learning_rate: float = 200.0
    seed: int = 0
    max_points_per_tag: int = 1000


@dataclass
class Embedding:
    coords: np.ndarray
    kl_trace: list[float] = field(default_factory=list)


def check_perplexity(n: int, perplexity: float):
    if n < 3 * perplexity + 1:
        suggest = max(1, (n - 1) // 3)
        raise MetricError(f"perplexity {perplexity:g} needs at least {int(math.ceil(3 * perplexity + 1))} "
                          f"points, got {n}; try --perplexity {suggest} or fewer")


def joint_affinities(X, perplexity: float) -> np.ndarray:
    """Symmetrized t-SNE input affinities with per-point bisection on the precision."""
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    D = _sq_dists(X, X)
    off = ~np.eye(n, dtype=bool)
    Drow = D[off].reshape(n, n - 1)
    Drow = Drow - Drow.min(axis=1, keepdims=True)
    betas = perplexity_betas(Drow, math.log(perplexity))
    Pc = np.exp(-Drow * betas[:, None])
    Pc /= Pc.sum(axis=1, keepdims=True)
    P = np.zeros((n, n))
    P[off] = Pc.ravel()
    P = (P + P.T) / (2.0 * n)
    return np.maximum(P, 1e-12)


def _pca_init(X):
    Xc = X - X.mean(axis=0)
    _, _, vt = np.linalg.svd(Xc, full_matrices=False)
    comps = vt[:2]
    # fix the sign ambiguity of the SVD so the init is reproducible
    signs = np.sign(comps[np.arange(len(comps)), np.argmax(np.abs(comps), axis=1)])
    comps = comps * signs[:, None]
    Y = Xc @ comps.T
    if Y.shape[1] < 2:
        Y = np.column_stack([Y, np.zeros(len(Y))])
    s = Y[:, 0].std()
    return Y / (s if s > 0 else 1.0) * 1e-4


def _kl_and_grad(P, Y):
    sq = _sq_dists(Y, Y)
    num = 1.0 / (1.0 + sq)
    np.fill_diagonal(num, 0.0)
    Q = np.maximum(num / num.sum(), 1e-12)
    W = (P - Q) * num
    grad = 4.0 * (W.sum(axis=1)[:, None] * Y - W @ Y)
    kl = float((P * np.log(P / Q)).sum())
    return kl, grad


def tsne(X, cfg: EmbeddingConfig = EmbeddingConfig()) -> Embedding:
    """Exact O(N^2) t-SNE with early exaggeration, momentum and adaptive gains."""
    X = np.asarray(X, dtype=np.float64).reshape(len(X), -1)
    n = len(X)
    check_perplexity(n, cfg.perplexity)
    P = joint_affinities(X, cfg.perplexity)
    Y = _pca_init(X)
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    trace = []
    for it in range(cfg.iterations):
        early = it < cfg.exaggeration_iters
        kl, grad = _kl_and_grad(P * cfg.exaggeration if early else P, Y)
        if not early:
            trace.append(kl)
        momentum = 0.5 if early else 0.8
        inc = np.sign(grad) != np.sign(update)
        gains = np.where(inc, gains + 0.2, gains * 0.8)
        np.maximum(gains, 0.01, out=gains)
        update = momentum * update - cfg.learning_rate * gains * grad
        Y = Y + update
        Y = Y - Y.mean(axis=0)
    return Embedding(Y, trace)


@dataclass
class TaggedPoints:
    """Points to embed with their provenance tags."""

    points: np.ndarray
    source: np.ndarray  # "real" / "synthetic"
    class_id: np.ndarray
    window_index: np.ndarray


def tag_points(real_set, synth_set, class_id: int, cfg: EmbeddingConfig) -> TaggedPoints:
    """Stack real and synthetic windows, subsampling each tag to ``cfg.max_points_per_tag``."""
    rng = np.random.default_rng(cfg.seed)
    parts = []
    for tag, S in (("real", np.asarray(real_set)), ("synthetic", np.asarray(synth_set))):
        idx = np.arange(len(S))
        if len(S) > cfg.max_points_per_tag:
            idx = np.sort(rng.choice(len(S), cfg.max_points_per_tag, replace=False))
        parts.append((tag, S[idx], idx))
    return TaggedPoints(
        np.concatenate([p[1].reshape(len(p[1]), -1) for p in parts]),
        np.concatenate([[p[0]] * len(p[1]) for p in parts]).astype(str),
        np.full(sum(len(p[1]) for p in parts), class_id),
        np.concatenate([p[2] for p in parts]),
    )


def tsne_embed(tagged: TaggedPoints, cfg: EmbeddingConfig = EmbeddingConfig()) -> tuple[Embedding, TaggedPoints]:
    return tsne(tagged.points, cfg), tagged


def embedding_csv(emb: Embedding, tagged: TaggedPoints) -> str:
    lines = ["x,y,source,class_id,window_index"]
    for (x, y), s, c, w in zip(emb.coords, tagged.source, tagged.class_id, tagged.window_index):
        lines.append(f"{x:.6f},{y:.6f},{s},{int(c)},{int(w)}")
    return "\n".join(lines) + "\n"


_COLORS = {"real": "#1f77b4", "synthetic": "#d62728"}


def embedding_svg(emb: Embedding, tagged: TaggedPoints, title: str = "", size: int = 480) -> str:
    """Minimal scatter plot; real points blue, synthetic red."""
    Y = emb.coords
    lo, hi = Y.min(axis=0), Y.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    pad = 20
    P = pad + (Y - lo) / span * (size - 2 * pad)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">',
           f'<rect width="{size}" height="{size}" fill="white"/>']
    if title:
        out.append(f'<text x="{pad}" y="14" font-size="12" font-family="sans-serif">{title}</text>')
    for (px, py), s in zip(P, tagged.source):
        out.append(f'<circle cx="{px:.2f}" cy="{size - py:.2f}" r="2.5" fill="{_COLORS[s]}" '
                   f'fill-opacity="0.6"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
