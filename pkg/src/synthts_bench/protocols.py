"""Evaluation protocols: stratified splits, discriminative score, TRTR/TSTR and augmentation.

Every protocol runs once per (classifier, seed). Runs are independent and
may execute on a process pool; results are always reduced in job order so
the outcome does not depend on the worker count.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .distribution import EntropyConfig, KernelConfig, entropy_metric, mmd_metric
from .nn import ARCHITECTURES, ModelSpec, TrainingConfig, accuracy, auroc, build, train
from .pipeline import WindowedDataset
from .sample_metrics import FEATURE_METRICS, MetricResult, PairPlan, average_present, sample_metric

log = logging.getLogger(__name__)

DEFAULT_SEEDS = (1, 2, 3)
MIN_CLASS_SIZE = 5
QUALITY_METRICS = FEATURE_METRICS + ("DTWD", "MMD", "En", "DS")
CACHE_ENV = "SYNTHTS_BENCH_CACHE"


class ProtocolError(ValueError):
    pass


class DAPoolError(ProtocolError):
    def __init__(self, policy, required, available):
        self.required = {int(c): int(v) for c, v in enumerate(required)}
        self.available = {int(c): int(v) for c, v in enumerate(available)}
        self.deficit = {c: self.required[c] - self.available[c] for c in self.required
                        if self.required[c] > self.available[c]}
        parts = ", ".join(f"class {c}: required {self.required[c]}, available {self.available[c]}, "
                          f"short {d}" for c, d in self.deficit.items())
        super().__init__(f"synthetic pool too small for {policy}: {parts}")


class LeakageError(AssertionError):
    """The real test partition reached a training or validation role."""


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    """Train/validation/test fractions and the seed that fixes the shuffle.

    ``subject_disjoint`` is experimental: whole subjects go to one partition,
    so per-class proportions are no longer guaranteed.
    """

    train: float = 0.7
    val: float = 0.1
    test: float = 0.2
    seed: int = 0
    subject_disjoint: bool = False

    def __post_init__(self):
        f = self.fractions
        if min(f) < 0 or abs(sum(f) - 1.0) > 1e-9:
            raise ProtocolError(f"split fractions must be >= 0 and sum to 1, got {f}")

    @property
    def fractions(self) -> tuple[float, float, float]:
        return (self.train, self.val, self.test)

    def to_dict(self):
        d = {"train": self.train, "val": self.val, "test": self.test, "seed": self.seed}
        if self.subject_disjoint:
            d["subject_disjoint"] = True
        return d


class Split(NamedTuple):
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


def split_counts(n: int, fractions: Sequence[float]) -> np.ndarray:
    """Largest-remainder apportionment of ``n`` items; ties go to the earlier partition."""
    exact = n * np.asarray(fractions, dtype=np.float64)
    base = np.floor(exact + 1e-9).astype(np.int64)
    rem = exact - base
    short = n - int(base.sum())
    order = sorted(range(len(base)), key=lambda k: (-rem[k], k))
    for k in order[:short]:
        base[k] += 1
    return base


def stratified_split(data, spec: SplitSpec = SplitSpec()) -> Split:
    """Seeded per-class 70/10/20 (by default) partition of window indices.

    ``data`` is a :class:`WindowedDataset` or a label array. Classes are
    processed in id order; each is shuffled and cut at the largest-remainder
    counts, so every partition is within one sample of its exact share.
    """
    if isinstance(data, WindowedDataset):
        labels, subjects = data.labels, data.subjects
    else:
        labels, subjects = np.asarray(data, dtype=np.int64), None
    if spec.subject_disjoint:
        if subjects is None:
            raise ProtocolError("subject-disjoint splitting needs a dataset with subject ids")
        return _subject_split(labels, subjects, spec)
    rng = np.random.default_rng(spec.seed)
    parts: list[list[np.ndarray]] = [[], [], []]
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if len(idx) < MIN_CLASS_SIZE:
            raise ProtocolError(f"class {c} has {len(idx)} samples; stratified splitting needs "
                                f">= {MIN_CLASS_SIZE}")
        idx = idx[rng.permutation(len(idx))]
        bounds = np.cumsum(split_counts(len(idx), spec.fractions))
        for k, chunk in enumerate(np.split(idx, bounds[:-1])):
            parts[k].append(chunk)
    return Split(*(np.sort(np.concatenate(p)) if p else np.empty(0, np.int64) for p in parts))


def _subject_split(labels, subjects, spec) -> Split:
    rng = np.random.default_rng(spec.seed)
    uniq = np.unique(subjects)
    if len(uniq) < 3:
        raise ProtocolError("subject-disjoint splitting needs at least 3 subjects")
    uniq = uniq[rng.permutation(len(uniq))]
    counts = np.maximum(split_counts(len(uniq), spec.fractions), 1)
    while counts.sum() > len(uniq):
        counts[np.argmax(counts)] -= 1
    bounds = np.cumsum(counts)[:-1]
    groups = np.split(uniq, bounds)
    return Split(*(np.flatnonzero(np.isin(subjects, g)) for g in groups))


def check_no_leakage(test_idx, **roles):
    """Raise :class:`LeakageError` if any named index set meets the real test partition."""
    test = set(np.asarray(test_idx).tolist())
    for name, idx in roles.items():
        hit = test.intersection(np.asarray(idx).tolist())
        if hit:
            raise LeakageError(f"{len(hit)} real test windows appear in the {name} role")


# ---------------------------------------------------------------------------
# Run configuration and execution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProtocolConfig:
    """Classifiers, seeds and training recipe shared by every protocol run."""

    classifiers: tuple[str, ...] = ARCHITECTURES
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    training: TrainingConfig = TrainingConfig()
    split: SplitSpec = SplitSpec()
    arch_params: dict = field(default_factory=dict)
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "classifiers", tuple(self.classifiers))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.seeds:
            raise ProtocolError("seed list is empty")
        if not self.classifiers:
            raise ProtocolError("classifier list is empty")
        unknown = set(self.classifiers) - set(ARCHITECTURES)
        if unknown:
            raise ProtocolError(f"unknown classifier(s) {sorted(unknown)}; choose from {ARCHITECTURES}")

    def split_for(self, seed: int) -> SplitSpec:
        return replace(self.split, seed=seed)

    def to_dict(self):
        return {"classifiers": list(self.classifiers), "seeds": list(self.seeds),
                "training": {k: v for k, v in self.training.to_dict().items() if k != "seed"},
                "split": {k: v for k, v in self.split.to_dict().items() if k != "seed"},
                "arch_params": {k: dict(v) for k, v in sorted(self.arch_params.items())}}


@dataclass(frozen=True)
class RunJob:
    protocol: str
    arch: str
    seed: int
    X_train: np.ndarray
    y_train: np.ndarray
    X_val: np.ndarray
    y_val: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    n_classes: int
    training: TrainingConfig
    params: dict
    tag: dict = field(default_factory=dict)


@dataclass
class RunRecord:
    protocol: str
    arch: str
    seed: int
    auroc: float
    accuracy: float
    best_epoch: int
    wall_time: float
    tag: dict = field(default_factory=dict)

    def ledger_entry(self, config_hash: str) -> dict:
        return {"protocol": self.protocol, "classifier": self.arch, "seed": self.seed, "auroc": self.auroc,
                "accuracy": self.accuracy, "best_epoch": self.best_epoch,
                "wall_time_s": round(self.wall_time, 3), "config_hash": config_hash, **self.tag}


def execute(job: RunJob) -> RunRecord:
    """Train one classifier and score it on the job's test set."""
    start = time.perf_counter()
    spec = ModelSpec(job.arch, job.X_train.shape[1:], job.n_classes, dict(job.params))
    model = build(spec, seed=job.seed)
    fitted = train(model, (job.X_train, job.y_train), (job.X_val, job.y_val),
                   replace(job.training, seed=job.seed))
    proba = fitted.predict_proba(job.X_test)
    acc = accuracy(proba.argmax(axis=1), job.y_test)
    try:
        auc = auroc(proba, job.y_test)
    except ValueError:
        auc = float("nan")
    return RunRecord(job.protocol, job.arch, job.seed, auc, acc, fitted.best_epoch,
                     time.perf_counter() - start, dict(job.tag))


def run_jobs(jobs: Sequence[RunJob], workers: int = 1, ledger: "RunLedger | None" = None,
             config_hash: str = "") -> list[RunRecord]:
    """Execute jobs, in a process pool when ``workers > 1``; results keep job order."""
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(execute, jobs))
    else:
        records = [execute(j) for j in jobs]
    if ledger is not None:
        for r in records:
            ledger.append(r.ledger_entry(config_hash))
    return records


class RunLedger:
    """Append-only JSONL record of finished runs.

    Lives in ``$SYNTHTS_BENCH_CACHE`` (default ``~/.cache/synthts-bench``).
    """

    def __init__(self, path=None):
        if path is None:
            root = os.environ.get(CACHE_ENV) or Path.home() / ".cache" / "synthts-bench"
            path = Path(root) / "run_ledger.jsonl"
        self.path = Path(path)

    def append(self, entry: dict):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")

    def read(self) -> list[dict]:
        if not self.path.exists():
            return []
        return [json.loads(line) for line in self.path.read_text(encoding="utf-8").splitlines() if line]


def config_hash(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _check_compatible(real: WindowedDataset, synth: WindowedDataset):
    if real.data.shape[1:] != synth.data.shape[1:]:
        raise ProtocolError(f"shape mismatch: real windows are {real.data.shape[1:]}, "
                            f"synthetic windows are {synth.data.shape[1:]}")
    if real.n_classes != synth.n_classes:
        raise ProtocolError(f"class structure differs: {real.n_classes} vs {synth.n_classes} classes")


def _as_input(ds: WindowedDataset, idx, channels=None) -> np.ndarray:
    X = ds.data[np.asarray(idx, dtype=np.int64)]
    if channels is not None:
        X = X[:, channels, :]
    return np.ascontiguousarray(X, dtype=np.float32)


# ---------------------------------------------------------------------------
# Discriminative score
# ---------------------------------------------------------------------------

def _channel_index(ds: WindowedDataset, channel) -> int:
    return ds.channel_names.index(channel) if isinstance(channel, str) else int(channel)


def discriminative_score(real: WindowedDataset, synth: WindowedDataset, channel,
                         cfg: ProtocolConfig = ProtocolConfig(), pooled: bool = False,
                         ledger: RunLedger | None = None) -> MetricResult:
    """``|0.5 - accuracy|`` of real-vs-synthetic classifiers on one modality.

    For each class (or once, with ``pooled=True``) and seed, real and
    synthetic windows are each split with the same seeded 70/10/20 spec, the
    matching partitions are concatenated with labels real=0 / synthetic=1,
    and every classifier is trained and scored on the joint test partition.
    Scores average over classifiers, then seeds, then classes.
    """
    _check_compatible(real, synth)
    ch = _channel_index(real, channel)
    groups = [(-1, np.arange(real.n_windows), np.arange(synth.n_windows))] if pooled else [
        (c, np.flatnonzero(real.labels == c), np.flatnonzero(synth.labels == c))
        for c in range(real.n_classes)]
    jobs, present = [], {}
    for c, ri, si in groups:
        if len(ri) == 0 or len(si) == 0:
            log.warning("class %d absent from %s data; DS cell left empty", c,
                        "real" if len(ri) == 0 else "synthetic")
            present[c] = False
            continue
        present[c] = True
        for seed in cfg.seeds:
            split = cfg.split_for(seed)
            rs = stratified_split(np.zeros(len(ri), np.int64), split)
            ss = stratified_split(np.zeros(len(si), np.int64), split)

            def part(k):
                X = np.concatenate([_as_input(real, ri[rs[k]], [ch]), _as_input(synth, si[ss[k]], [ch])])
                y = np.concatenate([np.zeros(len(rs[k]), np.int64), np.ones(len(ss[k]), np.int64)])
                return X, y

            (Xtr, ytr), (Xva, yva), (Xte, yte) = part(0), part(1), part(2)
            for arch in cfg.classifiers:
                jobs.append(RunJob("DS", arch, seed, Xtr, ytr, Xva, yva, Xte, yte, 2, cfg.training,
                                   cfg.arch_params.get(arch, {}),
                                   {"class_id": int(c), "channel": real.channel_names[ch]}))
    records = run_jobs(jobs, cfg.workers, ledger, config_hash(cfg.to_dict()))

    per_class: dict[int, float | None] = {}
    runs = []
    for c, ok in present.items():
        if not ok:
            per_class[c] = None
            continue
        mine = [r for r in records if r.tag["class_id"] == c]
        by_seed = [np.mean([abs(0.5 - r.accuracy) for r in mine if r.seed == s]) for s in cfg.seeds]
        per_class[c] = float(np.mean(by_seed))
        runs += [{"class_id": int(c), "classifier": r.arch, "seed": r.seed, "accuracy": r.accuracy,
                  "ds": abs(0.5 - r.accuracy)} for r in mine]
    details = {"mode": "pooled" if pooled else "per-class", "seeds": list(cfg.seeds),
               "classifiers": list(cfg.classifiers), "runs": runs}
    return MetricResult("DS", per_class, average_present("DS", per_class), 0, details)


# ---------------------------------------------------------------------------
# Augmentation policies
# ---------------------------------------------------------------------------

POLICIES = ("Balance", "Double", "BalanceDouble")
MODES = {"tstr": "TSTR", "da-balance": "Balance", "da-double": "Double", "da-balance-double": "BalanceDouble"}


@dataclass(frozen=True)
class DAPolicy:
    id: str

    def __post_init__(self):
        if self.id not in POLICIES:
            raise ProtocolError(f"unknown augmentation policy {self.id!r}; choose from {POLICIES}")

    def required(self, counts) -> np.ndarray:
        """Synthetic windows to add per class given the real class counts of one partition."""
        counts = np.asarray(counts, dtype=np.int64)
        top = int(counts.max()) if counts.size else 0
        if self.id == "Balance":
            return top - counts
        if self.id == "Double":
            return counts.copy()
        return 2 * top - counts


@dataclass
class DAPlan:
    """Synthetic pool indices chosen for the training and validation partitions."""

    policy: str
    train_add: np.ndarray
    val_add: np.ndarray
    train_counts: list[int]
    val_counts: list[int]
    train_counts_after: list[int]
    val_counts_after: list[int]

    @property
    def synthetic_to_real(self) -> float:
        real = sum(self.train_counts) + sum(self.val_counts)
        return (len(self.train_add) + len(self.val_add)) / real

    def to_dict(self):
        return {"policy": self.policy, "train_counts": self.train_counts, "val_counts": self.val_counts,
                "train_counts_after": self.train_counts_after, "val_counts_after": self.val_counts_after,
                "synthetic_added": [len(self.train_add), len(self.val_add)],
                "synthetic_to_real": self.synthetic_to_real}


def apply_da_policy(train_labels, val_labels, pool_labels, policy: DAPolicy | str, seed: int = 0,
                    n_classes: int | None = None) -> DAPlan:
    """Pick synthetic windows from a labelled pool so the hybrid partitions obey ``policy``.

    Draws are seeded and without replacement across both partitions. The
    test partition is not an input and so can never be touched.
    """
    policy = DAPolicy(policy) if isinstance(policy, str) else policy
    tr = np.asarray(train_labels, dtype=np.int64)
    va = np.asarray(val_labels, dtype=np.int64)
    pool = np.asarray(pool_labels, dtype=np.int64)
    K = n_classes or int(max(tr.max(initial=0), va.max(initial=0), pool.max(initial=0)) + 1)
    ct, cv = np.bincount(tr, minlength=K), np.bincount(va, minlength=K)
    need_t, need_v = policy.required(ct), policy.required(cv)
    available = np.bincount(pool, minlength=K)
    if np.any(need_t + need_v > available):
        raise DAPoolError(policy.id, need_t + need_v, available)
    rng = np.random.default_rng([seed, 0xDA])
    add_t, add_v = [], []
    for c in range(K):
        idx = np.flatnonzero(pool == c)
        idx = idx[rng.permutation(len(idx))]
        add_t.append(idx[:need_t[c]])
        add_v.append(idx[need_t[c]:need_t[c] + need_v[c]])
    add_t, add_v = np.concatenate(add_t), np.concatenate(add_v)
    return DAPlan(policy.id, add_t, add_v, ct.tolist(), cv.tolist(),
                  (ct + np.bincount(pool[add_t], minlength=K)).tolist(),
                  (cv + np.bincount(pool[add_v], minlength=K)).tolist())


# ---------------------------------------------------------------------------
# Utility protocols
# ---------------------------------------------------------------------------

@dataclass
class UtilityResult:
    """AUROC per (classifier, seed) for TRTR and each requested protocol, plus deltas."""

    classifiers: list[str]
    seeds: list[int]
    trtr: dict[str, dict[int, float]]
    protocols: dict[str, dict[str, dict[int, float]]] = field(default_factory=dict)
    plans: dict[str, list[dict]] = field(default_factory=dict)

    def delta(self, protocol: str, arch: str, seed: int) -> float:
        return self.protocols[protocol][arch][seed] - self.trtr[arch][seed]

    def mean_auroc(self, protocol: str, arch: str) -> float:
        table = self.trtr if protocol == "TRTR" else self.protocols[protocol]
        return float(np.mean([table[arch][s] for s in self.seeds]))

    def mean_delta(self, protocol: str, arch: str) -> float:
        return float(np.mean([self.delta(protocol, arch, s) for s in self.seeds]))

    def averaged_delta(self, protocol: str) -> float:
        return float(np.mean([self.mean_delta(protocol, a) for a in self.classifiers]))


def _utility_job(protocol, arch, seed, Xtr, ytr, Xva, yva, Xte, yte, n_classes, cfg, tag=None):
    return RunJob(protocol, arch, seed, Xtr, ytr, Xva, yva, Xte, yte, n_classes, cfg.training,
                  cfg.arch_params.get(arch, {}), tag or {})


def evaluate_utility(real: WindowedDataset, synth: WindowedDataset | None, modes: Sequence[str] = ("tstr",),
                     cfg: ProtocolConfig = ProtocolConfig(), ledger: RunLedger | None = None) -> UtilityResult:
    """TRTR baseline plus the requested protocols, all channels as joint input.

    ``modes`` are keys of :data:`MODES`. TSTR trains and validates on the
    synthetic partitions produced by the same split spec and seed; the DA
    policies treat the whole synthetic dataset as the draw pool.
    """
    unknown = [m for m in modes if m not in MODES]
    if unknown:
        raise ProtocolError(f"unknown mode(s) {unknown}; choose from {sorted(MODES)}")
    if modes and synth is None:
        raise ProtocolError("synthetic data is required for TSTR and augmentation")
    if synth is not None:
        _check_compatible(real, synth)
    K = real.n_classes
    jobs, plans = [], {}
    for seed in cfg.seeds:
        split = cfg.split_for(seed)
        rsplit = stratified_split(real, split)
        for name, part in zip(("train", "val", "test"), rsplit):
            present = np.unique(real.labels[part])
            if len(present) < 2:
                raise ProtocolError(f"seed {seed}: real {name} partition holds a single class")
        check_no_leakage(rsplit.test, train=rsplit.train, validation=rsplit.val)
        Xte, yte = _as_input(real, rsplit.test), real.labels[rsplit.test]
        Xtr, ytr = _as_input(real, rsplit.train), real.labels[rsplit.train]
        Xva, yva = _as_input(real, rsplit.val), real.labels[rsplit.val]
        for arch in cfg.classifiers:
            jobs.append(_utility_job("TRTR", arch, seed, Xtr, ytr, Xva, yva, Xte, yte, K, cfg))

        for mode in modes:
            protocol = MODES[mode]
            if protocol == "TSTR":
                ssplit = stratified_split(synth, split)
                for name, rk, sk in (("train", rsplit.train, ssplit.train), ("validation", rsplit.val, ssplit.val)):
                    need = np.bincount(real.labels[rk], minlength=K)
                    have = np.bincount(synth.labels[sk], minlength=K)
                    if np.any(have < need):
                        raise ProtocolError(f"insufficient synthetic samples for the TSTR {name} role: "
                                            f"real class counts {need.tolist()}, synthetic {have.tolist()}")
                sXtr, sytr = _as_input(synth, ssplit.train), synth.labels[ssplit.train]
                sXva, syva = _as_input(synth, ssplit.val), synth.labels[ssplit.val]
                for arch in cfg.classifiers:
                    jobs.append(_utility_job("TSTR", arch, seed, sXtr, sytr, sXva, syva, Xte, yte, K, cfg))
            else:
                plan = apply_da_policy(ytr, yva, synth.labels, protocol, seed, K)
                plans.setdefault(protocol, []).append({"seed": seed, **plan.to_dict()})
                hXtr = np.concatenate([Xtr, _as_input(synth, plan.train_add)])
                hytr = np.concatenate([ytr, synth.labels[plan.train_add]])
                hXva = np.concatenate([Xva, _as_input(synth, plan.val_add)])
                hyva = np.concatenate([yva, synth.labels[plan.val_add]])
                for arch in cfg.classifiers:
                    jobs.append(_utility_job(protocol, arch, seed, hXtr, hytr, hXva, hyva, Xte, yte, K, cfg))

    records = run_jobs(jobs, cfg.workers, ledger, config_hash(cfg.to_dict()))
    result = UtilityResult(list(cfg.classifiers), list(cfg.seeds), {a: {} for a in cfg.classifiers}, plans=plans)
    for r in records:
        table = result.trtr if r.protocol == "TRTR" else \
            result.protocols.setdefault(r.protocol, {a: {} for a in cfg.classifiers})
        table[r.arch][r.seed] = r.auroc
    return result


def run_trtr(real: WindowedDataset, cfg: ProtocolConfig = ProtocolConfig(),
             ledger: RunLedger | None = None) -> dict[str, dict[int, float]]:
    """AUROC per classifier and seed when training, validating and testing on real data."""
    return evaluate_utility(real, None, (), cfg, ledger).trtr


def run_tstr(real: WindowedDataset, synth: WindowedDataset, cfg: ProtocolConfig = ProtocolConfig(),
             ledger: RunLedger | None = None) -> UtilityResult:
    return evaluate_utility(real, synth, ("tstr",), cfg, ledger)


# ---------------------------------------------------------------------------
# Quality orchestration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QualityConfig:
    metrics: tuple[str, ...] = QUALITY_METRICS
    plan: PairPlan = PairPlan.capped()
    band_radius: int | None = None
    kernel: KernelConfig = KernelConfig()
    entropy: EntropyConfig = EntropyConfig()
    pooled: bool = False
    mmd_features: bool = False
    protocol: ProtocolConfig = ProtocolConfig()

    def __post_init__(self):
        object.__setattr__(self, "metrics", tuple(self.metrics))
        unknown = set(self.metrics) - set(QUALITY_METRICS)
        if unknown:
            raise ProtocolError(f"unknown metric(s) {sorted(unknown)}; choose from {QUALITY_METRICS}")
        if not self.metrics:
            raise ProtocolError("no metric selected")

    def to_dict(self):
        d = {"metrics": list(self.metrics), "pair_plan": self.plan.to_dict(), "band_radius": self.band_radius,
             "kernel": {"bandwidth": self.kernel.bandwidth, "seed": self.kernel.seed},
             "entropy_aggregation": self.entropy.aggregation, "pooled": self.pooled,
             "mmd_representation": "features" if self.mmd_features else "raw"}
        if "DS" in self.metrics:
            d["discriminative"] = self.protocol.to_dict()
        return d


def evaluate_quality(real: WindowedDataset, synth: WindowedDataset, cfg: QualityConfig = QualityConfig(),
                     ledger: RunLedger | None = None) -> dict[str, list[MetricResult]]:
    """Every selected metric for every modality: ``{channel name: [MetricResult, ...]}``."""
    _check_compatible(real, synth)
    out = {}
    for ch in real.channel_names:
        rows = []
        for metric in cfg.metrics:
            if metric in FEATURE_METRICS or metric == "DTWD":
                band = cfg.band_radius if metric == "DTWD" else None
                rows.append(sample_metric(metric, real, synth, ch, cfg.plan, cfg.pooled, band))
            elif metric == "MMD":
                rows.append(mmd_metric(real, synth, ch, cfg.kernel, cfg.pooled, cfg.mmd_features))
            elif metric == "En":
                rows.append(entropy_metric(real, synth, ch, cfg.entropy, cfg.pooled))
            else:
                rows.append(discriminative_score(real, synth, ch, cfg.protocol, cfg.pooled, ledger))
        out[ch] = rows
    return out
