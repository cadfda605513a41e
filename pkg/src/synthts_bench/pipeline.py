"""Ingestion and preprocessing of multimodal wearable recordings.

The flow is ``ingest -> resample -> lowpass -> cut phases -> segment ->
label -> normalize``, ending in a :class:`WindowedDataset`.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import signal as sps

EXCLUDED = "EXCLUDED"
THRESHOLD = "THRESHOLD"
SCHEMA_VERSION = "1"


class PipelineError(ValueError):
    """Raised for invalid manifests, unreadable inputs or impossible preprocessing."""


class IngestError(PipelineError):
    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChannelSpec:
    name: str
    native_rate: float
    kind: str = "quasi-periodic"
    lowpass_cutoff: float | None = None

    def __post_init__(self):
        if not self.native_rate > 0:
            raise PipelineError(f"channel {self.name!r}: native_rate must be > 0")
        if self.kind not in {"quasi-periodic", "slow-varying"}:
            raise PipelineError(f"channel {self.name!r}: unknown kind {self.kind!r}")
        if self.lowpass_cutoff is not None and not self.lowpass_cutoff > 0:
            raise PipelineError(f"channel {self.name!r}: lowpass_cutoff must be > 0")

    def to_dict(self):
        return {"name": self.name, "native_rate": self.native_rate, "kind": self.kind,
                "lowpass_cutoff": self.lowpass_cutoff}

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], float(d["native_rate"]), d.get("kind", "quasi-periodic"),
                   None if d.get("lowpass_cutoff") is None else float(d["lowpass_cutoff"]))


@dataclass(frozen=True)
class PhaseAnnotation:
    """One protocol phase of one subject.

    ``annotations`` maps a stream name (e.g. ``"valence"``) to
    ``(rate, values)``; the stream's first sample sits at the phase start.
    """

    subject_id: str
    phase_name: str
    start: float
    end: float
    annotations: Mapping[str, tuple[float, np.ndarray]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.end > self.start:
            raise PipelineError(f"phase {self.phase_name!r} of {self.subject_id}: end must exceed start")
        for name, (rate, values) in self.annotations.items():
            v = np.asarray(values, dtype=float)
            if rate <= 0:
                raise PipelineError(f"annotation {name!r}: rate must be > 0")
            if v.size and (not np.all(np.isfinite(v)) or v.min() < 0 or v.max() > 10):
                raise PipelineError(f"annotation {name!r} of phase {self.phase_name!r}: values must lie in [0, 10]")


@dataclass(frozen=True)
class LabelMap:
    """Phase-name rules plus the valence/arousal thresholding rule.

    ``rules`` maps a phase name to a class id, :data:`EXCLUDED`, or
    :data:`THRESHOLD` (label from the continuous annotations). Thresholded
    classes are ``2 * (valence >= t) + (arousal >= t)``: 0=LL, 1=LH, 2=HL, 3=HH.
    """

    rules: Mapping[str, int | str]
    threshold: float = 5.0
    valence_stream: str = "valence"
    arousal_stream: str = "arousal"

    def __post_init__(self):
        ids = set()
        for phase, target in self.rules.items():
            if target in (EXCLUDED, THRESHOLD):
                if target == THRESHOLD:
                    ids.update(range(4))
                continue
            if isinstance(target, bool) or not isinstance(target, int) or target < 0:
                raise PipelineError(f"label rule for {phase!r} must be a class id, {EXCLUDED!r} or {THRESHOLD!r}")
            ids.add(target)
        if ids and ids != set(range(max(ids) + 1)):
            raise PipelineError(f"class ids must be contiguous from 0, got {sorted(ids)}")

    @property
    def n_classes(self) -> int:
        n = 0
        for target in self.rules.values():
            if target == THRESHOLD:
                n = max(n, 4)
            elif target != EXCLUDED:
                n = max(n, target + 1)
        return n

    def to_dict(self):
        return {"rules": dict(self.rules), "threshold": self.threshold,
                "valence_stream": self.valence_stream, "arousal_stream": self.arousal_stream}

    @classmethod
    def from_dict(cls, d):
        return cls(dict(d["rules"]), float(d.get("threshold", 5.0)),
                   d.get("valence_stream", "valence"), d.get("arousal_stream", "arousal"))


WESAD_LABEL_MAP = LabelMap({"baseline": 0, "amusement": 0, "TSST": 1,
                            "recovery": EXCLUDED, "meditation": EXCLUDED})
SWELL_LABEL_MAP = LabelMap({"neutral": 0, "time_pressure": 1, "interruption": 1})
CASE_LABEL_MAP = LabelMap({"video": THRESHOLD})
LABEL_MAPS = {"wesad": WESAD_LABEL_MAP, "swell": SWELL_LABEL_MAP, "case": CASE_LABEL_MAP}


def _freeze(arr):
    # read-only arrays can be shared between datasets; writeable ones are copied
    if arr.flags.writeable:
        arr = arr.copy()
        arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class WindowedDataset:
    """N fixed-length multi-channel windows with labels and subjects.

    ``data`` has shape (N, C, L) with ``L == rate * window_seconds``.
    Arrays are made read-only on construction.
    """

    data: np.ndarray
    labels: np.ndarray
    subjects: np.ndarray
    channels: tuple[ChannelSpec, ...]
    rate: float
    window_seconds: float
    n_classes: int
    name: str = "dataset"
    normalization: Mapping = field(default_factory=lambda: {"state": "raw"})
    provenance: Mapping = field(default_factory=dict)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.dtype not in (np.float32, np.float64):
            data = data.astype(np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        subjects = np.asarray(self.subjects, dtype=str)
        object.__setattr__(self, "data", _freeze(data))
        object.__setattr__(self, "labels", _freeze(labels))
        object.__setattr__(self, "subjects", _freeze(subjects))
        object.__setattr__(self, "channels", tuple(self.channels))
        if data.ndim != 3:
            raise PipelineError(f"data must be [N, C, L], got shape {data.shape}")
        n, c, length = data.shape
        if n == 0:
            raise PipelineError("dataset is empty")
        if len(self.channels) != c:
            raise PipelineError(f"{len(self.channels)} channel specs for {c} channels")
        expected = self.rate * self.window_seconds
        if abs(expected - length) > 1e-6:
            raise PipelineError(f"window length {length} != rate*window_seconds = {expected}")
        if labels.shape != (n,) or subjects.shape != (n,):
            raise PipelineError("labels and subjects must have one entry per window")
        if labels.min() < 0 or labels.max() >= self.n_classes:
            raise PipelineError(f"labels must lie in [0, {self.n_classes})")
        if not np.all(np.isfinite(data)):
            raise PipelineError("dataset contains non-finite values")

    @property
    def n_windows(self) -> int:
        return self.data.shape[0]

    @property
    def window_length(self) -> int:
        return self.data.shape[2]

    @property
    def channel_names(self) -> list[str]:
        return [c.name for c in self.channels]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def channel(self, ch) -> np.ndarray:
        """Windows of one modality as an (N, L) array; ``ch`` is an index or name."""
        if isinstance(ch, str):
            ch = self.channel_names.index(ch)
        return self.data[:, ch, :]

    def subset(self, idx) -> "WindowedDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return replace(self, data=self.data[idx], labels=self.labels[idx], subjects=self.subjects[idx])

    def with_data(self, data, **changes) -> "WindowedDataset":
        return replace(self, data=data, **changes)

    def equals(self, other: "WindowedDataset") -> bool:
        return (self.data.shape == other.data.shape and self.data.dtype == other.data.dtype
                and np.array_equal(self.data, other.data)
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.subjects, other.subjects)
                and self.channels == other.channels and self.rate == other.rate
                and self.window_seconds == other.window_seconds
                and self.n_classes == other.n_classes and self.name == other.name
                and dict(self.normalization) == dict(other.normalization)
                and dict(self.provenance) == dict(other.provenance))


# ---------------------------------------------------------------------------
# Manifest + ingestion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FileEntry:
    subject_id: str
    channel: str
    path: Path
    column: int = 0
    skip: int = 0
    native_rate: float | None = None


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    channels: tuple[ChannelSpec, ...]
    files: tuple[FileEntry, ...]
    phases: tuple[PhaseAnnotation, ...]
    label_map: LabelMap
    target_rate: float
    window_seconds: float

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise PipelineError(f"{path}: cannot read manifest ({exc})") from exc
        return cls.from_dict(raw, base_dir=path.parent)

    @classmethod
    def from_dict(cls, raw, base_dir=".") -> "DatasetManifest":
        base = Path(base_dir)
        version = str(raw.get("schema_version", ""))
        if version != SCHEMA_VERSION:
            raise PipelineError(f"unsupported manifest schema_version {version!r}, expected {SCHEMA_VERSION!r}")
        try:
            channels = tuple(ChannelSpec.from_dict(c) for c in raw["channels"])
            files = tuple(
                FileEntry(str(f["subject_id"]), f["channel"], base / f["path"], int(f.get("column", 0)),
                          int(f.get("skip", 0)),
                          None if f.get("native_rate") is None else float(f["native_rate"]))
                for f in raw["files"])
            phases = tuple(_phase_from_dict(p, base) for p in raw["phases"])
            label_map = raw["label_map"]
            if isinstance(label_map, str):
                label_map = LABEL_MAPS[label_map.lower()]
            else:
                label_map = LabelMap.from_dict(label_map)
            manifest = cls(raw["name"], channels, files, phases, label_map,
                           float(raw["target_rate"]), float(raw["window_seconds"]))
        except KeyError as exc:
            raise PipelineError(f"manifest is missing field {exc}") from exc
        manifest.validate()
        return manifest

    def validate(self):
        if not self.target_rate > 0:
            raise PipelineError("target_rate must be > 0")
        if not self.window_seconds > 0:
            raise PipelineError("window_seconds must be > 0")
        names = [c.name for c in self.channels]
        if len(set(names)) != len(names):
            raise PipelineError("duplicate channel names")
        for c in self.channels:
            if c.lowpass_cutoff is not None and c.lowpass_cutoff >= self.target_rate / 2:
                raise PipelineError(f"channel {c.name!r}: lowpass_cutoff must be below target Nyquist")
        for f in self.files:
            if f.channel not in names:
                raise PipelineError(f"file entry {f.path} references unknown channel {f.channel!r}")
            if not f.path.is_file():
                raise IngestError(f.path, None, "file does not exist")
        for p in self.phases:
            if p.phase_name not in self.label_map.rules:
                raise PipelineError(f"phase {p.phase_name!r} (subject {p.subject_id}) has no label rule")

    def channel_spec(self, name) -> ChannelSpec:
        return next(c for c in self.channels if c.name == name)


def _phase_from_dict(p, base):
    streams = {}
    for name, s in (p.get("annotations") or {}).items():
        rate = float(s["rate"])
        if "values" in s:
            values = np.asarray(s["values"], dtype=float)
        else:
            values = read_column(base / s["path"], int(s.get("column", 0)), int(s.get("skip", 0)))
        streams[name] = (rate, values)
    return PhaseAnnotation(str(p["subject_id"]), p["phase_name"], float(p["start"]), float(p["end"]), streams)


def read_column(path, column=0, skip=0) -> np.ndarray:
    """Read one numeric CSV column; errors name the offending line."""
    path = Path(path)
    values = []
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IngestError(path, None, f"cannot open ({exc.strerror})") from exc
    with fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if lineno <= skip or not row:
                continue
            if column >= len(row):
                raise IngestError(path, lineno, f"column {column} out of range ({len(row)} columns)")
            cell = row[column].strip()
            try:
                v = float(cell)
            except ValueError:
                raise IngestError(path, lineno, f"non-numeric cell {cell!r}") from None
            if not math.isfinite(v):
                raise IngestError(path, lineno, f"non-finite cell {cell!r}")
            values.append(v)
    if not values:
        raise IngestError(path, None, "no samples")
    return np.asarray(values, dtype=np.float64)


@dataclass
class SubjectRecording:
    subject_id: str
    signals: dict[str, tuple[np.ndarray, float]]
    phases: list[PhaseAnnotation]


def ingest(manifest: DatasetManifest) -> list[SubjectRecording]:
    """Load every (subject, channel) signal at its native rate."""
    by_subject: dict[str, SubjectRecording] = {}
    for f in manifest.files:
        rate = f.native_rate or manifest.channel_spec(f.channel).native_rate
        rec = by_subject.setdefault(f.subject_id, SubjectRecording(f.subject_id, {}, []))
        if f.channel in rec.signals:
            raise PipelineError(f"subject {f.subject_id}: channel {f.channel!r} listed twice")
        rec.signals[f.channel] = (read_column(f.path, f.column, f.skip), rate)
    for p in manifest.phases:
        if p.subject_id not in by_subject:
            raise PipelineError(f"phase {p.phase_name!r} references subject {p.subject_id} with no files")
        by_subject[p.subject_id].phases.append(p)
    for rec in by_subject.values():
        missing = [c.name for c in manifest.channels if c.name not in rec.signals]
        if missing:
            raise PipelineError(f"subject {rec.subject_id}: missing channels {missing}")
    return [by_subject[k] for k in sorted(by_subject)]


# ---------------------------------------------------------------------------
# Signal operations
# ---------------------------------------------------------------------------

def resample(x, from_rate, to_rate) -> np.ndarray:
    """Change the sampling rate of a 1-D signal.

    Downsampling runs a zero-phase 8th-order Butterworth anti-alias filter
    at 0.45 * ``to_rate`` and then reads the filtered signal on the target
    grid (exact decimation for integer ratios, linear interpolation
    otherwise). Upsampling is plain linear interpolation.
    Output length is ``round(len(x) * to_rate / from_rate)``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise PipelineError("cannot resample an empty signal")
    if not (from_rate > 0 and to_rate > 0):
        raise PipelineError("sampling rates must be > 0")
    if from_rate == to_rate:
        return x.copy()
    n_out = int(round(x.size * to_rate / from_rate))
    if n_out < 1:
        raise PipelineError("signal too short for the requested rate")
    if to_rate < from_rate:
        sos = sps.butter(8, 0.45 * to_rate, btype="low", fs=from_rate, output="sos")
        padlen = min(3 * (2 * len(sos) + 1), x.size - 1)
        x = sps.sosfiltfilt(sos, x, padlen=padlen)
    pos = np.arange(n_out) * (from_rate / to_rate)
    ratio = from_rate / to_rate
    if ratio == int(ratio) and (n_out - 1) * int(ratio) < x.size:
        return x[::int(ratio)][:n_out].copy()
    return np.interp(pos, np.arange(x.size), x)


def lowpass(x, rate, cutoff, order=4) -> np.ndarray:
    """Zero-phase Butterworth low-pass (forward-backward, so twice ``order``)."""
    x = np.asarray(x, dtype=np.float64)
    if not 0 < cutoff < rate / 2:
        raise PipelineError(f"cutoff {cutoff} Hz must lie in (0, {rate / 2}) for rate {rate} Hz")
    sos = sps.butter(order, cutoff, btype="low", fs=rate, output="sos")
    padlen = min(3 * (2 * len(sos) + 1), x.size - 1)
    return sps.sosfiltfilt(sos, x, padlen=padlen)


def segment(x, rate, window_seconds) -> np.ndarray:
    """Non-overlapping windows along the last axis; the trailing remainder is dropped.

    ``x`` may be (T,) or (C, T); the result is (n, T_w) or (n, C, T_w).
    """
    x = np.asarray(x)
    length = window_samples(rate, window_seconds)
    total = x.shape[-1]
    n = total // length
    if n == 0:
        raise PipelineError(f"signal of {total} samples is shorter than one {length}-sample window")
    cut = x[..., :n * length]
    if x.ndim == 1:
        return cut.reshape(n, length).copy()
    return cut.reshape(x.shape[0], n, length).transpose(1, 0, 2).copy()


def window_samples(rate, window_seconds) -> int:
    length = rate * window_seconds
    if abs(length - round(length)) > 1e-9 or round(length) < 1:
        raise PipelineError(f"rate*window_seconds = {length} is not a positive integer")
    return int(round(length))


def label_windows(phase_windows: Sequence[tuple[PhaseAnnotation, np.ndarray]], label_map: LabelMap,
                  window_seconds: float):
    """Attach class ids to per-phase windows.

    Returns ``(windows, labels, subjects)``; excluded phases contribute nothing.
    """
    out_w, out_y, out_s = [], [], []
    for phase, windows in phase_windows:
        if phase.phase_name not in label_map.rules:
            raise PipelineError(f"phase {phase.phase_name!r} has no label rule")
        target = label_map.rules[phase.phase_name]
        if target == EXCLUDED or len(windows) == 0:
            continue
        if target == THRESHOLD:
            labels = [threshold_class(window_mean(phase, label_map.valence_stream, k, window_seconds),
                                      window_mean(phase, label_map.arousal_stream, k, window_seconds),
                                      label_map.threshold)
                      for k in range(len(windows))]
        else:
            labels = [target] * len(windows)
        out_w.append(windows)
        out_y.extend(labels)
        out_s.extend([phase.subject_id] * len(windows))
    if not out_w:
        raise PipelineError("no labeled windows produced")
    return np.concatenate(out_w), np.asarray(out_y, dtype=np.int64), np.asarray(out_s, dtype=str)


def window_mean(phase: PhaseAnnotation, stream: str, k: int, window_seconds: float) -> float:
    """Mean of an annotation stream over window ``k`` of a phase."""
    if stream not in phase.annotations:
        raise PipelineError(f"phase {phase.phase_name!r} of {phase.subject_id} lacks annotation {stream!r}")
    rate, values = phase.annotations[stream]
    values = np.asarray(values, dtype=float)
    lo = int(math.ceil(k * window_seconds * rate - 1e-9))
    hi = int(math.ceil((k + 1) * window_seconds * rate - 1e-9))
    chunk = values[lo:hi]
    if chunk.size == 0:
        raise PipelineError(f"annotation {stream!r} does not cover window {k} of phase {phase.phase_name!r}")
    return float(chunk.mean())


def threshold_class(valence: float, arousal: float, threshold: float = 5.0) -> int:
    return 2 * int(valence >= threshold) + int(arousal >= threshold)


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormStats:
    mean: tuple[float, ...]
    std: tuple[float, ...]
    degenerate: tuple[bool, ...]

    def to_dict(self):
        return {"mean": list(self.mean), "std": list(self.std), "degenerate": list(self.degenerate)}


def fit_normalizer(dataset: WindowedDataset, indices=None) -> NormStats:
    """Per-channel mean/std over the reference windows (all of them by default)."""
    data = dataset.data if indices is None else dataset.data[np.asarray(indices)]
    flat = data.astype(np.float64).transpose(1, 0, 2).reshape(data.shape[1], -1)
    mean = flat.mean(axis=1)
    std = flat.std(axis=1)
    degenerate = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
    return NormStats(tuple(map(float, mean)), tuple(map(float, std)), tuple(map(bool, degenerate)))


def normalize(dataset: WindowedDataset, scheme: str = "z-score", stats: NormStats | None = None) -> WindowedDataset:
    """Apply ``"none"`` or per-channel ``"z-score"`` scaling.

    Without ``stats`` the statistics are fitted on ``dataset`` itself; pass
    stats fitted on the real training partition to scale anything else
    consistently. Constant channels are only centered and flagged.
    """
    if scheme == "none":
        return dataset
    if scheme != "z-score":
        raise PipelineError(f"unknown normalization scheme {scheme!r}")
    if dataset.normalization.get("state") != "raw":
        raise PipelineError("dataset is already normalized")
    if stats is None:
        stats = fit_normalizer(dataset)
    if len(stats.mean) != dataset.data.shape[1]:
        raise PipelineError("normalization stats do not match channel count")
    mean = np.asarray(stats.mean)[None, :, None]
    scale = np.where(stats.degenerate, 1.0, stats.std)[None, :, None]
    data = ((dataset.data.astype(np.float64) - mean) / scale).astype(dataset.data.dtype)
    return dataset.with_data(data, normalization={"state": "z-scored", **stats.to_dict()})


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------

def build_dataset(manifest: DatasetManifest, scheme: str = "z-score", dtype=np.float32) -> WindowedDataset:
    """Run the whole preprocessing chain for a manifest."""
    rate = manifest.target_rate
    length = window_samples(rate, manifest.window_seconds)
    phase_windows = []
    for rec in ingest(manifest):
        prepared = {}
        for spec in manifest.channels:
            x, native = rec.signals[spec.name]
            x = resample(x, native, rate)
            if spec.lowpass_cutoff is not None:
                x = lowpass(x, rate, spec.lowpass_cutoff)
            prepared[spec.name] = x
        for phase in sorted(rec.phases, key=lambda p: p.start):
            lo = int(round(phase.start * rate))
            hi = int(round(phase.end * rate))
            parts = [prepared[c.name][lo:hi] for c in manifest.channels]
            n = min(len(p) for p in parts)
            if n < length:
                raise PipelineError(f"subject {rec.subject_id}, phase {phase.phase_name!r}: "
                                    f"{n} samples at {rate} Hz is shorter than one window")
            stacked = np.stack([p[:n] for p in parts])
            phase_windows.append((phase, segment(stacked, rate, manifest.window_seconds)))
    windows, labels, subjects = label_windows(phase_windows, manifest.label_map, manifest.window_seconds)
    ds = WindowedDataset(windows.astype(dtype), labels, subjects, manifest.channels, rate,
                         manifest.window_seconds, manifest.label_map.n_classes, name=manifest.name)
    return normalize(ds, scheme)


def summarize(dataset: WindowedDataset) -> dict:
    """Dataset overview: classes, subjects, samples and majority/minority ratios."""
    counts = dataset.class_counts()
    present = np.sort(counts[counts > 0])[::-1]
    ratios = sorted(present[0] / c for c in present[1:]) or [1.0]
    return {
        "dataset": dataset.name,
        "classes": int(dataset.n_classes),
        "subjects": int(len(np.unique(dataset.subjects))),
        "samples": int(dataset.n_windows),
        "class_counts": [int(c) for c in counts],
        "class_ratios": "/".join(f"{r:.1f}" for r in ratios),
    }


def format_summary(summary: dict) -> str:
    header = "| Dataset | # subjects | # classes | # samples | Class ratio(s) |"
    rule = "|---|---|---|---|---|"
    row = (f"| {summary['dataset']} | {summary['subjects']} | {summary['classes']} | "
           f"{summary['samples']} | {summary['class_ratios']} |")
    return "\n".join([header, rule, row])
