"""On-disk canonical container for :class:`WindowedDataset`.

A container is a directory with three files::

    manifest.json   metadata, shape, normalization state, SHA-256 of windows.f32
    windows.f32     little-endian float32, row-major [N, C, L]
    labels.csv      index,class_id,subject_id
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path

import numpy as np

from .pipeline import ChannelSpec, PipelineError, WindowedDataset

FORMAT = "synthts-canonical"
FORMAT_VERSION = "1"
_DTYPE = np.dtype("<f4")


class ContainerError(PipelineError):
    pass


def _tensor_bytes(dataset: WindowedDataset) -> bytes:
    return np.ascontiguousarray(dataset.data, dtype=_DTYPE).tobytes()


def _labels_text(dataset: WindowedDataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "class_id", "subject_id"])
    for i, (y, s) in enumerate(zip(dataset.labels, dataset.subjects)):
        w.writerow([i, int(y), s])
    return buf.getvalue()


def fingerprint(dataset: WindowedDataset) -> str:
    """Short content hash of tensor, labels and subjects (metadata excluded)."""
    h = hashlib.sha256()
    h.update(_tensor_bytes(dataset))
    h.update(_labels_text(dataset).encode("utf-8"))
    return h.hexdigest()[:16]


def write_canonical(dataset: WindowedDataset, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tensor = _tensor_bytes(dataset)
    n, c, length = dataset.data.shape
    manifest = {
        "format": FORMAT,
        "schema_version": FORMAT_VERSION,
        "name": dataset.name,
        "shape": [n, c, length],
        "dtype": "float32-le",
        "rate": dataset.rate,
        "window_seconds": dataset.window_seconds,
        "n_classes": dataset.n_classes,
        "channels": [ch.to_dict() for ch in dataset.channels],
        "normalization": dict(dataset.normalization),
        "provenance": dict(dataset.provenance),
        "sha256": hashlib.sha256(tensor).hexdigest(),
        "fingerprint": fingerprint(dataset),
    }
    (directory / "windows.f32").write_bytes(tensor)
    (directory / "labels.csv").write_text(_labels_text(dataset), encoding="utf-8", newline="")
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                             encoding="utf-8")
    return directory


def read_manifest(directory) -> dict:
    path = Path(directory) / "manifest.json"
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ContainerError(f"{path}: not a canonical dataset (manifest.json missing)") from None
    except json.JSONDecodeError as exc:
        raise ContainerError(f"{path}: malformed manifest ({exc})") from exc
    if manifest.get("format") != FORMAT:
        raise ContainerError(f"{path}: unexpected format {manifest.get('format')!r}")
    return manifest


def read_canonical(directory) -> WindowedDataset:
    directory = Path(directory)
    manifest = read_manifest(directory)
    n, c, length = manifest["shape"]
    if len(manifest["channels"]) != c:
        raise ContainerError(f"{directory}: manifest lists {len(manifest['channels'])} channels "
                             f"but shape declares {c}")
    try:
        raw = (directory / "windows.f32").read_bytes()
    except FileNotFoundError:
        raise ContainerError(f"{directory}: windows.f32 missing") from None
    expected = n * c * length * _DTYPE.itemsize
    if len(raw) != expected:
        raise ContainerError(f"{directory}: shape mismatch, windows.f32 holds {len(raw)} bytes, "
                             f"manifest shape {[n, c, length]} needs {expected}")
    if hashlib.sha256(raw).hexdigest() != manifest["sha256"]:
        raise ContainerError(f"{directory}: checksum failure on windows.f32")
    data = np.frombuffer(raw, dtype=_DTYPE).reshape(n, c, length).astype(np.float32)

    labels, subjects = [], []
    with open(directory / "labels.csv", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            labels.append(int(row["class_id"]))
            subjects.append(row["subject_id"])
    if len(labels) != n:
        raise ContainerError(f"{directory}: labels.csv has {len(labels)} rows for {n} windows")

    return WindowedDataset(
        data, np.asarray(labels), np.asarray(subjects, dtype=str),
        tuple(ChannelSpec.from_dict(ch) for ch in manifest["channels"]),
        manifest["rate"], manifest["window_seconds"], manifest["n_classes"],
        name=manifest["name"], normalization=manifest["normalization"],
        provenance=manifest.get("provenance", {}),
    )
