import json

import numpy as np
import pytest

from synthts_bench import _accel
from synthts_bench.refgen import ToyTaskSpec, make_toy_task


@pytest.fixture(autouse=True)
def _isolated_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("SYNTHTS_BENCH_CACHE", str(tmp_path / "cache"))


@pytest.fixture(params=["numba", "numpy"])
def backend(request, monkeypatch):
    """Run a test once per kernel backend."""
    if request.param == "numba" and not _accel.NUMBA_AVAILABLE:
        pytest.skip("numba not installed")
    monkeypatch.setattr(_accel, "USE_NUMBA", request.param == "numba")
    return request.param


@pytest.fixture
def toy():
    return make_toy_task(ToyTaskSpec(n_per_class=30, length=64, rate=16.0, seed=11))


def _write_column(path, values, header=None):
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write(header + "\n")
        fh.write("\n".join(f"{v:.6f}" for v in values) + "\n")


WESAD_PHASES = (("baseline", 40), ("amusement", 20), ("TSST", 20), ("recovery", 10), ("meditation", 10))


def write_wesad_fixture(root, n_subjects=15, phases=WESAD_PHASES, ecg_rate=700.0, eda_rate=4.0, seed=0):
    """Synthetic recordings laid out like a WESAD export plus a manifest.

    ECG is a 1.2 Hz pulse-like tone at ``ecg_rate``; EDA is a slow drift at
    ``eda_rate``. Returns the manifest path.
    """
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    total = sum(d for _, d in phases)
    files, ann = [], []
    for s in range(n_subjects):
        sid = f"S{s + 2}"
        t = np.arange(int(total * ecg_rate)) / ecg_rate
        ecg = np.sin(2 * np.pi * 1.2 * t) ** 15 + 0.05 * rng.standard_normal(t.size)
        te = np.arange(int(total * eda_rate)) / eda_rate
        eda = 2.0 + 0.3 * np.sin(2 * np.pi * 0.01 * te) + 0.01 * rng.standard_normal(te.size)
        _write_column(root / f"{sid}_ecg.csv", ecg, header="ecg")
        _write_column(root / f"{sid}_eda.csv", eda)
        files += [{"subject_id": sid, "channel": "ECG", "path": f"{sid}_ecg.csv", "skip": 1},
                  {"subject_id": sid, "channel": "EDA", "path": f"{sid}_eda.csv"}]
        start = 0.0
        for name, dur in phases:
            ann.append({"subject_id": sid, "phase_name": name, "start": start, "end": start + dur})
            start += dur
    manifest = {
        "schema_version": "1", "name": "wesad-fixture", "target_rate": 100.0, "window_seconds": 10.0,
        "label_map": "wesad",
        "channels": [{"name": "ECG", "native_rate": ecg_rate, "kind": "quasi-periodic"},
                     {"name": "EDA", "native_rate": eda_rate, "kind": "slow-varying", "lowpass_cutoff": 5.0}],
        "files": files, "phases": ann,
    }
    path = root / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


@pytest.fixture
def wesad_manifest(tmp_path):
    return write_wesad_fixture(tmp_path / "wesad", n_subjects=2)
