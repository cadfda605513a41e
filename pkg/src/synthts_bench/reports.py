"""Quality and utility reports: JSON for machines, CSV and markdown for people.

Reports hold no timestamps, so identical inputs give identical bytes. Each
report lists the configurations it covers, keyed by config id, together
with a config hash and the fingerprints of the datasets involved.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .protocols import QUALITY_METRICS, UtilityResult, config_hash
from .sample_metrics import MetricResult

SCHEMA_VERSION = "1"
ABSENT = "absent"
FORMATS = ("json", "csv", "md")
LOWER_IS_BETTER = set(QUALITY_METRICS)
METRIC_GROUPS = (("Sample (features)", ("CD", "CrD", "L2")), ("Sample (raw)", ("DTWD",)),
                 ("Distribution", ("MMD", "En", "DS")))
UTILITY_PROTOCOLS = ("TSTR", "Balance", "Double", "BalanceDouble")


class ReportError(ValueError):
    pass


def config_entry(config: dict, real_fingerprint: str, synth_fingerprint: str | None) -> dict:
    fps = {"real": real_fingerprint, "synthetic": synth_fingerprint}
    return {"config": config, "fingerprints": fps, "config_hash": config_hash({"config": config, **fps})}


def _real_fingerprint(configs: dict) -> str:
    seen = {c["fingerprints"]["real"] for c in configs.values()}
    if len(seen) != 1:
        raise ReportError(f"mixed dataset fingerprints: real data differs across configurations ({sorted(seen)})")
    return seen.pop()


@dataclass
class QualityReport:
    """Rows of ``(config_id, modality, metric)`` with per-class values and class average."""

    configs: dict[str, dict]
    rows: list[dict] = field(default_factory=list)
    kind: str = "quality"

    def __post_init__(self):
        if self.configs:
            _real_fingerprint(self.configs)

    @classmethod
    def from_results(cls, results: dict[str, list[MetricResult]], config_id: str, config: dict,
                     real_fingerprint: str, synth_fingerprint: str) -> "QualityReport":
        rows = []
        for modality, metrics in results.items():
            for r in metrics:
                rows.append({"config_id": config_id, "modality": modality, **r.to_dict()})
        return cls({config_id: config_entry(config, real_fingerprint, synth_fingerprint)}, rows)

    def to_dict(self):
        return {"schema_version": SCHEMA_VERSION, "kind": self.kind, "configs": self.configs, "rows": self.rows}

    def value(self, config_id, modality, metric):
        for r in self.rows:
            if (r["config_id"], r["modality"], r["metric"]) == (config_id, modality, metric):
                return r["class_average"]
        return None


@dataclass
class UtilityReport:
    """One row per ``(config_id, protocol, classifier, seed)`` with AUROC and delta vs TRTR."""

    configs: dict[str, dict]
    rows: list[dict] = field(default_factory=list)
    plans: list[dict] = field(default_factory=list)
    kind: str = "utility"

    def __post_init__(self):
        if self.configs:
            _real_fingerprint(self.configs)

    @classmethod
    def from_result(cls, result: UtilityResult, config_id: str, config: dict,
                    real_fingerprint: str, synth_fingerprint: str | None) -> "UtilityReport":
        rows = []
        for arch in result.classifiers:
            for seed in result.seeds:
                rows.append({"config_id": config_id, "protocol": "TRTR", "classifier": arch, "seed": seed,
                             "auroc": result.trtr[arch][seed], "delta": None})
        for protocol in UTILITY_PROTOCOLS:
            if protocol not in result.protocols:
                continue
            for arch in result.classifiers:
                for seed in result.seeds:
                    rows.append({"config_id": config_id, "protocol": protocol, "classifier": arch, "seed": seed,
                                 "auroc": result.protocols[protocol][arch][seed],
                                 "delta": result.delta(protocol, arch, seed)})
        plans = [{"config_id": config_id, **p} for policy in sorted(result.plans) for p in result.plans[policy]]
        return cls({config_id: config_entry(config, real_fingerprint, synth_fingerprint)}, rows, plans)

    def summary(self) -> dict:
        """Seed means per config, classifier and protocol, plus cross-classifier averaged deltas."""
        out: dict = {}
        for cid in self.configs:
            mine = [r for r in self.rows if r["config_id"] == cid]
            archs = list(dict.fromkeys(r["classifier"] for r in mine))
            protos = list(dict.fromkeys(r["protocol"] for r in mine))
            per = {}
            for a in archs:
                per[a] = {}
                for p in protos:
                    sel = [r for r in mine if r["classifier"] == a and r["protocol"] == p]
                    per[a][p] = float(np.mean([r["auroc"] for r in sel]))
                    if p != "TRTR":
                        per[a][p + "_delta"] = float(np.mean([r["delta"] for r in sel]))
            avg = {p: float(np.mean([per[a][p + "_delta"] for a in archs])) for p in protos if p != "TRTR"}
            out[cid] = {"classifiers": per, "averaged_delta": avg}
        return out

    def to_dict(self):
        return {"schema_version": SCHEMA_VERSION, "kind": self.kind, "configs": self.configs,
                "rows": self.rows, "plans": self.plans, "summary": self.summary()}


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------

def _nan_to_none(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_nan_to_none(v) for v in obj]
    if isinstance(obj, np.generic):
        return _nan_to_none(obj.item())
    return obj


def to_json(report) -> str:
    return json.dumps(_nan_to_none(report.to_dict()), indent=2, sort_keys=True) + "\n"


def from_dict(d: dict):
    if str(d.get("schema_version")) != SCHEMA_VERSION:
        raise ReportError(f"unsupported report schema_version {d.get('schema_version')!r}")
    if d.get("kind") == "quality":
        return QualityReport(d["configs"], d["rows"])
    if d.get("kind") == "utility":
        return UtilityReport(d["configs"], d["rows"], d.get("plans", []))
    raise ReportError(f"unknown report kind {d.get('kind')!r}")


def read_report(path):
    path = Path(path)
    try:
        return from_dict(json.loads(path.read_text(encoding="utf-8")))
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise ReportError(f"{path}: cannot read report ({exc})") from exc


def assemble_reports(reports) -> tuple[QualityReport | None, UtilityReport | None]:
    """Merge single-config reports into one quality and one utility report.

    Raises :class:`ReportError` if config ids collide or the real datasets
    differ between reports.
    """
    reports = list(reports)
    if not reports:
        raise ReportError("nothing to assemble")
    merged = {}
    for kind, cls in (("quality", QualityReport), ("utility", UtilityReport)):
        mine = [r for r in reports if r.kind == kind]
        if not mine:
            merged[kind] = None
            continue
        configs, rows, plans = {}, [], []
        for r in mine:
            for cid, entry in r.configs.items():
                if cid in configs and configs[cid] != entry:
                    raise ReportError(f"config id {cid!r} appears twice with different settings")
                configs[cid] = entry
            rows += r.rows
            plans += getattr(r, "plans", [])
        merged[kind] = cls(configs, rows) if kind == "quality" else cls(configs, rows, plans)
    fps = {e["fingerprints"]["real"] for k in merged.values() if k for e in k.configs.values()}
    if len(fps) > 1:
        raise ReportError(f"mixed dataset fingerprints across reports ({sorted(fps)})")
    return merged["quality"], merged["utility"]


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _fmt(v, digits=6):
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return ABSENT
    return f"{v:.{digits}g}" if abs(v) >= 1e6 else f"{v:.{digits}f}"


def to_csv(report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if report.kind == "quality":
        w.writerow(["config_id", "modality", "metric", "class_id", "value"])
        for r in report.rows:
            for c, v in r["per_class"].items():
                w.writerow([r["config_id"], r["modality"], r["metric"], c, _fmt(v)])
            w.writerow([r["config_id"], r["modality"], r["metric"], "average", _fmt(r["class_average"])])
    else:
        w.writerow(["config_id", "protocol", "classifier", "seed", "auroc", "delta"])
        for r in report.rows:
            w.writerow([r["config_id"], r["protocol"], r["classifier"], r["seed"], _fmt(r["auroc"]),
                        "" if r["delta"] is None else _fmt(r["delta"])])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Markdown
# ---------------------------------------------------------------------------

def _bold_best(values, higher_is_better):
    finite = [v for v in values if v is not None and math.isfinite(v)]
    if len(finite) < 2:
        return set()
    best = max(finite) if higher_is_better else min(finite)
    return {i for i, v in enumerate(values) if v is not None and v == best}


def _table(header, rows):
    out = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    out += ["| " + " | ".join(r) + " |" for r in rows]
    return out


def _quality_md(report: QualityReport) -> str:
    present = {r["metric"] for r in report.rows}
    metrics = [m for _, group in METRIC_GROUPS for m in group if m in present]
    groups = "; ".join(f"{name}: {', '.join(m for m in g if m in present)}"
                       for name, g in METRIC_GROUPS if any(m in present for m in g))
    lines = ["# Quality report", "", f"Lower is better in every column. Groups: {groups}.", ""]
    modalities = list(dict.fromkeys(r["modality"] for r in report.rows))
    cids = list(report.configs)
    for mod in modalities:
        lines += [f"## {mod}", ""]
        grid = [[report.value(cid, mod, m) for m in metrics] for cid in cids]
        bold = [_bold_best([row[j] for row in grid], False) for j in range(len(metrics))]
        body = []
        for i, cid in enumerate(cids):
            cells = [cid]
            for j, v in enumerate(grid[i]):
                s = _fmt(v, 4)
                cells.append(f"**{s}**" if i in bold[j] else s)
            body.append(cells)
        lines += _table(["Config ID"] + metrics, body) + [""]
    lines += _config_lines(report)
    return "\n".join(lines).rstrip() + "\n"


def _points(v, signed=False):
    if v is None or not math.isfinite(v):
        return ABSENT
    return f"{100 * v:+.1f}" if signed else f"{100 * v:.1f}"


def _utility_md(report: UtilityReport) -> str:
    summary = report.summary()
    protos = [p for p in UTILITY_PROTOCOLS if any(r["protocol"] == p for r in report.rows)]
    header = ["Config ID", "Classifier", "TRTR"]
    for p in protos:
        header += [p, f"{p} Δ"]
    keys = ["TRTR"] + [k for p in protos for k in (p, p + "_delta")]
    entries = []
    for cid, s in summary.items():
        for arch, vals in s["classifiers"].items():
            entries.append(([cid, arch], [vals.get(k) for k in keys]))
    bold = [_bold_best([e[1][j] for e in entries], True) for j in range(len(keys))]
    body = []
    for i, (label, vals) in enumerate(entries):
        cells = list(label)
        for j, (k, v) in enumerate(zip(keys, vals)):
            s = _points(v, signed=k.endswith("_delta"))
            cells.append(f"**{s}**" if i in bold[j] else s)
        body.append(cells)
    lines = ["# Utility report", "",
             "AUROC in points (x100), mean over seeds; Δ is the change against TRTR for the same "
             "classifier and seed. Higher is better.", ""]
    lines += _table(header, body) + [""]
    avg_rows = [[cid] + [_points(s["averaged_delta"].get(p), True) for p in protos] for cid, s in summary.items()]
    if protos:
        lines += ["## Averaged Δ across classifiers", ""]
        lines += _table(["Config ID"] + [f"{p} Δ" for p in protos], avg_rows) + [""]
    if report.plans:
        lines += ["## Hybrid class counts", ""]
        rows = [[p["config_id"], p["policy"], str(p["seed"]), str(p["train_counts_after"]), str(p["val_counts_after"]),
                 f"{p['synthetic_to_real']:.2f}"] for p in report.plans]
        lines += _table(["Config ID", "Policy", "Seed", "Train counts", "Val counts", "Synthetic/real"], rows) + [""]
    lines += _config_lines(report)
    return "\n".join(lines).rstrip() + "\n"


def _config_lines(report):
    lines = ["## Configurations", ""]
    for cid, entry in report.configs.items():
        fp = entry["fingerprints"]
        lines.append(f"- `{cid}`: hash `{entry['config_hash']}`, real `{fp['real']}`, "
                     f"synthetic `{fp['synthetic']}`")
    return lines + [""]


def to_markdown(report) -> str:
    return _quality_md(report) if report.kind == "quality" else _utility_md(report)


RENDERERS = {"json": to_json, "csv": to_csv, "md": to_markdown}


def write_report(report, directory, formats=FORMATS, stem: str | None = None) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stem = stem or report.kind
    paths = []
    for fmt in formats:
        if fmt not in RENDERERS:
            raise ReportError(f"unknown format {fmt!r}; choose from {FORMATS}")
        path = directory / f"{stem}.{fmt}"
        path.write_text(RENDERERS[fmt](report), encoding="utf-8", newline="")
        paths.append(path)
    return paths
