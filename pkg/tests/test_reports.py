import csv
import io
import json

import pytest

from synthts_bench.protocols import UtilityResult
from synthts_bench.reports import (ABSENT, QualityReport, ReportError, UtilityReport, assemble_reports, from_dict,
                                   read_report, to_csv, to_json, to_markdown, write_report)
from synthts_bench.sample_metrics import MetricResult


def _quality(cid, value, fp="realfp", modality="ECG", metric="DTWD"):
    res = {modality: [MetricResult(metric, {0: value, 1: None}, value, 10, {"plan": {"mode": "all"}})]}
    return QualityReport.from_results(res, cid, {"metrics": [metric]}, fp, f"synth-{cid}")


def _utility(cid="u1", fp="realfp"):
    r = UtilityResult(["FCN", "MLP"], [1, 2], {"FCN": {1: 0.9, 2: 0.8}, "MLP": {1: 0.7, 2: 0.6}},
                      {"TSTR": {"FCN": {1: 0.85, 2: 0.8}, "MLP": {1: 0.7, 2: 0.65}}},
                      {"Balance": [{"seed": 1, "policy": "Balance", "train_counts": [9, 3], "val_counts": [1, 1],
                                    "train_counts_after": [9, 9], "val_counts_after": [1, 1],
                                    "synthetic_added": [6, 0], "synthetic_to_real": 0.43}]})
    return UtilityReport.from_result(r, cid, {"classifiers": ["FCN", "MLP"]}, fp, "sfp")


def test_lower_value_bolded():
    q, _ = assemble_reports([_quality("A", 2.5), _quality("B", 1.25)])
    md = to_markdown(q)
    assert "| B | **1.2500** |" in md
    assert "| A | 2.5000 |" in md


def test_missing_modality_is_absent_not_zero():
    q, _ = assemble_reports([_quality("A", 2.5), _quality("B", 1.0, modality="EDA")])
    md = to_markdown(q)
    assert f"| B | {ABSENT} |" in md and f"| A | {ABSENT} |" in md
    rows = list(csv.reader(io.StringIO(to_csv(q))))
    assert ["A", "ECG", "DTWD", "1", ABSENT] in rows


def test_json_round_trip(tmp_path):
    for report in (_quality("A", 0.5), _utility()):
        path = write_report(report, tmp_path, formats=("json",), stem=report.kind)[0]
        back = read_report(path)
        assert to_json(back) == to_json(report)
        assert back.rows == json.loads(to_json(report))["rows"]


def test_mixed_fingerprints_rejected():
    with pytest.raises(ReportError, match="mixed dataset fingerprints"):
        assemble_reports([_quality("A", 1.0), _quality("B", 2.0, fp="other")])
    with pytest.raises(ReportError, match="mixed dataset fingerprints"):
        assemble_reports([_quality("A", 1.0), _utility(fp="other")])


def test_config_id_collision():
    with pytest.raises(ReportError, match="appears twice"):
        assemble_reports([_quality("A", 1.0), QualityReport.from_results({}, "A", {"metrics": ["MMD"]}, "realfp", "x")])


def test_utility_delta_and_summary():
    u = _utility()
    for row in u.rows:
        if row["protocol"] == "TSTR":
            base = next(r for r in u.rows if r["protocol"] == "TRTR" and r["classifier"] == row["classifier"]
                        and r["seed"] == row["seed"])
            assert row["delta"] == row["auroc"] - base["auroc"]
    s = u.summary()["u1"]
    assert s["averaged_delta"]["TSTR"] == pytest.approx(((-0.05 + 0.0) / 2 + (0.0 + 0.05) / 2) / 2)
    md = to_markdown(u)
    assert "**85.0**" in md and "TSTR Δ" in md and "[9, 9]" in md


def test_schema_and_format_errors(tmp_path):
    with pytest.raises(ReportError):
        from_dict({"schema_version": "9", "kind": "quality"})
    with pytest.raises(ReportError):
        write_report(_quality("A", 1.0), tmp_path, formats=("xlsx",))
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ReportError):
        read_report(tmp_path / "bad.json")


def test_reports_carry_config_annotations():
    d = json.loads(to_json(_quality("A", 1.0)))
    entry = d["configs"]["A"]
    assert set(entry) == {"config", "fingerprints", "config_hash"}
    assert d["rows"][0]["details"]["plan"] == {"mode": "all"}
