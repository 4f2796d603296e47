"""Serialization of evaluation reports (JSON round-trippable, CSV export).

Undefined metric values serialize as JSON null and empty CSV cells.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path

from .panoptic import EvalOptions, EvaluationReport, PairMetrics, PanopticReport

REPORT_SCHEMA_VERSION = 1

CSV_COLUMNS = [
    "subject",
    "class",
    "tp",
    "fp",
    "fn",
    "rq",
    "sq",
    "pq",
    "global_dice",
    "global_iou",
    "cl_dice",
    "mean_assd_mm",
]


def _panoptic_to_dict(r: PanopticReport) -> dict:
    return {
        "tp": r.tp,
        "fp": r.fp,
        "fn": r.fn,
        "rq": r.rq,
        "sq": r.sq,
        "pq": r.pq,
        "global_dice": r.global_dice,
        "global_iou": r.global_iou,
        "cl_dice": r.cl_dice,
        "per_pair": [asdict(p) for p in r.per_pair],
    }


def report_to_dict(report: EvaluationReport) -> dict:
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "subject": report.subject,
        "options": {
            "threshold": report.options.threshold,
            "connectivity": report.options.connectivity,
            "surface": report.options.surface,
            "centerline": report.options.centerline,
            "matching": report.options.matching,
        },
        "classes": {str(k): _panoptic_to_dict(v) for k, v in report.classes.items()},
        "macro": report.macro,
    }


def report_from_dict(doc: dict) -> EvaluationReport:
    if doc.get("schema_version") != REPORT_SCHEMA_VERSION:
        raise ValueError(f"unsupported report schema version {doc.get('schema_version')}")
    opts = EvalOptions(**doc["options"])
    classes = {}
    for key, rd in doc["classes"].items():
        pairs = tuple(PairMetrics(**p) for p in rd["per_pair"])
        classes[int(key)] = PanopticReport(
            rd["tp"], rd["fp"], rd["fn"], rd["rq"], rd["sq"], rd["pq"],
            pairs, rd["global_dice"], rd["global_iou"], rd["cl_dice"],
        )
    return EvaluationReport(classes, dict(doc["macro"]), opts, doc.get("subject"))


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_report(report: EvaluationReport, path, format: str = "json") -> None:
    """Write a report as schema-versioned JSON or one-row-per-class CSV."""
    path = Path(path)
    if format == "json":
        path.write_text(json.dumps(report_to_dict(report), indent=2) + "\n")
    elif format == "csv":
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(CSV_COLUMNS)
            for cls in sorted(report.classes):
                r = report.classes[cls]
                assds = [p.assd_mm for p in r.per_pair if p.assd_mm is not None]
                mean_assd = sum(assds) / len(assds) if assds else None
                w.writerow(
                    [
                        _csv_cell(report.subject),
                        cls,
                        r.tp,
                        r.fp,
                        r.fn,
                        _csv_cell(r.rq),
                        _csv_cell(r.sq),
                        _csv_cell(r.pq),
                        _csv_cell(r.global_dice),
                        _csv_cell(r.global_iou),
                        _csv_cell(r.cl_dice),
                        _csv_cell(mean_assd),
                    ]
                )
    else:
        raise ValueError(f"format must be 'json' or 'csv', got {format!r}")


def read_report(path) -> EvaluationReport:
    """Load a JSON report written by :func:`write_report`."""
    return report_from_dict(json.loads(Path(path).read_text()))
