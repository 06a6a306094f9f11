"""Experiment reports: pass/fail criteria with margins, and their serializations."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["Criterion", "ExperimentReport", "emit_report", "to_jsonable", "canonical_json"]

CSV_COLUMNS = ("eps", "index", "predicted", "measured", "deviation")
RELATIONS = ("<=", ">=", "==")


def to_jsonable(obj):
    """Plain-Python copy of obj with arrays as lists and non-finite floats as None."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


@dataclass
class Criterion:
    """One checked claim.  ``margin`` is positive when the check passes."""

    name: str
    value: float
    threshold: float
    relation: str = "<="
    note: str = ""
    passed: bool | None = None

    def __post_init__(self):
        if self.relation not in RELATIONS:
            raise ValueError(f"unknown relation {self.relation!r}")
        self.value = float(self.value)
        self.threshold = float(self.threshold)
        if self.passed is None:
            if self.relation == "<=":
                self.passed = self.value <= self.threshold
            elif self.relation == ">=":
                self.passed = self.value >= self.threshold
            else:
                self.passed = self.value == self.threshold
        self.passed = bool(self.passed)

    @property
    def margin(self) -> float:
        if self.relation == "<=":
            return self.threshold - self.value
        if self.relation == ">=":
            return self.value - self.threshold
        return 0.0 - abs(self.value - self.threshold)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "value": self.value,
            "relation": self.relation,
            "threshold": self.threshold,
            "margin": self.margin,
            "note": self.note,
        }

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"{status} {self.name}: {self.value:.6g} {self.relation} {self.threshold:.6g} (margin {self.margin:.3g})"
        return text + (f"  [{self.note}]" if self.note else "")


@dataclass
class ExperimentReport:
    kind: str
    config: dict = field(default_factory=dict)
    spectrum: list = field(default_factory=list)
    clusters: list = field(default_factory=list)
    gammas: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    results: dict = field(default_factory=dict)
    criteria: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria)

    def add(self, criterion: Criterion) -> Criterion:
        self.criteria.append(criterion)
        return criterion

    def criterion(self, name: str) -> Criterion:
        for c in self.criteria:
            if c.name == name:
                return c
        raise KeyError(name)

    def add_row(self, eps, index, predicted, measured):
        self.rows.append({
            "eps": float(eps),
            "index": int(index),
            "predicted": float(predicted),
            "measured": float(measured),
            "deviation": float(measured - predicted),
        })

    def to_dict(self, include_timings: bool = True) -> dict:
        d = {
            "kind": self.kind,
            "config": self.config,
            "spectrum": self.spectrum,
            "clusters": self.clusters,
            "gammas": self.gammas,
            "rows": self.rows,
            "results": self.results,
            "criteria": [c.to_dict() for c in self.criteria],
            "passed": self.passed,
            "notes": self.notes,
        }
        if include_timings:
            d["timings"] = self.timings
        return to_jsonable(d)

    def summary(self) -> str:
        head = f"{self.kind}: {'PASS' if self.passed else 'FAIL'} ({sum(c.passed for c in self.criteria)}/{len(self.criteria)} criteria)"
        return "\n".join([head] + ["  " + c.line() for c in self.criteria] + ["  note: " + n for n in self.notes])


def canonical_json(report: ExperimentReport) -> str:
    """JSON text without timing fields; identical inputs give identical bytes."""
    return json.dumps(report.to_dict(include_timings=False), sort_keys=True, indent=2) + "\n"


def emit_report(report: ExperimentReport, out_dir, formats=("json",), stem: str = "report") -> list[Path]:
    """Write the report as JSON, CSV and/or text into out_dir; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for fmt in formats:
        if fmt == "json":
            p = out / f"{stem}.json"
            p.write_text(json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n")
        elif fmt == "csv":
            p = out / f"{stem}.csv"
            with open(p, "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
                w.writeheader()
                for row in report.rows:
                    w.writerow({k: repr(row[k]) if isinstance(row[k], float) else row[k] for k in CSV_COLUMNS})
        elif fmt == "text":
            p = out / f"{stem}.txt"
            p.write_text(report.summary() + "\n")
        else:
            raise ValueError(f"unknown report format {fmt!r}")
        paths.append(p)
    return paths
