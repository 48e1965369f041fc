"""Report assembly: JSON-safe values, the check ledger and plot-ready CSV files."""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Table", "Report", "jsonable", "emit_plot_data", "write_report"]


def jsonable(x):
    """Plain JSON types; non-finite floats become the strings "inf", "-inf", "nan"."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if x is None or isinstance(x, str):
        return x
    if hasattr(x, "to_dict"):
        return jsonable(x.to_dict())
    return str(x)


@dataclass
class Table:
    """A diagnostic table destined for one CSV file."""

    name: str
    columns: list
    rows: list
    description: str

    def __bool__(self):
        return bool(self.rows)


@dataclass
class Report:
    config: dict
    seed: int
    results: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    tables: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    files: list = field(default_factory=list)
    runtime: dict = field(default_factory=dict)

    def check(self, name, passed, value, tolerance, **detail):
        """Record one pass/fail entry together with the tolerance it was held to."""
        self.checks.append({"name": name, "passed": bool(passed), "value": value,
                            "tolerance": tolerance, **detail})
        return bool(passed)

    @property
    def status(self):
        if self.errors:
            return "config_error"
        return "pass" if all(c["passed"] for c in self.checks) else "fail"

    @property
    def exit_code(self):
        return {"pass": 0, "fail": 1, "config_error": 2}[self.status]

    def to_dict(self):
        return jsonable({
            "schema_version": 1,
            "status": self.status,
            "seed": self.seed,
            "config": self.config,
            "results": self.results,
            "checks": self.checks,
            "failed_checks": [c["name"] for c in self.checks if not c["passed"]],
            "errors": self.errors,
            "notes": self.notes,
            "files": self.files,
            "runtime": self.runtime,
        })


def _fmt(v):
    v = jsonable(v)
    return repr(v) if isinstance(v, float) else str(v)


def emit_plot_data(report: Report, out_dir) -> list:
    """Write one CSV per non-empty table; empty tables are noted in the report."""
    written = []
    for tab in report.tables:
        if not tab:
            report.notes.append(f"table {tab.name!r} is empty; no CSV written")
            continue
        path = os.path.join(out_dir, f"{tab.name}.csv")
        with open(path, "w", newline="") as fh:
            fh.write(f"# {tab.description}\n")
            fh.write(f"# columns: {', '.join(tab.columns)}\n")
            w = csv.writer(fh)
            w.writerow(tab.columns)
            for row in tab.rows:
                w.writerow([_fmt(row.get(c, "")) for c in tab.columns])
        written.append(path)
    return written


def write_report(report: Report, out_dir) -> str:
    path = os.path.join(out_dir, "report.json")
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, allow_nan=False)
        fh.write("\n")
    return path
