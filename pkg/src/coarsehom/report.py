"""Versioned JSON reports and CSV output."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

SCHEMA = "coarsehom.report/1"


class SchemaError(ValueError):
    pass


def clean(obj):
    """Plain JSON types only; non-finite floats become ``None``."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def make_report(command: str, config: dict, payload: dict, diagnostics: dict | None = None) -> dict:
    rep = {"schema": SCHEMA, "command": command, "config": config, "payload": payload}
    if diagnostics:
        rep["diagnostics"] = diagnostics
    return clean(rep)


def dumps(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, allow_nan=False) + "\n"


def loads(text: str) -> dict:
    rep = json.loads(text)
    if not isinstance(rep, dict) or "schema" not in rep:
        raise SchemaError("not a coarsehom report (missing schema tag)")
    if rep["schema"] != SCHEMA:
        raise SchemaError(f"unsupported report schema {rep['schema']!r}; expected {SCHEMA!r}")
    for key in ("command", "config", "payload"):
        if key not in rep:
            raise SchemaError(f"{key}: missing from report")
    return rep


def load_report(path: str | Path) -> dict:
    return loads(Path(path).read_text())


def csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()
