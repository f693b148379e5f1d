"""CSV, JSON and SVG output for run records."""

from __future__ import annotations

import csv
import json
import platform
from pathlib import Path

import numpy as np

from .plotting import regret_chart, save_figure
from .runner import COLUMNS, RunRecord


def _cell(k, v):
    if k in ("t", "n_t"):
        return int(v)
    if k == "in_confidence_set":
        return int(bool(v))
    return repr(float(v))


def write_csv(record: RunRecord | None, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        if record is not None:
            for row in record.rows():
                w.writerow([_cell(k, row[k]) for k in COLUMNS])
    return path


def read_csv(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in COLUMNS}


def metadata(config=None, extra=None) -> dict:
    from .. import __version__

    meta = {
        "package_version": __version__,
        "numpy": np.__version__,
        "python": platform.python_version(),
    }
    if config is not None:
        meta["config"] = config.to_dict()
        meta["config_hash"] = config.hash()
    if extra:
        meta.update(extra)
    return meta


def write_json(records, path, meta=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"meta": meta or {}, "records": [r.to_dict() for r in records]}
    path.write_text(json.dumps(doc, allow_nan=True))
    return path


def read_json(path) -> tuple[list[RunRecord], dict]:
    doc = json.loads(Path(path).read_text())
    return [RunRecord.from_dict(d) for d in doc["records"]], doc.get("meta", {})


def export(records, fmt: str, path, meta=None, bound=None, column: str = "cum_kant_lo") -> list[Path]:
    """Write ``records`` as ``fmt``.  CSV gives one file per repetition
    (suffix ``_repN`` when there are several); JSON and SVG give one file."""
    path = Path(path)
    records = list(records)
    if fmt == "csv":
        if len(records) <= 1:
            return [write_csv(records[0] if records else None, path)]
        return [write_csv(r, path.with_name(f"{path.stem}_rep{i}{path.suffix}")) for i, r in enumerate(records)]
    if fmt == "json":
        return [write_json(records, path, meta)]
    if fmt == "svg":
        return [save_figure(regret_chart(records, column, bound), path)]
    raise ValueError(f"unknown format {fmt!r}")
