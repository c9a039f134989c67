"""Persistence: JSON-lines datasets, JSON checkpoints, training logs, and
UCR-archive ingestion.

Floats are written with ``repr`` precision (the ``json`` default), so every
round trip is exact at double precision.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .dictionary import DictionarySpec
from .model import Parameters, param_count
from .signal import Dataset, TimeSeries, one_hot

__all__ = [
    "SchemaError",
    "ParseError",
    "RaggedRows",
    "write_dataset",
    "read_dataset",
    "write_checkpoint",
    "read_checkpoint",
    "write_report",
    "write_epoch_log",
    "read_ucr",
]


class SchemaError(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, row, column, message):
        self.row = row
        self.column = column
        super().__init__(f"row {row}, column {column}: {message}")


class RaggedRows(ValueError):
    pass


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _dumps(obj) -> str:
    return json.dumps(_jsonable(obj), allow_nan=False, ensure_ascii=False)


# ----------------------------------------------------------------- datasets

def write_dataset(dataset: Dataset, path) -> None:
    """One header line {"n", "classes", "meta"}, then one record per series.

    Series metadata (e.g. forcing coefficients) goes in an optional "meta"
    field of the record.
    """
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(_dumps({"n": dataset.n, "classes": dataset.num_classes,
                         "meta": dataset.metadata}) + "\n")
        for ts in dataset:
            rec = {
                "id": ts.id,
                "times": ts.times,
                "values": ts.values,
                "label": None if ts.label is None else ts.label_index,
            }
            if ts.meta:
                rec["meta"] = ts.meta
            fh.write(_dumps(rec) + "\n")


def _require(obj, key, kind, where):
    if key not in obj:
        raise SchemaError(f"{where}: missing field {key!r}")
    val = obj[key]
    if kind is int and (isinstance(val, bool) or not isinstance(val, int)):
        raise SchemaError(f"{where}: field {key!r} must be an integer")
    if kind is list and not isinstance(val, list):
        raise SchemaError(f"{where}: field {key!r} must be a list")
    if kind is dict and not isinstance(val, dict):
        raise SchemaError(f"{where}: field {key!r} must be an object")
    return val


def read_dataset(path) -> Dataset:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().split("\n") if ln.strip()]
    if not lines:
        raise SchemaError(f"{path}: empty dataset file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: header is not JSON ({exc})") from exc
    if not isinstance(header, dict):
        raise SchemaError(f"{path}: header must be an object")
    n = _require(header, "n", int, "header")
    classes = _require(header, "classes", int, "header")
    meta = header.get("meta", {})
    if n < 1 or classes < 1:
        raise SchemaError("header: n and classes must be positive")
    series = []
    for lineno, line in enumerate(lines[1:], start=2):
        where = f"line {lineno}"
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{where}: not JSON ({exc})") from exc
        if not isinstance(rec, dict):
            raise SchemaError(f"{where}: record must be an object")
        sid = _require(rec, "id", None, where)
        times = _require(rec, "times", list, where)
        values = _require(rec, "values", list, where)
        label = rec.get("label")
        if len(values) != len(times):
            raise SchemaError(f"{where}: {len(values)} values for {len(times)} times")
        arr = np.array(values, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != n:
            raise SchemaError(f"{where}: values must be rows of length n={n}")
        if label is not None:
            if isinstance(label, bool) or not isinstance(label, int) or not 0 <= label < classes:
                raise SchemaError(f"{where}: label {label!r} outside [0, {classes})")
            label = one_hot(label, classes)
        try:
            series.append(TimeSeries(str(sid), times, arr, label, rec.get("meta", {})))
        except ValueError as exc:
            raise SchemaError(f"{where}: {exc}") from exc
    try:
        return Dataset(series, n, classes, meta)
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc


# ----------------------------------------------------------------- checkpoints

def write_checkpoint(params: Parameters, spec: DictionarySpec, path, meta=None) -> None:
    params.check(spec)
    doc = {
        "dictionary": spec.to_dict(),
        "n": params.n,
        "classes": params.num_classes,
        "beta": params.beta,
        "B": params.B,
        "A": params.A,
        "b": params.b,
        "meta": meta or {},
    }
    Path(path).write_text(_dumps(doc) + "\n", encoding="utf-8")


def read_checkpoint(path):
    """Returns ``(params, spec, meta)``."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise SchemaError("checkpoint must be a JSON object")
    try:
        spec = DictionarySpec.from_dict(_require(doc, "dictionary", dict, "checkpoint"))
    except (KeyError, ValueError, TypeError) as exc:
        raise SchemaError(f"checkpoint: bad dictionary ({exc})") from exc
    n = _require(doc, "n", int, "checkpoint")
    classes = _require(doc, "classes", int, "checkpoint")
    blocks = {k: np.array(_require(doc, k, list, "checkpoint"), dtype=float) for k in ("beta", "B", "A", "b")}
    expected = {"beta": (spec.m, spec.d), "B": (spec.m, n), "A": (classes, spec.m), "b": (classes,)}
    for k, shape in expected.items():
        if blocks[k].shape != shape:
            raise SchemaError(f"checkpoint: {k} has shape {blocks[k].shape}, expected {shape}")
    params = Parameters(**blocks)
    if params.size != param_count(spec, n, classes):
        raise SchemaError("checkpoint: parameter count does not match the dictionary")
    if not params.is_finite():
        raise SchemaError("checkpoint: non-finite parameters")
    return params, spec, doc.get("meta", {})


# ----------------------------------------------------------------- reports

def write_report(report, path) -> None:
    data = report.to_dict() if hasattr(report, "to_dict") else dict(report)

    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return None
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        return v

    Path(path).write_text(json.dumps(clean(_jsonable(data)), indent=2) + "\n", encoding="utf-8")


def write_epoch_log(report, path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss", "trainAcc", "nnzBeta"])
        for epoch, loss, acc, nnz in report.epoch_log:
            w.writerow([epoch, repr(float(loss)), repr(float(acc)), nnz])


# ----------------------------------------------------------------- UCR

def _detect_delimiter(text):
    first = next((ln for ln in text.splitlines() if ln.strip()), "")
    if "\t" in first:
        return "\t"
    if "," in first:
        return ","
    return None  # runs of whitespace


def read_ucr(path, delimiter=None, label_map=None) -> Dataset:
    """Read a univariate UCR file: one series per row, class label first.

    Labels are remapped to 0..C-1 in sorted order of the original labels
    (numeric order when they all parse as numbers); pass ``label_map`` from
    the train split to reuse it for the test split.  Times are 0, 1, ..., M.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if delimiter is None:
        delimiter = _detect_delimiter(text)
    rows = []
    for r, line in enumerate(io.StringIO(text), start=1):
        line = line.strip()
        if not line:
            continue
        cells = line.split(delimiter) if delimiter else line.split()
        cells = [c.strip() for c in cells]
        if len(cells) < 3:
            raise ParseError(r, len(cells), "need a label and at least two values")
        vals = []
        for c, cell in enumerate(cells[1:], start=2):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(r, c, f"cannot parse {cell!r} as a number") from None
            if not math.isfinite(v):
                raise ParseError(r, c, "missing or non-finite value")
            vals.append(v)
        rows.append((r, cells[0], vals))
    if not rows:
        raise ParseError(0, 0, "no data rows")
    length = len(rows[0][2])
    for r, _, vals in rows:
        if len(vals) != length:
            raise RaggedRows(f"row {r} has {len(vals)} values, expected {length}")

    raw = [lab for _, lab, _ in rows]
    if label_map is None:
        uniq = set(raw)
        try:
            ordered = sorted(uniq, key=float)
        except ValueError:
            ordered = sorted(uniq)
        label_map = {lab: i for i, lab in enumerate(ordered)}
    missing = set(raw) - set(label_map)
    if missing:
        raise ParseError(0, 1, f"labels {sorted(missing)} not in the label map")
    C = len(label_map)
    t = np.arange(length, dtype=float)
    series = [
        TimeSeries(f"{path.stem}-{i:05d}", t, np.array(vals)[:, None], one_hot(label_map[lab], C))
        for i, (_, lab, vals) in enumerate(rows)
    ]
    meta = {"source": path.name, "label_map": {str(k): v for k, v in label_map.items()}}
    return Dataset(series, 1, C, meta)
