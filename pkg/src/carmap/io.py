"""CSV / JSON readers and writers for health data, exposures, graphs and results."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .graph import AreaGraph, from_adjacency_list
from .mcmc import ChainTrace
from .model import ExposureSet, HealthDataset


class InputError(ValueError):
    """Malformed input file; carries the 1-based line and column of the problem."""

    def __init__(self, path, message: str, line: int | None = None, column: int | None = None):
        self.path, self.line, self.column = str(path), line, column
        where = self.path
        if line is not None:
            where += f":{line}"
            if column is not None:
                where += f":{column}"
        super().__init__(f"{where}: {message}")


def _rows(path, required: Sequence[str]):
    """Yield (line_no, header, row) after checking the header starts with ``required``."""
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError(path, f"cannot open: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(path, "empty file", 1) from None
        for j, name in enumerate(required):
            if j >= len(header) or header[j] != name:
                raise InputError(path, f"expected header column {name!r}", 1, j + 1)
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise InputError(path, f"expected {len(header)} fields, got {len(row)}", reader.line_num)
            yield reader.line_num, header, [c.strip() for c in row]


def _number(path, text: str, line: int, col: int) -> float:
    try:
        v = float(text)
    except ValueError:
        raise InputError(path, f"not a number: {text!r}", line, col) from None
    if not math.isfinite(v):
        raise InputError(path, f"non-finite value {text!r}", line, col)
    return v


def read_health(path) -> HealthDataset:
    """``area_id,Y,E,<covariates...>``; an intercept column is prepended to the covariates."""
    ids, y, e, covs = [], [], [], []
    header: list[str] = []
    for line, header, row in _rows(path, ("area_id", "Y", "E")):
        if row[0] in ids:
            raise InputError(path, f"duplicate area id {row[0]!r}", line, 1)
        yv = _number(path, row[1], line, 2)
        if yv < 0 or yv != round(yv):
            raise InputError(path, f"Y must be a non-negative integer, got {row[1]!r}", line, 2)
        ev = _number(path, row[2], line, 3)
        if ev <= 0:
            raise InputError(path, f"E must be positive, got {row[2]!r}", line, 3)
        ids.append(row[0])
        y.append(yv)
        e.append(ev)
        covs.append([_number(path, c, line, j + 4) for j, c in enumerate(row[3:])])
    if not ids:
        raise InputError(path, "no data rows", 2)
    names = ("intercept",) + tuple(header[3:])
    x = np.column_stack([np.ones(len(ids)), np.asarray(covs, dtype=float).reshape(len(ids), -1)])
    return HealthDataset(tuple(ids), np.asarray(y), np.asarray(e), x, names)


def read_exposure(path, area_ids: Sequence[str]) -> ExposureSet:
    """``area_id,concentration,weight`` with one row per cell; weights are renormalised per area."""
    lookup = {a: k for k, a in enumerate(area_ids)}
    ws: list[list[float]] = [[] for _ in area_ids]
    ps: list[list[float]] = [[] for _ in area_ids]
    for line, _, row in _rows(path, ("area_id", "concentration", "weight")):
        k = lookup.get(row[0])
        if k is None:
            raise InputError(path, f"unknown area id {row[0]!r}", line, 1)
        p = _number(path, row[2], line, 3)
        if p < 0:
            raise InputError(path, "weights must be non-negative", line, 3)
        ws[k].append(_number(path, row[1], line, 2))
        ps[k].append(p)
    for k, a in enumerate(area_ids):
        total = sum(ps[k])
        if not ws[k]:
            raise InputError(path, f"no exposure rows for area {a!r}")
        if total <= 0:
            raise InputError(path, f"weights of area {a!r} sum to zero")
        ps[k] = [p / total for p in ps[k]]
    return ExposureSet.from_lists(ws, ps)


def read_adjacency(path, area_ids: Sequence[str]) -> AreaGraph:
    """``area_i,area_j`` edge list resolved against ``area_ids``."""
    lookup = set(area_ids)
    pairs = []
    for line, _, row in _rows(path, ("area_i", "area_j")):
        for j in (0, 1):
            if row[j] not in lookup:
                raise InputError(path, f"unknown area id {row[j]!r}", line, j + 1)
        if row[0] == row[1]:
            raise InputError(path, f"self-loop on {row[0]!r}", line, 2)
        pairs.append((row[0], row[1]))
    return from_adjacency_list(pairs, ids=list(area_ids))


def read_residuals(path) -> tuple[tuple[str, ...], np.ndarray]:
    """``area_id,residual``."""
    ids, vals = [], []
    for line, _, row in _rows(path, ("area_id", "residual")):
        if row[0] in ids:
            raise InputError(path, f"duplicate area id {row[0]!r}", line, 1)
        ids.append(row[0])
        vals.append(_number(path, row[1], line, 2))
    if not ids:
        raise InputError(path, "no data rows", 2)
    return tuple(ids), np.asarray(vals)


def fmt(x) -> str:
    """Round-trippable text for a number (17 significant digits, '.' decimal point)."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_trace_csv(path, traces: Sequence[ChainTrace]) -> None:
    """One row per retained sample: ``chain,iteration,<parameters...>``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        names = None
        for t in traces:
            cols = t.columns()
            if names is None:
                names = list(cols)
                out.writerow(["chain", "iteration", *names])
            for i, it in enumerate(t.iterations):
                out.writerow([t.chain_id, int(it), *(fmt(cols[c][i]) for c in names)])


def write_metric_csv(path, records: Sequence[dict]) -> None:
    fields = ["scenario", "model", "bias_pct", "rmse_pct", "coverage_pct", "n_ok", "n_failed"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(fields)
        for r in records:
            out.writerow([r[f] if isinstance(r[f], str) else fmt(r[f]) for f in fields])


def _json_ready(obj):
    if isinstance(obj, dict):
        return {str(k): _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_json_ready(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        # JSON has no NaN/inf
        return v if math.isfinite(v) else None
    return obj


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_json_ready(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise InputError(path, f"cannot open: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(path, exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(obj, dict):
        raise InputError(path, "expected a JSON object", 1, 1)
    return obj


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
