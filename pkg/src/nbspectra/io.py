"""File formats: graph text, spectrum CSV, JSON and JSONL, all written atomically."""
from __future__ import annotations

import csv
import io as _io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .eigs import SpectralReport
from .sample import WeightedGraph

SCHEMA_VERSION = 1
SPECTRUM_COLUMNS = ("re", "im", "modulus", "residual", "is_outlier")


def fmt(x: float) -> str:
    """Shortest round-trip decimal."""
    return repr(float(x))


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def atomic_write(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.chmod(tmp, 0o666 & ~_umask())  # mkstemp creates 0600
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _header(meta: dict | None) -> list:
    lines = [f"# schema_version: {SCHEMA_VERSION}"]
    for key, val in (meta or {}).items():
        lines.append(f"# {key}: {val}")
    return lines


def _split_header(text: str):
    meta, body = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].partition(":")
            meta[key.strip()] = val.strip()
        elif line.strip():
            body.append(line)
    return meta, body


def _check_schema(meta: dict, what: str):
    ver = meta.get("schema_version")
    if ver is None or int(ver) != SCHEMA_VERSION:
        raise ValueError(f"{what}: unsupported or missing schema_version {ver!r}")


# -- graphs --------------------------------------------------------------------


def graph_to_text(graph: WeightedGraph, meta: dict | None = None) -> str:
    lines = _header(meta)
    lines.append(f"{graph.n} {graph.m}")
    lines.extend(f"{a + 1} {b + 1} {fmt(w)}" for a, b, w in zip(graph.u, graph.v, graph.w))
    return "\n".join(lines) + "\n"


def graph_from_text(text: str) -> tuple:
    meta, body = _split_header(text)
    if not body:
        raise ValueError("graph file: missing 'n m' header")
    n, m = (int(x) for x in body[0].split())
    rows = [line.split() for line in body[1:]]
    if len(rows) != m:
        raise ValueError(f"graph file: header says {m} edges, found {len(rows)}")
    if m:
        arr = np.array(rows, dtype=float)
        edges = arr[:, :2].astype(np.int64) - 1
        w = arr[:, 2] if arr.shape[1] > 2 else np.ones(m)
    else:
        edges, w = np.zeros((0, 2), np.int64), np.zeros(0)
    return WeightedGraph.from_edges(n, edges, w), meta


def write_graph(path, graph: WeightedGraph, meta: dict | None = None) -> Path:
    return atomic_write(path, graph_to_text(graph, meta))


def read_graph(path) -> tuple:
    return graph_from_text(Path(path).read_text())


# -- spectra -------------------------------------------------------------------


def spectrum_to_csv(report: SpectralReport, meta: dict | None = None) -> str:
    buf = _io.StringIO()
    buf.write("\n".join(_header(meta)) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SPECTRUM_COLUMNS)
    outl = report.is_outlier if report.is_outlier is not None else np.zeros(len(report), bool)
    for lam, res, flag in zip(report.eigenvalues, report.residuals, outl):
        writer.writerow([fmt(lam.real), fmt(lam.imag), fmt(abs(lam)), fmt(res), int(bool(flag))])
    return buf.getvalue()


def read_spectrum(path) -> tuple:
    """(eigenvalues, residuals, is_outlier, meta)."""
    meta, body = _split_header(Path(path).read_text())
    _check_schema(meta, "spectrum file")
    reader = csv.reader(body)
    head = next(reader)
    if tuple(head) != SPECTRUM_COLUMNS:
        raise ValueError(f"spectrum file: unexpected columns {head}")
    rows = list(reader)
    vals = np.array([complex(float(r[0]), float(r[1])) for r in rows], dtype=complex)
    res = np.array([float(r[3]) for r in rows])
    outl = np.array([r[4] == "1" for r in rows], dtype=bool)
    return vals, res, outl, meta


def write_spectrum(path, report: SpectralReport, meta: dict | None = None) -> Path:
    return atomic_write(path, spectrum_to_csv(report, meta))


# -- JSON ----------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def dumps(obj: dict) -> str:
    payload = {"schema_version": SCHEMA_VERSION, **_jsonable(obj)}
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def write_json(path, obj: dict) -> Path:
    return atomic_write(path, dumps(obj))


def read_json(path) -> dict:
    data = json.loads(Path(path).read_text())
    _check_schema(data, str(path))
    return data


def write_jsonl(path, records) -> Path:
    lines = [json.dumps({"schema_version": SCHEMA_VERSION, **_jsonable(r)}, sort_keys=True) for r in records]
    return atomic_write(path, "\n".join(lines) + ("\n" if lines else ""))
