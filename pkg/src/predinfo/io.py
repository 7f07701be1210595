"""File formats: sequence CSV, the PISQ binary container, result tables and sidecars."""

from __future__ import annotations

import csv
import io
import json
import math
import struct
from pathlib import Path

import numpy as np

from .core import BINARY, CONTINUOUS, SequenceDataset

PISQ_MAGIC = b"PISQ"
PISQ_VERSION = 1
_PISQ_HEADER = struct.Struct("<4sIQQ")


def format_float(x) -> str:
    """Shortest repr that round-trips; NaN and infinities spelled out."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _meta_lines(meta: dict | None) -> list[str]:
    if not meta:
        return []
    return ["# " + " ".join(f"{k}={meta[k]}" for k in meta)]


def write_table(path, header: list[str], rows: list[list], meta: dict | None = None) -> None:
    """Write an RFC-4180 CSV; ``meta`` goes into a single leading ``#`` record."""
    buf = io.StringIO()
    for line in _meta_lines(meta):
        buf.write(line + "\r\n")
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="")


def read_table(path) -> tuple[dict, list[str], list[list[str]]]:
    """Inverse of :func:`write_table`; returns ``(meta, header, rows)``."""
    meta: dict = {}
    text = Path(path).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text, newline=""))
    header = None
    rows = []
    for row in reader:
        if header is None and row and row[0].startswith("#"):
            for tok in ",".join(row)[1:].split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    meta[k] = v
            continue
        if header is None:
            header = row
        else:
            rows.append(row)
    return meta, header or [], rows


def write_sequence_csv(path, data: SequenceDataset, meta: dict | None = None) -> None:
    header = ["t"] + [f"x{j}" for j in range(data.d)]
    rows = [[t, *map(float, data.values[t])] for t in range(data.n)]
    write_table(path, header, rows, meta)


def read_sequence_csv(path, alphabet: str | None = None) -> SequenceDataset:
    meta, header, rows = read_table(path)
    values = np.array([[float(v) for v in r[1:]] for r in rows], dtype=np.float64)
    if alphabet is None:
        alphabet = BINARY if values.size and np.all(np.abs(values) == 1.0) else CONTINUOUS
    seed = int(meta.get("seed", 0))
    return SequenceDataset(values, alphabet, meta.get("generator", "csv"), seed)


def write_pisq(path, values: np.ndarray) -> None:
    """Binary container: magic, u32 version, u64 N, u64 d, then float64 LE row-major."""
    v = np.ascontiguousarray(np.atleast_2d(values), dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_PISQ_HEADER.pack(PISQ_MAGIC, PISQ_VERSION, v.shape[0], v.shape[1]))
        fh.write(v.tobytes(order="C"))


def read_pisq(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    magic, version, n, d = _PISQ_HEADER.unpack_from(blob, 0)
    if magic != PISQ_MAGIC:
        raise ValueError(f"{path}: not a PISQ container (magic {magic!r})")
    if version != PISQ_VERSION:
        raise ValueError(f"{path}: unsupported PISQ version {version}")
    body = blob[_PISQ_HEADER.size :]
    if len(body) != n * d * 8:
        raise ValueError(f"{path}: truncated payload ({len(body)} bytes for {n}x{d})")
    return np.frombuffer(body, dtype="<f8").reshape(n, d).astype(np.float64)


def write_sidecar(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")
