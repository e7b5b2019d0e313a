"""Trajectory CSV, JSON summaries and atomic file writes."""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np


def fmt(x: float) -> str:
    return "%.17g" % x


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write via a temp file in the same directory, then rename into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def csv_header(K: int, M: int) -> list[str]:
    cols = ["t", "mse_window", "eg_analytic"]
    cols += [f"w_{i + 1}" for i in range(K)]
    cols += [f"Q_{i + 1}{j + 1}" for i in range(K) for j in range(i, K)]
    cols += [f"R_{i + 1}{n + 1}" for i in range(K) for n in range(M)]
    return cols


def trajectory_csv(records) -> str:
    K, M = records[0].R.shape
    lines = [",".join(csv_header(K, M))]
    for r in records:
        row = [r.t, r.mse_window, r.eg_analytic, *r.w, *r.Q, *np.ravel(r.R)]
        lines.append(",".join(fmt(float(x)) for x in row))
    return "\n".join(lines) + "\n"


def read_trajectory_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    text = Path(path).read_text(encoding="utf-8")
    header, *rows = text.strip("\n").split("\n")
    return header.split(","), np.array([[float(x) for x in row.split(",")] for row in rows])


def to_json(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=True) + "\n"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj
