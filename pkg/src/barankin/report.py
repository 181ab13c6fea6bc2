"""Report serialization.

Reports are JSON documents in which every real number is written as a
decimal string with 17 significant digits, which round-trips IEEE doubles
exactly. Matrices are objects ``{"rows": r, "cols": c, "data": [[...]]}``
in row-major order.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from pathlib import Path
from typing import Any, Iterable

import numpy as np


def fmt(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def encode(obj: Any) -> Any:
    """Convert numbers, arrays and enums into the report data model."""
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return fmt(obj)
    if isinstance(obj, np.ndarray):
        if obj.ndim == 2:
            return {"rows": obj.shape[0], "cols": obj.shape[1],
                    "data": [[fmt(v) for v in row] for row in obj]}
        return [encode(v) for v in obj.tolist()] if obj.ndim else encode(obj.item())
    if isinstance(obj, dict):
        return {str(k): encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [encode(v) for v in obj]
    if obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot encode {type(obj).__name__}")


def decode_matrix(d: dict) -> np.ndarray:
    data = np.array([[float(v) for v in row] for row in d["data"]], dtype=float)
    return data.reshape(int(d["rows"]), int(d["cols"]))


def decode_vector(v: Iterable) -> np.ndarray:
    return np.array([float(x) for x in v], dtype=float)


def dumps(report: dict) -> str:
    return json.dumps(encode(report), indent=2) + "\n"


def write_report(report: dict, path: str | Path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(dumps(report))
    return p


def read_report(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


def write_trajectory_csv(rows: list[dict], path: str | Path, param_dim: int) -> Path:
    """Columns: iteration, trace, lambda_max, new_point_0..new_point_{k-1}."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    cols = ["iteration", "trace", "lambda_max"] + [f"new_point_{j}" for j in range(param_dim)]
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            pt = r["new_point"]
            coords = [""] * param_dim if pt is None else [fmt(v) for v in pt]
            w.writerow([r["iteration"], fmt(r["trace"]), fmt(r["lambda_max"]), *coords])
    return p
