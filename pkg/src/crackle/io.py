"""Serialization: clouds as CSV or a JSON envelope, reports as JSON/CSV."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .sampler import CloudMeta, DistributionSpec, PointCloud


def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def _encode(obj, out: list) -> None:
    if obj is None or isinstance(obj, (bool, np.bool_)):
        out.append(json.dumps(None if obj is None else bool(obj)))
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_fmt_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        out.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if i:
                out.append(", ")
            out.append(json.dumps(str(k)))
            out.append(": ")
            _encode(v, out)
        out.append("}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        out.append("[")
        for i, v in enumerate(obj):
            if i:
                out.append(", ")
            _encode(v, out)
        out.append("]")
    elif hasattr(obj, "to_dict"):
        _encode(obj.to_dict(), out)
    elif hasattr(obj, "value"):  # enums
        _encode(obj.value, out)
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    """JSON text with every float printed to 17 significant digits."""
    out: list = []
    _encode(obj, out)
    return "".join(out)


# -- clouds -------------------------------------------------------------------

def cloud_to_dict(cloud: PointCloud) -> dict:
    meta = cloud.meta.to_dict() if cloud.meta is not None else {"n_actual": len(cloud)}
    meta.setdefault("d", cloud.d)
    return {"meta": meta, "points": cloud.points.tolist()}


def cloud_from_dict(data: dict) -> PointCloud:
    meta = data.get("meta") or {}
    pts = np.asarray(data["points"], dtype=float)
    d = int(meta.get("d", pts.shape[1] if pts.ndim == 2 and pts.size else 1))
    pts = pts.reshape(-1, d)
    model = DistributionSpec.from_dict(meta) if meta.get("kind") else None
    cm = None
    if model is not None or "seed" in meta:
        cm = CloudMeta(
            model,
            int(meta.get("n", len(pts))),
            bool(meta.get("poissonized", False)),
            meta.get("seed"),
            len(pts),
        )
    return PointCloud(pts, cm)


def cloud_to_csv(cloud: PointCloud) -> str:
    buf = io.StringIO()
    if len(cloud):
        np.savetxt(buf, cloud.points, delimiter=",", fmt="%.17g", newline="\n")
    return buf.getvalue()


def cloud_from_csv(text: str, d: int | None = None) -> PointCloud:
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        return PointCloud(np.empty((0, d or 1)))
    pts = np.array([[float(c) for c in r] for r in rows])
    if d is not None and pts.shape[1] != d:
        raise ValueError(f"expected {d} columns, found {pts.shape[1]}")
    return PointCloud(pts)


def read_cloud(path) -> PointCloud:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        return cloud_from_dict(json.loads(text))
    return cloud_from_csv(text)


def write_cloud(cloud: PointCloud, path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        path.write_text(cloud_to_csv(cloud))
    else:
        path.write_text(dumps(cloud_to_dict(cloud)) + "\n")
