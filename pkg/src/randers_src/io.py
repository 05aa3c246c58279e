"""Deterministic JSON reports and CSV trajectory files."""
from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path

import numpy as np

FLOAT_FMT = "%.17g"


def to_jsonable(obj):
    """Plain Python structure with numpy scalars/arrays converted; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if dataclasses.is_dataclass(obj) and hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    return obj


def _encode(v, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(v, dict):
        if not v:
            return "{}"
        items = [f"{pad}{_encode(str(k), indent, level + 1)}: {_encode(x, indent, level + 1)}" for k, x in v.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(v, list):
        if not v:
            return "[]"
        if all(isinstance(x, (int, float, str, bool)) or x is None for x in v):
            return "[" + ", ".join(_encode(x, indent, level) for x in v) + "]"
        return "[\n" + ",\n".join(pad + _encode(x, indent, level + 1) for x in v) + "\n" + end + "]"
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "null"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        s = FLOAT_FMT % v
        # keep floats recognizable as floats after a round trip
        return s if any(c in s for c in ".eEn") else s + ".0"
    if isinstance(v, str):
        return json.dumps(v)
    raise TypeError(f"cannot serialize {type(v).__name__}")


def format_json(obj, indent=2):
    """JSON text with floats written as ``%.17g`` and key order preserved."""
    return _encode(to_jsonable(obj), indent, 0) + "\n"


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_json(obj))
    return path


def trajectory_table(s, x, u=None, t=None):
    """Header and rows ``s, x1..xn[, u][, t]``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    cols = ["s"] + [f"x{i + 1}" for i in range(x.shape[1])]
    data = [np.asarray(s, dtype=float)[:, None], x]
    if u is not None:
        cols.append("u")
        data.append(np.asarray(u, dtype=float)[:, None])
    if t is not None:
        cols.append("t")
        data.append(np.asarray(t, dtype=float)[:, None])
    return cols, np.hstack(data)


def write_trajectory_csv(path, traj, lift=None, product=False):
    """Write a GeodesicTrajectory (optionally with its lift) as CSV.

    For product-space trajectories (``product=True``) the first coordinate is
    ``u`` and is written after the spatial coordinates.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    x = traj.x
    u = None
    if product:
        u, x = x[:, 0], x[:, 1:]
    t = None if lift is None else lift.z[:, -1]
    cols, table = trajectory_table(traj.s, x, u, t)
    np.savetxt(path, table, fmt=FLOAT_FMT, delimiter=",", header=",".join(cols), comments="")
    return path


def read_trajectory_csv(path):
    """``(columns, array)`` from a trajectory CSV."""
    path = Path(path)
    with path.open() as fh:
        cols = fh.readline().strip().split(",")
    return cols, np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1))
