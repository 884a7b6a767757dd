"""Output sinks: JSONL snapshot streams, CSV time series, binary position
dumps, and experiment summaries named by config hash."""

from __future__ import annotations

import csv
import json
import os
import struct

import numpy as np

SNAPSHOT_MAGIC = b"GMPE"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIQQd")  # magic, version, N, d, time -> 32 bytes


def write_snapshot_jsonl(path, snapshots, include_positions: bool = False):
    """One JSON object per observation time: time, observables, and
    optionally the raw positions."""
    with open(path, "w") as fh:
        for t, ens, obs in snapshots:
            rec = {"time": t, "observables": obs}
            if include_positions:
                rec["positions"] = ens.positions.tolist()
            fh.write(json.dumps(rec) + "\n")


def write_positions_bin(path, positions: np.ndarray, time: float):
    """Little-endian float64 row-major N x d block behind a 32-byte header."""
    x = np.ascontiguousarray(positions, dtype="<f8")
    n, d = x.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, n, d, float(time)))
        fh.write(x.tobytes())


def read_positions_bin(path):
    with open(path, "rb") as fh:
        magic, version, n, d, time = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != SNAPSHOT_MAGIC:
            raise ValueError(f"bad magic {magic!r} in {path}")
        if version != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {version}")
        x = np.frombuffer(fh.read(n * d * 8), dtype="<f8").reshape(n, d)
    return x, time


def write_series_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def experiment_paths(out_dir, experiment: str, cfg_hash: str):
    os.makedirs(out_dir, exist_ok=True)
    base = os.path.join(out_dir, f"{experiment}-{cfg_hash}")
    return base + ".json", base + ".csv"


def write_summary(path, summary: dict):
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")
