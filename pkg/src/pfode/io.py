"""Readers and writers for datasets, trajectories, schedules and reports.

Binary layouts (all little-endian):

* dataset ``PFLD``: magic, u32 count, u32 dim, then ``count*dim`` f64.
* trajectory ``PFTR``: magic, u32 state rows, u32 denoised rows, u32 dim,
  then states and denoised outputs as f64 row-major.  A JSON sidecar holds
  times and metadata.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionMismatchError
from .oracles import Dataset
from .schedules import TimeGrid
from .solvers import Trajectory

__all__ = [
    "read_dataset",
    "write_dataset",
    "read_trajectory",
    "write_trajectory",
    "trajectory_csv",
    "read_schedule",
    "write_schedule",
    "write_csv",
    "sha256_file",
    "sha256_bytes",
    "canonical_json",
]

_PFLD = b"PFLD"
_PFTR = b"PFTR"


def sha256_bytes(b: bytes) -> str:
    return hashlib.sha256(b).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _le(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


# ---------------------------------------------------------------- datasets

def write_dataset(path, data) -> Path:
    """Write points to ``.csv`` or binary (any other suffix, e.g. ``.pfld``)."""
    path = Path(path)
    P = data.points if isinstance(data, Dataset) else np.atleast_2d(np.asarray(data, dtype=float))
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix.lower() == ".csv":
        np.savetxt(path, P, delimiter=",", fmt="%.17g")
    else:
        with open(path, "wb") as fh:
            fh.write(struct.pack("<4sII", _PFLD, P.shape[0], P.shape[1]))
            fh.write(_le(P))
    return path


def read_dataset(path) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"dataset file not found: {path}")
    if path.suffix.lower() == ".csv":
        try:
            P = np.loadtxt(path, delimiter=",", ndmin=2, comments="#")
        except ValueError as exc:
            raise ConfigError(f"{path}: cannot parse CSV dataset ({exc})") from exc
        return Dataset(P)
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != _PFLD:
        raise ConfigError(f"{path}: not a PFLD dataset file")
    _, n, d = struct.unpack("<4sII", raw[:12])
    if len(raw) != 12 + 8 * n * d:
        raise ConfigError(f"{path}: payload size does not match header ({n}x{d})")
    P = np.frombuffer(raw, dtype="<f8", offset=12).reshape(n, d).astype(float)
    return Dataset(P)


# ---------------------------------------------------------------- trajectories

def write_trajectory(base, traj: Trajectory, with_csv: bool = True) -> dict:
    """Write ``base.json`` + ``base.pftr`` (+ ``base.csv``); returns the written paths."""
    base = Path(base)
    base.parent.mkdir(parents=True, exist_ok=True)
    rec = traj.denoised if traj.denoised is not None else np.zeros((0, traj.d))
    payload = struct.pack("<4sIII", _PFTR, traj.states.shape[0], rec.shape[0], traj.d) + _le(traj.states) + _le(rec)
    bin_path = base.with_suffix(".pftr")
    bin_path.write_bytes(payload)
    side = {
        "d": traj.d,
        "N": traj.N,
        "times": [float(v) for v in traj.times.times],
        "schedule_kind": traj.times.kind,
        "sigmas": [float(v) for v in traj.sigmas],
        "scales": [float(v) for v in traj.scales],
        "eps_norms": [float(v) for v in traj.eps_norms],
        "oracle": traj.oracle,
        "method": traj.method,
        "nfe": traj.nfe,
        "meta": traj.meta,
        "payload": bin_path.name,
        "payload_sha256": sha256_bytes(payload),
    }
    json_path = base.with_suffix(".json")
    json_path.write_text(json.dumps(side, indent=1))
    out = {"json": json_path, "payload": bin_path}
    if with_csv:
        out["csv"] = trajectory_csv(traj, base.with_suffix(".csv"))
    return out


def read_trajectory(path) -> Trajectory:
    path = Path(path)
    json_path = path.with_suffix(".json")
    if not json_path.exists():
        raise ConfigError(f"trajectory sidecar not found: {json_path}")
    side = json.loads(json_path.read_text())
    raw = (json_path.parent / side["payload"]).read_bytes()
    magic, ns, nr, d = struct.unpack("<4sIII", raw[:16])
    if magic != _PFTR:
        raise ConfigError(f"{path}: bad trajectory magic")
    if d != side["d"] or 16 + 8 * d * (ns + nr) != len(raw):
        raise DimensionMismatchError(f"{path}: payload inconsistent with sidecar")
    flat = np.frombuffer(raw, dtype="<f8", offset=16).astype(float)
    states = flat[: ns * d].reshape(ns, d)
    rec = flat[ns * d:].reshape(nr, d) if nr else None
    return Trajectory(
        times=TimeGrid(side["times"], kind=side.get("schedule_kind", "explicit")),
        states=states,
        denoised=rec,
        eps_norms=np.asarray(side["eps_norms"], dtype=float),
        sigmas=np.asarray(side["sigmas"], dtype=float),
        scales=np.asarray(side["scales"], dtype=float),
        method=side["method"],
        oracle=side["oracle"],
        nfe=int(side["nfe"]),
        meta=side.get("meta", {}),
    )


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def trajectory_csv(traj: Trajectory, path) -> Path:
    d = traj.d
    header = ["n", "t", "sigma", "eps_norm"] + [f"x{i}" for i in range(d)]
    has_r = traj.denoised is not None
    if has_r:
        header += [f"r{i}" for i in range(d)]
    rows = []
    for n in range(traj.states.shape[0]):
        row = [n, traj.times.times[n], traj.sigmas[n],
               traj.eps_norms[n] if n < traj.eps_norms.size else float("nan")]
        row += list(traj.states[n])
        if has_r:
            row += list(traj.denoised[n])
        rows.append(row)
    return write_csv(path, header, rows)


# ---------------------------------------------------------------- schedules

def write_schedule(path, grid: TimeGrid) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(grid.to_json() + os.linesep)
    return path


def read_schedule(path) -> TimeGrid:
    try:
        return TimeGrid.from_json(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"schedule file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid schedule JSON ({exc})") from exc
