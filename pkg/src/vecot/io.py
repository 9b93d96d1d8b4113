"""Plain-text formats: graph TSV, density CSV, trajectory directories.

Graph files hold one edge per line as ``i<TAB>j<TAB>w`` with 0-based ids;
lines starting with ``#`` are ignored.  Density files hold one row per node.
Vector-valued densities start with a ``channels=M`` header and carry ``M``
comma-separated columns per row.  Floats are written with 17 significant
digits so that a save/load cycle is lossless.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .exceptions import InputError, IOFailure
from .graph import Graph, build_graph

__all__ = [
    "read_graph",
    "write_graph",
    "read_density",
    "write_density",
    "write_trajectory",
    "write_json",
    "write_flow_trajectory",
]

_FMT = "%.17g"


def _read_lines(path) -> list[str]:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read().splitlines()
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}") from exc


def _write_text(path, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc
    return path


def read_graph(path) -> Graph:
    edges = []
    for lineno, line in enumerate(_read_lines(path), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t") if "\t" in line else line.split()
        if len(parts) != 3:
            raise InputError(f"{path}:{lineno}: expected 'i<TAB>j<TAB>w'")
        try:
            edges.append((int(parts[0]), int(parts[1]), float(parts[2])))
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from exc
    if not edges:
        raise InputError(f"{path}: no edges")
    return build_graph(edges)


def write_graph(g: Graph, path) -> Path:
    edges = sorted((min(i, j), max(i, j), w) for i, j, w in g.to_edge_list())
    lines = [f"{i}\t{j}\t{_FMT % w}" for i, j, w in edges]
    return _write_text(path, "\n".join(lines) + "\n")


def read_density(path) -> np.ndarray:
    """Load a density; returns shape ``(n,)`` or ``(M, n)`` for vector files."""
    rows, channels = [], None
    for lineno, line in enumerate(_read_lines(path), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("channels="):
            if channels is not None or rows:
                raise InputError(f"{path}:{lineno}: misplaced header")
            try:
                channels = int(line.split("=", 1)[1])
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: bad channel header") from exc
            if channels < 1:
                raise InputError(f"{path}:{lineno}: channel count must be positive")
            continue
        try:
            rows.append([float(v) for v in line.split(",")])
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise InputError(f"{path}: no values")
    width = channels or 1
    if any(len(r) != width for r in rows):
        raise InputError(f"{path}: every row must have {width} column(s)")
    arr = np.asarray(rows, dtype=np.float64)
    return arr.T.copy() if channels is not None else arr[:, 0]


def write_density(values, path) -> Path:
    """Write a density; 2-D input ``(M, n)`` is stored with a channel header."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        body = "\n".join(_FMT % v for v in arr)
    elif arr.ndim == 2:
        rows = (",".join(_FMT % v for v in col) for col in arr.T)
        body = f"channels={arr.shape[0]}\n" + "\n".join(rows)
    else:
        raise InputError("density must be 1-D or (channels, nodes)")
    return _write_text(path, body + "\n")


def write_json(obj, path) -> Path:
    return _write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_trajectory(traj, report, out_dir, channels: int | None = None, extra=None) -> list[Path]:
    """Export every slice as CSV plus ``manifest.json``.

    Slices are written as ``slice_000.csv`` and so on.  With ``channels`` set
    they use the vector layout.
    """
    out_dir = Path(out_dir)
    written = []
    width = len(str(traj.n_t))
    for k, rho in enumerate(traj.densities):
        values = rho.reshape(channels, -1) if channels else rho
        written.append(write_density(values, out_dir / f"slice_{k:0{width}d}.csv"))
    manifest = report.to_dict(with_stats=True)
    manifest["times"] = [float(t) for t in traj.times]
    manifest["slices"] = [p.name for p in written]
    if channels:
        manifest["channels"] = channels
    if extra:
        manifest.update(extra)
    written.append(write_json(manifest, out_dir / "manifest.json"))
    return written


def write_flow_trajectory(states, path) -> Path:
    """CSV of an entropy-flow run: ``t, rho_0, ..., rho_{n-1}, S`` per row."""
    n = states[0].rho.size
    header = ",".join(["t"] + [f"rho_{i}" for i in range(n)] + ["S"])
    rows = [",".join(_FMT % v for v in (s.t, *s.rho, s.entropy)) for s in states]
    return _write_text(path, header + "\n" + "\n".join(rows) + "\n")


def ensure_dir(path) -> Path:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise IOFailure(f"cannot create {path}: {exc}") from exc
    return Path(path)
