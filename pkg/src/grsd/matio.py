"""CSV serialization for matrices and block Jacobians.

Format: first line is ``rows,cols``, followed by one CSV line per row.
Values are written with 17 significant digits so that float64 round-trips
exactly and output bytes are reproducible for fixed inputs.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FLOAT_FMT = "%.17g"


def format_float(x: float) -> str:
    return FLOAT_FMT % float(x)


def save_matrix_csv(path, m) -> None:
    a = np.asarray(m, dtype=float)
    if a.ndim != 2:
        raise ValueError("expected a 2-d array")
    lines = [f"{a.shape[0]},{a.shape[1]}"]
    for row in a:
        lines.append(",".join(format_float(x) for x in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_matrix_csv(path) -> np.ndarray:
    text = Path(path).read_text().strip().splitlines()
    if not text:
        raise ValueError(f"empty matrix file: {path}")
    rows, cols = (int(tok) for tok in text[0].split(","))
    if len(text) - 1 != rows:
        raise ValueError(f"{path}: header says {rows} rows, found {len(text) - 1}")
    data = np.empty((rows, cols))
    for i, line in enumerate(text[1:]):
        vals = line.split(",")
        if len(vals) != cols:
            raise ValueError(f"{path}: row {i} has {len(vals)} values, expected {cols}")
        data[i] = [float(v) for v in vals]
    return data


def save_block_jacobian(directory, blocks, time_stamp: float = 0.0) -> None:
    """Dump a block Jacobian as one CSV per block plus an index file."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    names = []
    for i, b in enumerate(blocks):
        name = f"block_{i:04d}.csv"
        save_matrix_csv(d / name, b)
        names.append(name)
    (d / "blocks.json").write_text(json.dumps(
        {"time_stamp": time_stamp, "blocks": names}, indent=2) + "\n")


def load_block_jacobian(directory):
    """Inverse of :func:`save_block_jacobian`; returns (blocks, time_stamp)."""
    d = Path(directory)
    meta = json.loads((d / "blocks.json").read_text())
    blocks = [load_matrix_csv(d / name) for name in meta["blocks"]]
    return blocks, float(meta["time_stamp"])
