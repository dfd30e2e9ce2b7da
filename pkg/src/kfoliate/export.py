"""Plain-text artifacts: ball-model PLY meshes, leaf tables and check reports.

Every writer goes through :func:`atomic_write` so a failed run never leaves a
half-written file behind.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path

import numpy as np

from .foliation import CSV_COLUMNS, FoliationTable
from .hypgeo import to_ball


def atomic_write(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent if str(path.parent) else ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def mesh_text(points) -> str:
    """ASCII PLY of a periodic-in-theta grid of hyperboloid points, in ball coordinates."""
    points = np.asarray(points, dtype=float)
    n_rho, n_theta = points.shape[:2]
    verts = to_ball(points).reshape(-1, 3)
    lines = ["ply", "format ascii 1.0", f"element vertex {len(verts)}",
             "property double x", "property double y", "property double z",
             f"element face {(n_rho - 1) * n_theta}", "property list uchar int vertex_indices",
             "end_header"]
    lines += [f"{x:.9g} {y:.9g} {z:.9g}" for x, y, z in verts]
    for i in range(n_rho - 1):
        for j in range(n_theta):
            jn = (j + 1) % n_theta
            a, b = i * n_theta + j, i * n_theta + jn
            c, d = (i + 1) * n_theta + jn, (i + 1) * n_theta + j
            lines.append(f"4 {a} {b} {c} {d}")
    return "\n".join(lines) + "\n"


def write_mesh(path, points) -> None:
    atomic_write(path, mesh_text(points))


def table_text(table: FoliationTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in table.records:
        w.writerow([repr(float(x)) for x in r.csv_row()])
    return buf.getvalue()


def write_table(path, table: FoliationTable) -> None:
    atomic_write(path, table_text(table))


def report_text(checks) -> str:
    return "".join(c.line() + "\n" for c in checks)


def write_report(path, checks) -> None:
    atomic_write(path, report_text(checks))
