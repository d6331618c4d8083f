"""File formats: density/dot/results CSV, scene JSON, and PGM heatmaps.

All writers format floats with %.17g (lossless for float64) or a fixed
precision, so identical inputs produce byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import Camera, GroundGrid
from .localization import DensityMap, DotMap

RESULTS_COLUMNS = (
    "variant", "seed", "moda", "modp", "precision", "recall", "f1",
    "loss_final", "iterations", "converged",
)


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def write_density_csv(path, density: DensityMap) -> None:
    """First line: rows,cols,cell_size_m; then row-major value rows."""
    g = density.grid
    lines = [f"{g.rows},{g.cols},{_fmt(g.cell_size)}"]
    for r in range(g.rows):
        lines.append(",".join(_fmt(v) for v in density.values[r]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_density_csv(path) -> DensityMap:
    text = Path(path).read_text(encoding="utf-8").strip().split("\n")
    header = text[0].split(",")
    if len(header) != 3:
        raise ValueError(f"{path}: expected header 'rows,cols,cell_size_m', got {text[0]!r}")
    rows, cols, cell = int(header[0]), int(header[1]), float(header[2])
    if len(text) - 1 != rows:
        raise ValueError(f"{path}: header promises {rows} rows, file has {len(text) - 1}")
    values = np.array([[float(v) for v in line.split(",")] for line in text[1:]])
    if values.shape != (rows, cols):
        raise ValueError(f"{path}: data shape {values.shape} does not match header")
    return DensityMap(grid=GroundGrid(rows=rows, cols=cols, cell_size=cell), values=values)


def write_dots_csv(path, dots: DotMap) -> None:
    lines = ["x_m,y_m"]
    for x, y in dots.points:
        lines.append(f"{_fmt(x)},{_fmt(y)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_dots_csv(path) -> DotMap:
    text = Path(path).read_text(encoding="utf-8").strip().split("\n")
    if not text or text[0] != "x_m,y_m":
        raise ValueError(f"{path}: expected 'x_m,y_m' header")
    pts = [[float(v) for v in line.split(",")] for line in text[1:] if line]
    return DotMap(points=np.array(pts).reshape(-1, 2))


def write_results_csv(path, rows: Sequence[dict]) -> None:
    lines = [",".join(RESULTS_COLUMNS)]
    for row in rows:
        cells = []
        for col in RESULTS_COLUMNS:
            v = row[col]
            if isinstance(v, str):
                cells.append(v)
            elif col in ("iterations", "converged") and isinstance(v, int):
                cells.append(str(v))
            elif col == "seed":
                cells.append(str(v))
            else:
                cells.append(f"{float(v):.10g}")
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_results_csv(path) -> list[dict]:
    text = Path(path).read_text(encoding="utf-8").strip().split("\n")
    if text[0] != ",".join(RESULTS_COLUMNS):
        raise ValueError(f"{path}: unexpected results header {text[0]!r}")
    rows = []
    for line in text[1:]:
        parts = line.split(",")
        row = dict(zip(RESULTS_COLUMNS, parts))
        for col in ("moda", "modp", "precision", "recall", "f1", "loss_final",
                    "iterations", "converged"):
            row[col] = float(row[col])
        rows.append(row)
    return rows


def write_pgm(path, values: np.ndarray) -> None:
    """Plain-text 8-bit PGM (P2), max-normalized; an all-zero map stays zero."""
    v = np.asarray(values, dtype=float)
    peak = float(v.max())
    scaled = np.zeros(v.shape, dtype=int) if peak <= 0 else np.rint(v / peak * 255).astype(int)
    lines = ["P2", f"{v.shape[1]} {v.shape[0]}", "255"]
    for r in range(v.shape[0]):
        lines.append(" ".join(str(x) for x in scaled[r]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_scene_json(path, grid: GroundGrid, cameras: Sequence[Camera]) -> None:
    Path(path).write_text(json.dumps(scene_to_dict(grid, cameras), indent=2) + "\n",
                          encoding="utf-8")


def scene_to_dict(grid: GroundGrid, cameras: Sequence[Camera]) -> dict:
    return {
        "grid": {
            "rows": grid.rows,
            "cols": grid.cols,
            "cell_size_m": grid.cell_size,
            "origin_m": list(grid.origin),
        },
        "cameras": [
            {"id": c.id, "x_m": c.position[0], "y_m": c.position[1], "height_m": c.position[2]}
            for c in cameras
        ],
    }


def scene_from_dict(obj: dict) -> tuple[GroundGrid, tuple[Camera, ...]]:
    g = obj["grid"]
    grid = GroundGrid(
        rows=int(g["rows"]),
        cols=int(g["cols"]),
        cell_size=float(g["cell_size_m"]),
        origin=tuple(g.get("origin_m", (0.0, 0.0))),
    )
    cameras = tuple(
        Camera(id=int(c["id"]), position=(float(c["x_m"]), float(c["y_m"]), float(c["height_m"])))
        for c in obj.get("cameras", [])
    )
    return grid, cameras


def read_scene_json(path) -> tuple[GroundGrid, tuple[Camera, ...]]:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    return scene_from_dict(obj)


def write_column_meta_csv(path, cost_matrix) -> None:
    lines = ["gt_index,camera_id,beta,sigma1_sq,sigma2_sq,d_cam,d_norm"]
    for j, meta in enumerate(cost_matrix.column_meta):
        lines.append(
            f"{j},{meta.camera_id},{_fmt(meta.beta)},{_fmt(meta.sigma1_sq)},"
            f"{_fmt(meta.sigma2_sq)},{_fmt(meta.d_cam)},{_fmt(meta.d_norm)}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
