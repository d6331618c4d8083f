"""Density maps, dot maps, peak extraction, and the Gaussian-MSE baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import maximum_filter

from .geometry import GroundGrid


@dataclass(frozen=True)
class DensityMap:
    """Nonnegative per-cell density on a ground grid."""

    grid: GroundGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.rows, self.grid.cols):
            raise ValueError(
                f"values shape {v.shape} does not match grid {self.grid.rows}x{self.grid.cols}"
            )
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("density values must be finite and >= 0")
        object.__setattr__(self, "values", v)

    @property
    def flat(self) -> np.ndarray:
        """Row-major flattened view, aligned with the grid's cell ordering."""
        return self.values.ravel()

    @property
    def total_mass(self) -> float:
        return float(self.values.sum())


@dataclass(frozen=True)
class DotMap:
    """Point annotations in world meters, each carrying unit weight."""

    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "points", p)

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return np.ones(self.count)


def extract_points_nms(density: DensityMap, threshold: float, radius: int) -> DotMap:
    """Cell centers that are local maxima of the density map.

    A cell is kept when its value is at least ``threshold``, no cell in the
    (2*radius+1)^2 window around it is larger, and it has the lowest
    row-major index among window cells sharing its value (plateau rule).
    """
    if not threshold > 0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    if radius < 1:
        raise ValueError(f"radius must be >= 1, got {radius}")
    v = density.values
    size = 2 * radius + 1
    window_max = maximum_filter(v, size=size, mode="constant", cval=-np.inf)
    cand_rows, cand_cols = np.nonzero((v >= threshold) & (v == window_max))

    grid = density.grid
    rows, cols = grid.rows, grid.cols
    keep = []
    for r, c in zip(cand_rows.tolist(), cand_cols.tolist()):
        val = v[r, c]
        r0, r1 = max(0, r - radius), min(rows, r + radius + 1)
        c0, c1 = max(0, c - radius), min(cols, c + radius + 1)
        win = v[r0:r1, c0:c1]
        tie_r, tie_c = np.nonzero(win == val)
        first = np.lexsort((tie_c, tie_r))[0]
        if (tie_r[first] + r0, tie_c[first] + c0) == (r, c):
            keep.append((r, c))

    centers = grid.cell_centers_world().reshape(rows, cols, 2)
    pts = np.array([centers[r, c] for r, c in keep]).reshape(-1, 2)
    return DotMap(points=pts)


def _anisotropic_blob(grid: GroundGrid, center_units: np.ndarray, cov_units: np.ndarray) -> tuple:
    """Window indices and unit-mass Gaussian weights for one blob.

    ``cov_units`` is the 2x2 covariance in grid units; the window is the
    4-sigma bounding box (largest axis), clipped to the grid, and the weights
    are renormalized to sum to 1 over the clipped window.
    """
    sig_max = math.sqrt(float(np.linalg.eigvalsh(cov_units).max()))
    reach = int(math.ceil(4.0 * sig_max))
    cx, cy = float(center_units[0]), float(center_units[1])
    col_c = int(math.floor(cx))
    row_c = int(math.floor(cy))
    r0, r1 = max(0, row_c - reach), min(grid.rows, row_c + reach + 1)
    c0, c1 = max(0, col_c - reach), min(grid.cols, col_c + reach + 1)
    cols = np.arange(c0, c1) + 0.5
    rows = np.arange(r0, r1) + 0.5
    dx = cols[None, :] - cx
    dy = rows[:, None] - cy
    si = np.linalg.inv(cov_units)
    q = si[0, 0] * dx**2 + 2.0 * si[0, 1] * dx * dy + si[1, 1] * dy**2
    w = np.exp(-0.5 * q)
    total = w.sum()
    if total > 0:
        w = w / total
    return (r0, r1, c0, c1), w


def splat_gaussian(dots: DotMap, grid: GroundGrid, sigma: float) -> DensityMap:
    """Sum of unit-mass isotropic Gaussians (sigma in meters) at cell centers.

    Each kernel is truncated at 4 sigma and renormalized so its discrete mass
    over the grid is exactly 1; the map therefore sums to the number of dots.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    values = np.zeros((grid.rows, grid.cols))
    if dots.count == 0:
        return DensityMap(grid=grid, values=values)
    sig_units = sigma / grid.cell_size
    cov = np.array([[sig_units**2, 0.0], [0.0, sig_units**2]])
    centers = grid.world_to_cell_units(dots.points)
    for j in range(dots.count):
        if not grid.contains(dots.points[j]):
            raise ValueError(f"dot {tuple(dots.points[j])} lies outside the grid")
        (r0, r1, c0, c1), w = _anisotropic_blob(grid, centers[j], cov)
        values[r0:r1, c0:c1] += w
    return DensityMap(grid=grid, values=values)


def mse_loss(pred: DensityMap, target: DensityMap) -> tuple[float, np.ndarray]:
    """Mean squared error over cells and its gradient 2*(pred-target)/n."""
    if pred.grid != target.grid:
        raise ValueError("prediction and target grids differ")
    diff = pred.values - target.values
    n = diff.size
    loss = float(np.mean(diff**2))
    grad = 2.0 * diff / n
    return loss, grad
