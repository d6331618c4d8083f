"""Ground-plane coordinate system, cameras, and view-ray covariance geometry.

World coordinates are planar metric positions (meters). Cost-side geometry
(cell centers, deviations, covariances) lives in grid units: one unit is one
cell. Cameras are 3D points whose first two components share the world frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .errors import DegenerateRayError

DistanceMode = Literal["ground2d", "full3d"]

# Below this planar separation (meters) a point sits on the camera's ground
# projection and no view ray exists.
DEGENERATE_RAY_EPS = 1e-9


@dataclass(frozen=True)
class GroundGrid:
    """Regular ground-plane grid of rows x cols square cells."""

    rows: int
    cols: int
    cell_size: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"grid must have at least one cell, got {self.rows}x{self.cols}")
        if not self.cell_size > 0:
            raise ValueError(f"cell_size must be positive, got {self.cell_size}")

    @property
    def n_cells(self) -> int:
        return self.rows * self.cols

    @property
    def extent(self) -> tuple[float, float]:
        """Width and height of the grid in meters (x, y)."""
        return (self.cols * self.cell_size, self.rows * self.cell_size)

    def contains(self, point: Sequence[float]) -> bool:
        x, y = float(point[0]), float(point[1])
        ox, oy = self.origin
        w, h = self.extent
        return ox <= x <= ox + w and oy <= y <= oy + h

    def world_to_cell_units(self, points: np.ndarray) -> np.ndarray:
        """Map world (x, y) meters to continuous grid-unit coordinates."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return (pts - np.asarray(self.origin)) / self.cell_size

    def cell_centers_world(self) -> np.ndarray:
        """All cell centers in meters, row-major order, shape (rows*cols, 2)."""
        cols = (np.arange(self.cols) + 0.5) * self.cell_size + self.origin[0]
        rows = (np.arange(self.rows) + 0.5) * self.cell_size + self.origin[1]
        xx, yy = np.meshgrid(cols, rows)
        return np.column_stack([xx.ravel(), yy.ravel()])

    def cell_centers_units(self) -> np.ndarray:
        """All cell centers in grid units, row-major order, shape (rows*cols, 2)."""
        cols = np.arange(self.cols) + 0.5
        rows = np.arange(self.rows) + 0.5
        xx, yy = np.meshgrid(cols, rows)
        return np.column_stack([xx.ravel(), yy.ravel()])


@dataclass(frozen=True)
class Camera:
    """A camera identified by ``id`` at 3D position (x, y, height) meters."""

    id: int
    position: tuple[float, float, float]

    def __post_init__(self):
        if self.position[2] < 0:
            raise ValueError(f"camera height must be >= 0, got {self.position[2]}")

    @property
    def ground(self) -> tuple[float, float]:
        return (self.position[0], self.position[1])

    @property
    def height(self) -> float:
        return self.position[2]


@dataclass(frozen=True)
class ViewRayFrame:
    """Planar rotation aligning the x-axis with a view-ray direction.

    ``rotation``'s first column is the unit ray direction (cos beta, sin beta),
    so quantities expressed in this frame put along-ray components first.
    """

    beta: float
    rotation: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class CovarianceSpec:
    """2x2 SPD covariance with eigenvalues sigma1_sq (along ray), sigma2_sq."""

    sigma1_sq: float
    sigma2_sq: float
    S: np.ndarray = field(repr=False)
    S_inv: np.ndarray = field(repr=False)


def cell_to_world(grid: GroundGrid, index: tuple[int, int]) -> tuple[float, float]:
    """World coordinates (meters) of the center of cell (row, col)."""
    row, col = index
    if not (0 <= row < grid.rows and 0 <= col < grid.cols):
        raise IndexError(f"cell index {index} outside {grid.rows}x{grid.cols} grid")
    return (
        grid.origin[0] + (col + 0.5) * grid.cell_size,
        grid.origin[1] + (row + 0.5) * grid.cell_size,
    )


def view_ray_frame(beta: float) -> ViewRayFrame:
    """Rotation by ``beta``; first column is the unit view-ray direction."""
    c, s = math.cos(beta), math.sin(beta)
    return ViewRayFrame(beta=beta, rotation=np.array([[c, -s], [s, c]]))


def view_ray_angle(camera: Camera, point: Sequence[float]) -> float:
    """Planar angle of the ray from the camera's ground projection to ``point``.

    Returns a value in (-pi, pi]. Raises DegenerateRayError when the point
    coincides with the camera's ground projection (no ray direction exists);
    callers that need a fallback substitute beta = 0 with a unit isotropic
    covariance.
    """
    dx = float(point[0]) - camera.ground[0]
    dy = float(point[1]) - camera.ground[1]
    if math.hypot(dx, dy) < DEGENERATE_RAY_EPS:
        raise DegenerateRayError(
            f"point {tuple(point)} coincides with camera {camera.id} ground projection"
        )
    beta = math.atan2(dy, dx)
    if beta == -math.pi:
        beta = math.pi
    return beta


def camera_distance(camera: Camera, point: Sequence[float], mode: DistanceMode = "full3d") -> float:
    """Distance (meters) from a ground point to the camera.

    ``ground2d`` measures to the camera's ground projection; ``full3d``
    measures to the 3D camera position with the point at height zero.
    """
    dx = float(point[0]) - camera.ground[0]
    dy = float(point[1]) - camera.ground[1]
    if mode == "ground2d":
        return math.hypot(dx, dy)
    if mode == "full3d":
        return math.sqrt(dx * dx + dy * dy + camera.height * camera.height)
    raise ValueError(f"unknown distance mode {mode!r}")


def min_max_normalize(distances: Sequence[float]) -> np.ndarray:
    """Map distances to [0, 1] via (d - min) / (max - min).

    Order-preserving; the minimum maps to 0 and the maximum to 1. When all
    entries are equal the result is all zeros.
    """
    d = np.asarray(distances, dtype=float)
    if d.size == 0:
        raise ValueError("cannot normalize an empty distance list")
    if not np.all(np.isfinite(d)) or np.any(d < 0):
        raise ValueError("distances must be finite and >= 0")
    lo, hi = float(d.min()), float(d.max())
    if hi == lo:
        return np.zeros_like(d)
    return (d - lo) / (hi - lo)


def closest_camera(cameras: Sequence[Camera], point: Sequence[float], mode: DistanceMode = "full3d") -> int:
    """Index (into ``cameras``) of the camera nearest to ``point``.

    Ties are broken by the lowest camera id.
    """
    if len(cameras) == 0:
        raise ValueError("camera list is empty")
    best = 0
    best_key = (camera_distance(cameras[0], point, mode), cameras[0].id)
    for i in range(1, len(cameras)):
        key = (camera_distance(cameras[i], point, mode), cameras[i].id)
        if key < best_key:
            best, best_key = i, key
    return best


def build_covariance(beta: float, sigma1_sq: float, sigma2_sq: float) -> CovarianceSpec:
    """Covariance with variance ``sigma1_sq`` along the beta-direction ray.

    S = R diag(sigma1_sq, sigma2_sq) R^T with R the rotation by beta. The
    inverse is built from the same factors, so S and S_inv are consistent to
    machine precision.
    """
    if not (sigma1_sq > 0 and sigma2_sq > 0):
        raise ValueError(f"variances must be positive, got ({sigma1_sq}, {sigma2_sq})")
    if sigma1_sq == sigma2_sq:
        # Isotropic covariance is rotation-invariant; bypassing the rotation
        # keeps the reduction to a scaled identity exact.
        S = np.array([[sigma1_sq, 0.0], [0.0, sigma1_sq]])
        S_inv = np.array([[1.0 / sigma1_sq, 0.0], [0.0, 1.0 / sigma1_sq]])
        return CovarianceSpec(sigma1_sq, sigma2_sq, S, S_inv)
    R = view_ray_frame(beta).rotation
    S = R @ np.diag([sigma1_sq, sigma2_sq]) @ R.T
    S_inv = R @ np.diag([1.0 / sigma1_sq, 1.0 / sigma2_sq]) @ R.T
    # Symmetrize away the last-bit asymmetry from the two matmuls.
    S = 0.5 * (S + S.T)
    S_inv = 0.5 * (S_inv + S_inv.T)
    return CovarianceSpec(sigma1_sq, sigma2_sq, S, S_inv)


def unit_covariance() -> CovarianceSpec:
    """The identity covariance (Euclidean geometry)."""
    return build_covariance(0.0, 1.0, 1.0)
