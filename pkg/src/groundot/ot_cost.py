"""Transport-cost matrices for the ground-plane loss family.

Four cost kinds are supported, all of the form exp(distance) with the
distance measured in grid units:

- ``euclidean``: plain Euclidean distance, camera-independent.
- ``view_ray``: Mahalanobis distance whose short axis follows the view ray
  of the selected camera (fixed perpendicular variance).
- ``distance_adjusted``: Euclidean distance shrunk isotropically for points
  far from their camera, so faraway mistakes cost more.
- ``mahalanobis``: view-ray direction plus camera-distance adjustment of the
  perpendicular variance.

With several cameras, each annotation's column uses its closest camera.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import (
    Camera,
    CovarianceSpec,
    DistanceMode,
    GroundGrid,
    build_covariance,
    camera_distance,
    closest_camera,
    min_max_normalize,
    view_ray_angle,
)
from .errors import DegenerateRayError
from .localization import DotMap

COST_KINDS = ("euclidean", "view_ray", "distance_adjusted", "mahalanobis")

# Distances are capped before exponentiation; exp(60) ~ 1.1e26 stays finite
# while exp(-cap/epsilon) underflows to an exactly-zero kernel entry.
DISTANCE_CAP = 60.0


@dataclass(frozen=True)
class CostVariant:
    """A member of the cost family.

    ``sigma2_sq_fixed`` is the perpendicular variance of the ``view_ray``
    kind; ``alpha`` scales the camera-distance adjustment of the
    ``distance_adjusted`` and ``mahalanobis`` kinds. ``mahalanobis`` with
    alpha = 0 reduces exactly to ``euclidean``.
    """

    kind: str = "mahalanobis"
    sigma2_sq_fixed: float = 1.2
    alpha: float = 0.05

    def __post_init__(self):
        if self.kind not in COST_KINDS:
            raise ValueError(f"unknown cost kind {self.kind!r}, expected one of {COST_KINDS}")
        if not self.sigma2_sq_fixed >= 1:
            raise ValueError(f"sigma2_sq_fixed must be >= 1, got {self.sigma2_sq_fixed}")
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")

    @property
    def needs_cameras(self) -> bool:
        return self.kind != "euclidean"

    def label(self) -> str:
        """Stable name used in result tables and file names."""
        if self.kind in ("distance_adjusted", "mahalanobis"):
            return f"{self.kind}_alpha{self.alpha:g}"
        if self.kind == "view_ray":
            return f"view_ray_s{self.sigma2_sq_fixed:g}"
        return self.kind


@dataclass(frozen=True)
class ColumnMeta:
    """Provenance of one ground-truth column of the cost matrix."""

    camera_id: int
    beta: float
    sigma1_sq: float
    sigma2_sq: float
    d_cam: float
    d_norm: float


@dataclass(frozen=True)
class CostMatrix:
    """Dense n x m transport costs with per-column provenance."""

    values: np.ndarray = field(repr=False)
    column_meta: tuple[ColumnMeta, ...] = ()

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def _exp_quad_distance(delta: np.ndarray, a: float, b: float, c: float) -> np.ndarray:
    """exp(min(sqrt(dx*a*dx + 2*dx*b*dy + dy*c*dy), cap)) for rows of delta.

    The Euclidean and the unit-covariance Mahalanobis costs both route
    through this function with (a, b, c) = (1, 0, 1), which keeps their
    advertised equality exact and is what the degeneracy checks rely on.
    """
    dx = delta[..., 0]
    dy = delta[..., 1]
    q = dx * (a * dx + b * dy) + dy * (b * dx + c * dy)
    dist = np.sqrt(np.maximum(q, 0.0))
    return np.exp(np.minimum(dist, DISTANCE_CAP))


def euclidean_cost(x: Sequence[float], y: Sequence[float]) -> float:
    """exp of the Euclidean distance between two grid-unit points."""
    delta = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return float(_exp_quad_distance(delta, 1.0, 0.0, 1.0))

def mahalanobis_cost(x: Sequence[float], y: Sequence[float], cov: CovarianceSpec) -> float:
    """exp of the Mahalanobis distance sqrt((x-y)^T S^-1 (x-y))."""
    delta = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    si = cov.S_inv
    return float(_exp_quad_distance(delta, si[0, 0], si[0, 1], si[1, 1]))


def variances_for_point(variant: CostVariant, d_norm: float) -> tuple[float, float]:
    """(sigma1_sq, sigma2_sq) for one annotation given its normalized distance."""
    if not 0.0 <= d_norm <= 1.0:
        raise ValueError(f"d_norm must be in [0, 1], got {d_norm}")
    if variant.kind == "euclidean":
        return (1.0, 1.0)
    if variant.kind == "view_ray":
        return (1.0, variant.sigma2_sq_fixed)
    if variant.kind == "distance_adjusted":
        s = 1.0 / np.exp(variant.alpha * d_norm)
        return (float(s), float(s))
    # mahalanobis: unit along-ray variance, relaxed perpendicular far away
    return (1.0, float(np.exp(variant.alpha * d_norm)))


def build_cost_matrix(
    grid: GroundGrid,
    gt: DotMap,
    cameras: Sequence[Camera],
    variant: CostVariant,
    mode: DistanceMode = "full3d",
) -> CostMatrix:
    """Costs from every grid-cell center to every ground-truth point.

    Each column selects its nearest camera (ties to the lowest id), derives
    the view-ray angle and camera distance there, and normalizes the
    distances over the frame's annotations before converting them to
    variances. A point under its camera has no ray direction; its column
    falls back to the unit isotropic covariance.
    """
    if gt.count == 0:
        raise ValueError("ground-truth dot map is empty")
    if variant.needs_cameras and len(cameras) == 0:
        raise ValueError(f"cost kind {variant.kind!r} requires at least one camera")

    cells = grid.cell_centers_units()
    gt_units = grid.world_to_cell_units(gt.points)

    have_cams = len(cameras) > 0
    if have_cams:
        sel = [closest_camera(cameras, p, mode) for p in gt.points]
        d_cam = np.array([camera_distance(cameras[k], p, mode) for k, p in zip(sel, gt.points)])
        d_norm = min_max_normalize(d_cam)
    else:
        sel = [-1] * gt.count
        d_cam = np.full(gt.count, np.nan)
        d_norm = np.full(gt.count, np.nan)

    values = np.empty((grid.n_cells, gt.count))
    meta = []
    for j in range(gt.count):
        beta = 0.0
        if have_cams:
            try:
                beta = view_ray_angle(cameras[sel[j]], gt.points[j])
                degenerate = False
            except DegenerateRayError:
                degenerate = True
        if variant.kind == "euclidean" or not have_cams:
            s1, s2 = 1.0, 1.0
        elif degenerate:
            s1, s2 = 1.0, 1.0
        else:
            s1, s2 = variances_for_point(variant, float(d_norm[j]))
        cov = build_covariance(beta, s1, s2)
        si = cov.S_inv
        delta = cells - gt_units[j]
        values[:, j] = _exp_quad_distance(delta, si[0, 0], si[0, 1], si[1, 1])
        cam_id = cameras[sel[j]].id if have_cams else -1
        meta.append(ColumnMeta(cam_id, beta, s1, s2, float(d_cam[j]), float(d_norm[j])))

    return CostMatrix(values=values, column_meta=tuple(meta))
