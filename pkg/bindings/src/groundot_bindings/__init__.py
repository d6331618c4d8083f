"""Flat-array access to cost construction and the transport loss.

Host training loops that keep their state in plain numeric buffers call two
functions: ``bound_build_cost`` turns a scene plus annotations into a flat
row-major cost array, and ``bound_loss_and_grad`` evaluates the loss and its
gradient with respect to a flat density buffer. All arrays are 64-bit floats,
row-major, copied at the boundary; no state is retained between calls, so
concurrent callers get the same answers as serial ones. Heavy numeric work
happens inside numpy kernels, which release the interpreter lock.

Scene, variant, and solver parameters use the same dictionary schemas as the
groundot JSON files:

    scene   = {"grid": {"rows", "cols", "cell_size_m", "origin_m"},
               "cameras": [{"id", "x_m", "y_m", "height_m"}, ...]}
    variant = {"kind", "alpha", "sigma2_sq", "distance_mode"}
    uot     = {"epsilon", "tau", "max_iters", "tolerance", "stabilize"}
"""

from dataclasses import dataclass, field

import numpy as np

import groundot
from groundot import CostVariant, DotMap, UotParams, build_cost_matrix, solve_uot
from groundot.io_formats import scene_from_dict

__version__ = groundot.__version__

__all__ = ["FlatSolveRequest", "bound_build_cost", "bound_loss_and_grad", "__version__"]


def _as_points(gt_points) -> np.ndarray:
    pts = np.array(gt_points, dtype=float, copy=True)
    if pts.ndim == 1:
        if pts.size % 2 != 0:
            raise ValueError(f"flat gt_points length {pts.size} is not a multiple of 2")
        pts = pts.reshape(-1, 2)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"gt_points must be (m, 2) or flat (2m,), got shape {pts.shape}")
    return pts


def _variant(params: dict | None) -> tuple[CostVariant, str]:
    params = dict(params or {})
    mode = params.pop("distance_mode", "full3d")
    variant = CostVariant(
        kind=params.pop("kind", "mahalanobis"),
        sigma2_sq_fixed=params.pop("sigma2_sq", 1.2),
        alpha=params.pop("alpha", 0.05),
    )
    if params:
        raise ValueError(f"unknown variant keys: {sorted(params)}")
    return variant, mode


def _uot(params: dict | None) -> UotParams:
    params = dict(params or {})
    out = UotParams(
        epsilon=params.pop("epsilon", 0.05),
        tau=params.pop("tau", 1.0),
        max_iters=params.pop("max_iters", 10000),
        tolerance=params.pop("tolerance", 1e-9),
        stabilize=params.pop("stabilize", True),
    )
    if params:
        raise ValueError(f"unknown uot keys: {sorted(params)}")
    return out


@dataclass(frozen=True)
class FlatSolveRequest:
    """One loss evaluation: flat density, annotations, scene, parameters.

    ``density`` is the length-n row-major density buffer for the scene grid;
    ``gt_points`` holds the m annotation coordinates in meters, flat or
    (m, 2). ``variant`` and ``uot`` follow the dictionary schemas above.
    """

    density: np.ndarray = field(repr=False)
    gt_points: np.ndarray = field(repr=False)
    scene: dict
    variant: dict | None = None
    uot: dict | None = None


def bound_build_cost(scene: dict, gt_points, variant: dict | None = None):
    """Flat row-major n x m cost array plus per-annotation metadata.

    Entry i*m + j is the cost from grid cell i (row-major) to annotation j.
    The metadata list carries one dict per annotation: selected camera id,
    view-ray angle, the two variances, and the raw/normalized camera
    distances. Invalid arguments raise the library's own exceptions.
    """
    grid, cameras = scene_from_dict(scene)
    pts = _as_points(gt_points)
    var, mode = _variant(variant)
    cost = build_cost_matrix(grid, DotMap(points=pts), cameras, var, mode)
    meta = [
        {
            "camera_id": m.camera_id,
            "beta": m.beta,
            "sigma1_sq": m.sigma1_sq,
            "sigma2_sq": m.sigma2_sq,
            "d_cam": m.d_cam,
            "d_norm": m.d_norm,
        }
        for m in cost.column_meta
    ]
    return cost.values.ravel().copy(), meta


def bound_loss_and_grad(request: FlatSolveRequest):
    """Loss value and length-n gradient for the request's density buffer.

    The gradient is row-major aligned with the input density. Each call
    builds its own solver state, so calls are independent and thread-safe.
    """
    grid, cameras = scene_from_dict(request.scene)
    density = np.array(request.density, dtype=float, copy=True).ravel()
    if density.size != grid.n_cells:
        raise ValueError(
            f"density length {density.size} does not match the {grid.rows}x{grid.cols} grid"
        )
    pts = _as_points(request.gt_points)
    var, mode = _variant(request.variant)
    params = _uot(request.uot)
    dots = DotMap(points=pts)
    cost = build_cost_matrix(grid, dots, cameras, var, mode)
    result = solve_uot(density, dots.weights, cost, params)
    return result.loss, result.grad_density.copy()
