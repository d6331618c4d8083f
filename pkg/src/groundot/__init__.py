"""Geometry-aware unbalanced optimal-transport losses for ground-plane crowd localization."""

from .config import EvalSettings, ExperimentConfig, parse_config
from .errors import ConfigError, DegenerateRayError, NumericalError, PlacementError
from .eval_metrics import MatchingOutcome, MetricsReport, compute_metrics, match_points
from .geometry import (
    Camera,
    CovarianceSpec,
    GroundGrid,
    ViewRayFrame,
    build_covariance,
    camera_distance,
    cell_to_world,
    closest_camera,
    min_max_normalize,
    view_ray_angle,
    view_ray_frame,
)
from .localization import DensityMap, DotMap, extract_points_nms, mse_loss, splat_gaussian
from .ot_cost import (
    ColumnMeta,
    CostMatrix,
    CostVariant,
    build_cost_matrix,
    euclidean_cost,
    mahalanobis_cost,
    variances_for_point,
)
from .simulator import (
    FitParams,
    FitResult,
    SceneSpec,
    StreakParams,
    fit_density,
    place_camera_ring,
    render_streaked_density,
    run_comparison,
    sample_scene,
)
from .uot_solver import (
    TransportPlan,
    UotParams,
    UotResult,
    brute_force_solve,
    loss_gradient_wrt_density,
    solve_uot,
    uot_objective,
)

__version__ = "0.1.0"

__all__ = [
    "Camera",
    "ColumnMeta",
    "ConfigError",
    "CostMatrix",
    "CostVariant",
    "CovarianceSpec",
    "DegenerateRayError",
    "DensityMap",
    "DotMap",
    "EvalSettings",
    "ExperimentConfig",
    "FitParams",
    "FitResult",
    "GroundGrid",
    "MatchingOutcome",
    "MetricsReport",
    "NumericalError",
    "PlacementError",
    "SceneSpec",
    "StreakParams",
    "TransportPlan",
    "UotParams",
    "UotResult",
    "ViewRayFrame",
    "brute_force_solve",
    "build_cost_matrix",
    "build_covariance",
    "camera_distance",
    "cell_to_world",
    "closest_camera",
    "compute_metrics",
    "euclidean_cost",
    "extract_points_nms",
    "fit_density",
    "loss_gradient_wrt_density",
    "mahalanobis_cost",
    "match_points",
    "min_max_normalize",
    "mse_loss",
    "parse_config",
    "place_camera_ring",
    "render_streaked_density",
    "run_comparison",
    "sample_scene",
    "solve_uot",
    "splat_gaussian",
    "uot_objective",
    "variances_for_point",
    "view_ray_angle",
    "view_ray_frame",
]
