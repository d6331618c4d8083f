"""Render a scene with projection-streak artifacts, then fit density maps
under the MSE baseline and the anisotropic transport loss and compare what
the peak extractor recovers from each.

Run:  python demos/03_streaked_scene_fit.py   (takes a few seconds)
"""

from pathlib import Path

from groundot import (
    CostVariant,
    GroundGrid,
    SceneSpec,
    StreakParams,
    UotParams,
    build_cost_matrix,
    compute_metrics,
    extract_points_nms,
    match_points,
    place_camera_ring,
    render_streaked_density,
    sample_scene,
    splat_gaussian,
)
from groundot.io_formats import write_pgm
from groundot.simulator import FitParams, fit_density

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

grid = GroundGrid(rows=64, cols=64, cell_size=0.1)
cameras = place_camera_ring(grid, 5, height=4.0)
spec = SceneSpec(grid=grid, cameras=cameras, num_people=25,
                 min_separation=0.5, seed=12, cluster_fraction=0.3)
streaks = StreakParams(base_sigma=3.0, elongation_per_meter=0.8,
                       noise_std=0.03, clutter_rate=4.0)

dots = sample_scene(spec)
render = render_streaked_density(dots, cameras, grid, streaks, seed=spec.seed)
write_pgm(out / "streaked_render.pgm", render.values)
print(f"scene: {dots.count} people; streaked render mass {render.total_mass:.2f} "
      "(clutter and noise included)")


def evaluate(density, name):
    threshold = max(0.3 * float(density.values.max()), 1e-4)
    found = extract_points_nms(density, threshold=threshold, radius=1)
    report = compute_metrics(match_points(found, dots, 0.5))
    print(f"{name:>12}: {found.count} detections, moda {report.moda:.3f}, "
          f"precision {report.precision:.3f}, recall {report.recall:.3f}")
    return report


# Baseline: regress the density toward a fixed-width Gaussian splat.
target = splat_gaussian(dots, grid, 3.0 * grid.cell_size)
mse_fit = fit_density(dots, grid=grid, loss="mse", target=target,
                      fit=FitParams(step_size=0.3 * grid.n_cells, iterations=60,
                                    latent=False),
                      init_density=render)
write_pgm(out / "fit_mse.pgm", mse_fit.density.values)
evaluate(mse_fit.density, "mse")

# Transport loss with view-ray anisotropy and camera-distance adjustment.
cost = build_cost_matrix(grid, dots, cameras, CostVariant(kind="mahalanobis", alpha=0.2))
uot_fit = fit_density(dots, grid=grid, loss="uot", cost=cost,
                      uot=UotParams(epsilon=0.05, tau=3.0, max_iters=80),
                      fit=FitParams(step_size=0.05, iterations=60),
                      init_density=render)
write_pgm(out / "fit_transport.pgm", uot_fit.density.values)
evaluate(uot_fit.density, "transport")

print(f"\nheatmaps in {out}/: the MSE fit reproduces blurred blobs that merge")
print("inside clusters, while the transport fit collapses mass onto per-person")
print("peaks despite the along-ray smearing in the initialization.")
