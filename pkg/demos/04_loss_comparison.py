"""Multi-seed comparison across the loss family, writing a results table.

This is a small version of the experiment behind the acceptance suite's
ordering checks (there: 20 seeds). Run:  python demos/04_loss_comparison.py
"""

from pathlib import Path

from groundot import (
    CostVariant,
    GroundGrid,
    SceneSpec,
    StreakParams,
    UotParams,
    place_camera_ring,
    run_comparison,
)
from groundot.io_formats import write_results_csv
from groundot.simulator import FitParams

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

grid = GroundGrid(rows=64, cols=64, cell_size=0.1)
cameras = place_camera_ring(grid, 5, height=4.0)
spec = SceneSpec(grid=grid, cameras=cameras, num_people=30,
                 min_separation=0.5, seed=300, cluster_fraction=0.3)
streaks = StreakParams(base_sigma=3.0, elongation_per_meter=0.8,
                       noise_std=0.03, clutter_rate=5.0)

variants = [
    "mse",
    CostVariant(kind="euclidean"),
    CostVariant(kind="view_ray", sigma2_sq_fixed=1.2),
    CostVariant(kind="distance_adjusted", alpha=0.2),
    CostVariant(kind="mahalanobis", alpha=0.2),
]

rows, _ = run_comparison(spec, streaks, variants, trials=5,
                         uot=UotParams(epsilon=0.05, tau=3.0, max_iters=80),
                         fit=FitParams(step_size=0.05, iterations=60),
                         nms_radius=1)
write_results_csv(out / "comparison.csv", rows)

print(f"{'variant':>24}  {'moda':>6}  {'modp':>6}  {'prec':>6}  {'recall':>6}  {'f1':>6}")
for row in rows:
    if row["seed"] == "mean":
        print(f"{row['variant']:>24}  {row['moda']:6.3f}  {row['modp']:6.3f}  "
              f"{row['precision']:6.3f}  {row['recall']:6.3f}  {row['f1']:6.3f}")
print(f"\nfull per-seed table: {out / 'comparison.csv'}")
