"""Command-line front end.

Subcommands: simulate, solve, fit, compare, eval, cost-viz. Exit codes:
0 success, 2 validation error, 3 numerical error, 4 I/O or parse error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io_formats as io
from .config import ExperimentConfig, parse_config
from .errors import ConfigError, NumericalError, PlacementError
from .eval_metrics import compute_metrics, match_points
from .localization import DensityMap, extract_points_nms, splat_gaussian
from .ot_cost import CostVariant, build_cost_matrix
from .simulator import (
    fit_density,
    render_streaked_density,
    run_comparison,
    sample_scene,
    variant_label,
)
from .uot_solver import UotParams, solve_uot

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _load_config(args) -> ExperimentConfig:
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as e:
        raise _IOFailure(f"cannot read config {args.config}: {e}") from e
    try:
        cfg = parse_config(text)
    except json.JSONDecodeError as e:
        raise _IOFailure(f"{args.config}:{e.lineno}:{e.colno}: malformed JSON: {e.msg}") from e
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, scene=replace(cfg.scene, seed=args.seed))
    if getattr(args, "out", None) is not None:
        cfg = replace(cfg, output=args.out)
    if getattr(args, "threads", None) is not None:
        cfg = replace(cfg, threads=args.threads)
    return cfg


class _IOFailure(Exception):
    pass


def _outdir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = _outdir(cfg)
    dots = sample_scene(cfg.scene)
    render = render_streaked_density(dots, cfg.scene.cameras, cfg.scene.grid,
                                     cfg.streaks, seed=cfg.scene.seed)
    io.write_dots_csv(out / "dots.csv", dots)
    io.write_density_csv(out / "density.csv", render)
    io.write_scene_json(out / "scene.json", cfg.scene.grid, cfg.scene.cameras)
    print(f"simulated {dots.count} people, density mass {render.total_mass:.4f}"
          f" -> {out}/dots.csv, density.csv, scene.json")
    return EXIT_OK


def cmd_solve(args) -> int:
    density = io.read_density_csv(args.density)
    dots = io.read_dots_csv(args.dots)
    grid, cameras = io.read_scene_json(args.scene)
    dg = density.grid
    if (dg.rows, dg.cols) != (grid.rows, grid.cols) or dg.cell_size != grid.cell_size:
        raise ConfigError(
            "density", f"grid {dg.rows}x{dg.cols}@{dg.cell_size} does not match scene "
                       f"{grid.rows}x{grid.cols}@{grid.cell_size}")
    density = DensityMap(grid=grid, values=density.values)
    variant = CostVariant(kind=args.variant, sigma2_sq_fixed=args.sigma2, alpha=args.alpha)
    cost = build_cost_matrix(grid, dots, cameras, variant, args.distance_mode)
    params = UotParams(epsilon=args.epsilon, tau=args.tau)
    result = solve_uot(density.flat, dots.weights, cost, params)
    print(f"loss={result.loss:.12g} iterations={result.iterations} converged={result.converged}")
    if args.grad_out:
        # written raw rather than through DensityMap: gradient values are signed
        lines = [f"{grid.rows},{grid.cols},{grid.cell_size:.17g}"]
        g2 = result.grad_density.reshape(grid.rows, grid.cols)
        for r in range(grid.rows):
            lines.append(",".join(f"{v:.17g}" for v in g2[r]))
        Path(args.grad_out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = _load_config(args)
    out = _outdir(cfg)
    dots = sample_scene(cfg.scene)
    render = render_streaked_density(dots, cfg.scene.cameras, cfg.scene.grid,
                                     cfg.streaks, seed=cfg.scene.seed)
    grid = cfg.scene.grid
    variant = cfg.variants[0]
    if variant == "mse":
        target = splat_gaussian(dots, grid, 3.0 * grid.cell_size)
        fitres = fit_density(dots, grid=grid, loss="mse", target=target,
                             fit=cfg.fit, init_density=render)
    else:
        cost = build_cost_matrix(grid, dots, cfg.scene.cameras, variant, cfg.distance_mode)
        fitres = fit_density(dots, grid=grid, loss="uot", cost=cost, uot=cfg.uot,
                             fit=cfg.fit, init_density=render)
    thr = max(cfg.eval.nms_threshold_frac * float(fitres.density.values.max()),
              cfg.eval.nms_floor)
    pred = extract_points_nms(fitres.density, threshold=thr, radius=cfg.eval.nms_radius)
    report = compute_metrics(match_points(pred, dots, cfg.eval.threshold_m))
    io.write_density_csv(out / "fitted_density.csv", fitres.density)
    io.write_dots_csv(out / "dots.csv", dots)
    io.write_dots_csv(out / "predicted.csv", pred)
    label = variant_label(variant)
    print(f"fit [{label}] final_loss={fitres.final_loss:.6g} detections={pred.count}"
          f" moda={report.moda:.4f} f1={report.f1:.4f} -> {out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load_config(args)
    out = _outdir(cfg)
    rows, densities = run_comparison(
        cfg.scene, cfg.streaks, list(cfg.variants), cfg.trials,
        uot=cfg.uot, fit=cfg.fit,
        match_threshold=cfg.eval.threshold_m,
        nms_threshold_frac=cfg.eval.nms_threshold_frac,
        nms_floor=cfg.eval.nms_floor, nms_radius=cfg.eval.nms_radius,
        mode=cfg.distance_mode, threads=cfg.threads,
    )
    io.write_results_csv(out / "results.csv", rows)
    for label, density in densities.items():
        io.write_pgm(out / f"density_{label}_seed{cfg.scene.seed}.pgm", density.values)
    for row in rows:
        if row["seed"] == "mean":
            print(f"{row['variant']}: moda={row['moda']:.4f} modp={row['modp']:.4f}"
                  f" precision={row['precision']:.4f} recall={row['recall']:.4f}"
                  f" f1={row['f1']:.4f}")
    print(f"wrote {out / 'results.csv'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    pred = io.read_dots_csv(args.pred)
    gt = io.read_dots_csv(args.gt)
    outcome = match_points(pred, gt, args.threshold)
    report = compute_metrics(outcome)
    print(f"tp={outcome.tp} fp={outcome.fp} fn={outcome.fn}")
    print(f"moda={report.moda:.6g} modp={report.modp:.6g} precision={report.precision:.6g}"
          f" recall={report.recall:.6g} f1={report.f1:.6g}")
    return EXIT_OK


def cmd_cost_viz(args) -> int:
    cfg = _load_config(args)
    out = _outdir(cfg)
    dots = io.read_dots_csv(args.dots) if args.dots else sample_scene(cfg.scene)
    grid = cfg.scene.grid
    variant = cfg.variants[0]
    if variant == "mse":
        raise ConfigError("variants[0]", "cost-viz needs a transport cost variant, not 'mse'")
    cost = build_cost_matrix(grid, dots, cfg.scene.cameras, variant, cfg.distance_mode)
    j = args.point_index
    if not 0 <= j < dots.count:
        raise ConfigError("point_index", f"must be in [0, {dots.count})")
    # exp-costs span hundreds of orders of magnitude; the log (the distance
    # field itself) is what renders as readable iso-contours
    column = np.log(cost.values[:, j]).reshape(grid.rows, grid.cols)
    label = variant_label(variant)
    io.write_pgm(out / f"cost_{label}_point{j}.pgm", column)
    io.write_column_meta_csv(out / f"cost_{label}_meta.csv", cost)
    print(f"wrote {out}/cost_{label}_point{j}.pgm and cost_{label}_meta.csv")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="groundot",
        description="Geometry-aware unbalanced optimal-transport losses for "
                    "ground-plane crowd localization",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p):
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="scene seed (overrides config)")
        p.add_argument("--threads", type=int, help="worker threads (overrides config)")

    p = sub.add_parser("simulate", help="sample a scene and render its streaked density")
    add_config_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("solve", help="solve the transport problem for a density/dots pair")
    p.add_argument("density", help="density CSV")
    p.add_argument("dots", help="ground-truth dots CSV")
    p.add_argument("scene", help="scene JSON (grid + cameras)")
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--variant", default="mahalanobis",
                   choices=["euclidean", "view_ray", "distance_adjusted", "mahalanobis"])
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--sigma2", type=float, default=1.2)
    p.add_argument("--distance-mode", default="full3d", choices=["full3d", "ground2d"])
    p.add_argument("--grad-out", help="write the density gradient map CSV here")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("fit", help="fit a density map to a sampled scene")
    add_config_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("compare", help="run the multi-variant comparison experiment")
    add_config_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("eval", help="evaluate predicted dots against ground truth")
    p.add_argument("pred", help="predicted dots CSV")
    p.add_argument("gt", help="ground-truth dots CSV")
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cost-viz", help="dump one ground-truth point's cost column as a heatmap")
    add_config_flags(p)
    p.add_argument("--dots", help="dots CSV (default: sample the configured scene)")
    p.add_argument("--point-index", type=int, default=0)
    p.set_defaults(func=cmd_cost_viz)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, PlacementError, ValueError, IndexError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (_IOFailure, OSError, json.JSONDecodeError) as e:
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
