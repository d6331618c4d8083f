"""Experiment configuration: JSON parsing, validation, defaults, round-trip."""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import ConfigError
from .geometry import Camera, GroundGrid
from .ot_cost import COST_KINDS, CostVariant
from .simulator import FitParams, SceneSpec, StreakParams
from .uot_solver import UotParams

_DISTANCE_MODES = ("full3d", "ground2d")


@dataclass(frozen=True)
class EvalSettings:
    threshold_m: float = 0.5
    nms_threshold_frac: float = 0.3
    nms_floor: float = 1e-4
    nms_radius: int = 3

    def __post_init__(self):
        if not self.threshold_m > 0:
            raise ValueError("threshold_m must be > 0")
        if not 0 < self.nms_threshold_frac <= 1:
            raise ValueError("nms_threshold_frac must be in (0, 1]")
        if not self.nms_floor > 0:
            raise ValueError("nms_floor must be > 0")
        if self.nms_radius < 1:
            raise ValueError("nms_radius must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    scene: SceneSpec
    streaks: StreakParams
    uot: UotParams
    cost: CostVariant
    distance_mode: str
    fit: FitParams
    eval: EvalSettings
    variants: tuple
    trials: int
    output: str
    threads: int

    def to_json_dict(self) -> dict:
        grid = self.scene.grid
        def variant_dict(v):
            if v == "mse":
                return "mse"
            return {"kind": v.kind, "alpha": v.alpha, "sigma2_sq": v.sigma2_sq_fixed}
        return {
            "scene": {
                "grid": {
                    "rows": grid.rows, "cols": grid.cols,
                    "cell_size_m": grid.cell_size, "origin_m": list(grid.origin),
                },
                "cameras": [
                    {"id": c.id, "x_m": c.position[0], "y_m": c.position[1],
                     "height_m": c.position[2]}
                    for c in self.scene.cameras
                ],
                "num_people": self.scene.num_people,
                "min_separation_m": self.scene.min_separation,
                "seed": self.scene.seed,
                "cluster_fraction": self.scene.cluster_fraction,
            },
            "streaks": {
                "base_sigma_cells": self.streaks.base_sigma,
                "elongation_per_meter": self.streaks.elongation_per_meter,
                "noise_std": self.streaks.noise_std,
                "clutter_rate": self.streaks.clutter_rate,
            },
            "uot": {
                "epsilon": self.uot.epsilon, "tau": self.uot.tau,
                "max_iters": self.uot.max_iters, "tolerance": self.uot.tolerance,
                "stabilize": self.uot.stabilize,
            },
            "cost": {
                "kind": self.cost.kind, "alpha": self.cost.alpha,
                "sigma2_sq": self.cost.sigma2_sq_fixed,
                "distance_mode": self.distance_mode,
            },
            "fit": {
                "step_size": self.fit.step_size, "iterations": self.fit.iterations,
                "init": self.fit.init, "latent": self.fit.latent,
            },
            "eval": {
                "threshold_m": self.eval.threshold_m,
                "nms_threshold_frac": self.eval.nms_threshold_frac,
                "nms_floor": self.eval.nms_floor,
                "nms_radius": self.eval.nms_radius,
            },
            "variants": [variant_dict(v) for v in self.variants],
            "trials": self.trials,
            "output": self.output,
            "threads": self.threads,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)


class _Block:
    """Dict wrapper that tracks consumed keys and reports dotted key paths."""

    def __init__(self, data: dict, path: str):
        if not isinstance(data, dict):
            raise ConfigError(path, f"expected an object, got {type(data).__name__}")
        self.data = data
        self.path = path
        self.seen: set[str] = set()

    def _path(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def has(self, key: str) -> bool:
        return key in self.data

    def child(self, key: str, required: bool = False) -> "_Block | None":
        self.seen.add(key)
        if key not in self.data:
            if required:
                raise ConfigError(self._path(key), "required block is missing")
            return None
        return _Block(self.data[key], self._path(key))

    def get(self, key: str, default, kind):
        self.seen.add(key)
        if key not in self.data:
            if default is None:
                raise ConfigError(self._path(key), "required value is missing")
            return default
        value = self.data[key]
        if kind is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(self._path(key), f"expected a number, got {value!r}")
            return float(value)
        if kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(self._path(key), f"expected an integer, got {value!r}")
            return value
        if kind is bool:
            if not isinstance(value, bool):
                raise ConfigError(self._path(key), f"expected a boolean, got {value!r}")
            return value
        if kind is str:
            if not isinstance(value, str):
                raise ConfigError(self._path(key), f"expected a string, got {value!r}")
            return value
        if kind is list:
            if not isinstance(value, list):
                raise ConfigError(self._path(key), f"expected a list, got {value!r}")
            return value
        raise AssertionError(kind)

    def check(self, key: str, condition: bool, message: str):
        if not condition:
            raise ConfigError(self._path(key), message)

    def reject_unknown(self):
        unknown = set(self.data) - self.seen
        if unknown:
            raise ConfigError(self._path(sorted(unknown)[0]), "unknown key")


def _parse_variant(obj, path: str) -> CostVariant | str:
    if obj == "mse":
        return "mse"
    block = _Block(obj, path)
    kind = block.get("kind", None, str)
    block.check("kind", kind in COST_KINDS, f"must be one of {COST_KINDS} or 'mse'")
    alpha = block.get("alpha", 0.05, float)
    block.check("alpha", alpha >= 0, "must be >= 0")
    sigma2 = block.get("sigma2_sq", 1.2, float)
    block.check("sigma2_sq", sigma2 >= 1, "must be >= 1")
    block.reject_unknown()
    return CostVariant(kind=kind, sigma2_sq_fixed=sigma2, alpha=alpha)


def parse_config_dict(data: dict) -> ExperimentConfig:
    root = _Block(data, "")

    scene = root.child("scene", required=True)
    grid_block = scene.child("grid")
    if grid_block is None:
        grid = GroundGrid(rows=64, cols=64, cell_size=0.1)
    else:
        rows = grid_block.get("rows", 64, int)
        cols = grid_block.get("cols", 64, int)
        grid_block.check("rows", rows >= 1, "must be >= 1")
        grid_block.check("cols", cols >= 1, "must be >= 1")
        cell = grid_block.get("cell_size_m", 0.1, float)
        grid_block.check("cell_size_m", cell > 0, "must be > 0")
        origin = grid_block.get("origin_m", [0.0, 0.0], list)
        grid_block.check("origin_m", len(origin) == 2, "must be a pair [x, y]")
        grid_block.reject_unknown()
        grid = GroundGrid(rows=rows, cols=cols, cell_size=cell,
                          origin=(float(origin[0]), float(origin[1])))

    cam_list = scene.get("cameras", None, list)
    scene.check("cameras", len(cam_list) >= 1, "need at least one camera")
    cameras = []
    ids = set()
    for i, cam in enumerate(cam_list):
        cb = _Block(cam, f"scene.cameras[{i}]")
        cid = cb.get("id", None, int)
        cb.check("id", cid not in ids, "camera ids must be unique")
        ids.add(cid)
        x = cb.get("x_m", None, float)
        y = cb.get("y_m", None, float)
        h = cb.get("height_m", None, float)
        cb.check("height_m", h >= 0, "must be >= 0")
        cb.reject_unknown()
        cameras.append(Camera(id=cid, position=(x, y, h)))

    num_people = scene.get("num_people", None, int)
    scene.check("num_people", num_people >= 1, "must be >= 1")
    min_sep = scene.get("min_separation_m", 0.5, float)
    scene.check("min_separation_m", min_sep >= 0, "must be >= 0")
    seed = scene.get("seed", 0, int)
    cluster = scene.get("cluster_fraction", 0.0, float)
    scene.check("cluster_fraction", 0 <= cluster <= 1, "must be in [0, 1]")
    scene.reject_unknown()
    scene_spec = SceneSpec(grid=grid, cameras=tuple(cameras), num_people=num_people,
                           min_separation=min_sep, seed=seed, cluster_fraction=cluster)

    sb = root.child("streaks")
    if sb is None:
        streaks = StreakParams()
    else:
        base = sb.get("base_sigma_cells", 3.0, float)
        sb.check("base_sigma_cells", base > 0, "must be > 0")
        elong = sb.get("elongation_per_meter", 0.5, float)
        sb.check("elongation_per_meter", elong >= 0, "must be >= 0")
        noise = sb.get("noise_std", 0.0, float)
        sb.check("noise_std", noise >= 0, "must be >= 0")
        clutter = sb.get("clutter_rate", 0.0, float)
        sb.check("clutter_rate", clutter >= 0, "must be >= 0")
        sb.reject_unknown()
        streaks = StreakParams(base_sigma=base, elongation_per_meter=elong,
                               noise_std=noise, clutter_rate=clutter)

    ub = root.child("uot")
    if ub is None:
        uot = UotParams()
    else:
        epsilon = ub.get("epsilon", 0.05, float)
        ub.check("epsilon", epsilon > 0, "must be > 0")
        tau = ub.get("tau", 1.0, float)
        ub.check("tau", tau >= 0, "must be >= 0")
        max_iters = ub.get("max_iters", 10000, int)
        ub.check("max_iters", max_iters >= 1, "must be >= 1")
        tol = ub.get("tolerance", 1e-9, float)
        ub.check("tolerance", tol > 0, "must be > 0")
        stabilize = ub.get("stabilize", True, bool)
        ub.reject_unknown()
        uot = UotParams(epsilon=epsilon, tau=tau, max_iters=max_iters,
                        tolerance=tol, stabilize=stabilize)

    cb = root.child("cost")
    distance_mode = "full3d"
    if cb is None:
        cost = CostVariant()
    else:
        kind = cb.get("kind", "mahalanobis", str)
        cb.check("kind", kind in COST_KINDS, f"must be one of {COST_KINDS}")
        alpha = cb.get("alpha", 0.05, float)
        cb.check("alpha", alpha >= 0, "must be >= 0")
        sigma2 = cb.get("sigma2_sq", 1.2, float)
        cb.check("sigma2_sq", sigma2 >= 1, "must be >= 1")
        distance_mode = cb.get("distance_mode", "full3d", str)
        cb.check("distance_mode", distance_mode in _DISTANCE_MODES,
                 f"must be one of {_DISTANCE_MODES}")
        cb.reject_unknown()
        cost = CostVariant(kind=kind, sigma2_sq_fixed=sigma2, alpha=alpha)

    fb = root.child("fit")
    if fb is None:
        fit = FitParams()
    else:
        step = fb.get("step_size", 0.05, float)
        fb.check("step_size", step > 0, "must be > 0")
        iters = fb.get("iterations", 150, int)
        fb.check("iterations", iters >= 1, "must be >= 1")
        init = fb.get("init", "streaked-render", str)
        fb.check("init", init in ("uniform", "streaked-render"),
                 "must be 'uniform' or 'streaked-render'")
        latent = fb.get("latent", True, bool)
        fb.reject_unknown()
        fit = FitParams(step_size=step, iterations=iters, init=init, latent=latent)

    eb = root.child("eval")
    if eb is None:
        ev = EvalSettings()
    else:
        thr = eb.get("threshold_m", 0.5, float)
        eb.check("threshold_m", thr > 0, "must be > 0")
        frac = eb.get("nms_threshold_frac", 0.3, float)
        eb.check("nms_threshold_frac", 0 < frac <= 1, "must be in (0, 1]")
        floor = eb.get("nms_floor", 1e-4, float)
        eb.check("nms_floor", floor > 0, "must be > 0")
        radius = eb.get("nms_radius", 3, int)
        eb.check("nms_radius", radius >= 1, "must be >= 1")
        eb.reject_unknown()
        ev = EvalSettings(threshold_m=thr, nms_threshold_frac=frac,
                          nms_floor=floor, nms_radius=radius)

    root.seen.add("variants")
    if "variants" in data:
        if not isinstance(data["variants"], list) or not data["variants"]:
            raise ConfigError("variants", "expected a nonempty list")
        variants = tuple(
            _parse_variant(v, f"variants[{i}]") for i, v in enumerate(data["variants"])
        )
    else:
        variants = (cost,)

    trials = root.get("trials", 1, int)
    root.check("trials", trials >= 1, "must be >= 1")
    output = root.get("output", "out", str)
    threads = root.get("threads", 1, int)
    root.check("threads", threads >= 1, "must be >= 1")
    root.reject_unknown()

    return ExperimentConfig(scene=scene_spec, streaks=streaks, uot=uot, cost=cost,
                            distance_mode=distance_mode, fit=fit, eval=ev,
                            variants=variants, trials=trials, output=output,
                            threads=threads)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a JSON experiment config, filling defaults.

    Raises json.JSONDecodeError on malformed JSON and ConfigError (naming
    the dotted key path) on invalid or unknown entries.
    """
    return parse_config_dict(json.loads(text))
