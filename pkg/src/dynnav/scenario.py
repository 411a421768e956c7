"""JSON scenario files.

Top-level keys: ``map``, ``robot``, ``sensor``, ``waypoints``, ``obstacles``,
``dt``, ``max_steps``, ``seed``; optional ``name``, ``planner``,
``prediction``, ``perception``. See ``scenarios/*.json`` for the shipped set.
"""
from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path

import numpy as np

from .world import (
    ObstacleScript,
    Pose2D,
    RobotConfig,
    Scenario,
    SensorConfig,
    is_convex_ccw,
)

CANONICAL = ("freespace", "crossing", "dense-static", "dense-dynamic")
REQUIRED_KEYS = ("map", "robot", "sensor", "waypoints", "obstacles", "dt", "max_steps", "seed")


class ScenarioError(ValueError):
    """Raised for unreadable or invalid scenario files."""


def _num(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ScenarioError(f"{where}: expected a finite number, got {value!r}")
    return float(value)


def _pair(value, where):
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ScenarioError(f"{where}: expected [x, y]")
    return (_num(value[0], f"{where}[0]"), _num(value[1], f"{where}[1]"))


def _obstacle(raw: dict, idx: int) -> ObstacleScript:
    where = f"obstacles[{idx}]"
    if not isinstance(raw, dict):
        raise ScenarioError(f"{where}: expected an object")
    shape = raw.get("shape")
    motion = raw.get("motion", "static")
    if motion == "static":
        if "position" not in raw:
            raise ScenarioError(f"{where}.position: required for static obstacles")
        x, y = _pair(raw["position"], f"{where}.position")
        waypath = ((0.0, x, y),)
    elif motion == "piecewise_linear":
        knots = raw.get("waypath")
        if not isinstance(knots, list) or len(knots) < 2:
            raise ScenarioError(f"{where}.waypath: need at least 2 [t, x, y] knots")
        waypath = []
        for k, knot in enumerate(knots):
            if not isinstance(knot, list) or len(knot) != 3:
                raise ScenarioError(f"{where}.waypath[{k}]: expected [t, x, y]")
            waypath.append(tuple(_num(v, f"{where}.waypath[{k}]") for v in knot))
        times = [k[0] for k in waypath]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ScenarioError(f"{where}.waypath: times must be strictly increasing")
        waypath = tuple(waypath)
    else:
        raise ScenarioError(f"{where}.motion: expected 'static' or 'piecewise_linear', got {motion!r}")

    height = _num(raw.get("height", 2.0), f"{where}.height")
    oid = int(raw.get("id", idx))
    if shape == "disc":
        radius = _num(raw.get("radius"), f"{where}.radius")
        if radius <= 0:
            raise ScenarioError(f"{where}.radius: must be positive")
        return ObstacleScript("disc", waypath, radius=radius, height=height, id=oid)
    if shape == "polygon":
        verts = raw.get("vertices")
        if not isinstance(verts, list):
            raise ScenarioError(f"{where}.vertices: required for polygons")
        verts = tuple(_pair(v, f"{where}.vertices[{k}]") for k, v in enumerate(verts))
        if not is_convex_ccw(verts):
            raise ScenarioError(f"{where}.vertices: polygon must be convex and counterclockwise")
        return ObstacleScript("polygon", waypath, vertices=verts, height=height, id=oid)
    raise ScenarioError(f"{where}.shape: expected 'disc' or 'polygon', got {shape!r}")


def _apply_jitter(ob: ObstacleScript, jitter: float, rng: np.random.Generator) -> ObstacleScript:
    off = rng.uniform(-jitter, jitter, size=2)
    knots = tuple((t, x + off[0], y + off[1]) for t, x, y in ob.waypath)
    return ObstacleScript(ob.shape, knots, ob.radius, ob.vertices, ob.height, ob.id)


def parse_scenario(doc: dict, name: str = "scenario", seed: int | None = None) -> Scenario:
    """Validate a decoded scenario document.

    ``seed`` overrides the file's seed; it also drives the optional per-obstacle
    ``jitter`` (uniform offset of the whole waypath, meters).
    """
    if not isinstance(doc, dict):
        raise ScenarioError("top level: expected an object")
    for key in REQUIRED_KEYS:
        if key not in doc:
            raise ScenarioError(f"{key}: missing required key")

    bounds = doc["map"].get("bounds") if isinstance(doc["map"], dict) else None
    if not isinstance(bounds, list) or len(bounds) != 4:
        raise ScenarioError("map.bounds: expected [xmin, ymin, xmax, ymax]")
    bounds = tuple(_num(b, "map.bounds") for b in bounds)
    if bounds[0] >= bounds[2] or bounds[1] >= bounds[3]:
        raise ScenarioError("map.bounds: empty rectangle")

    def inside(x, y):
        return bounds[0] <= x <= bounds[2] and bounds[1] <= y <= bounds[3]

    robot = doc["robot"]
    if not isinstance(robot, dict):
        raise ScenarioError("robot: expected an object")
    start = robot.get("start")
    if not isinstance(start, list) or len(start) != 3:
        raise ScenarioError("robot.start: expected [x, y, theta]")
    start = Pose2D(*(_num(v, "robot.start") for v in start))
    gx, gy = _pair(robot.get("goal"), "robot.goal")
    tol = _num(robot.get("goal_tolerance", 0.3), "robot.goal_tolerance")
    if tol <= 0:
        raise ScenarioError("robot.goal_tolerance: must be positive")
    if not inside(start.x, start.y):
        raise ScenarioError("robot.start: outside map bounds")
    if not inside(gx, gy):
        raise ScenarioError("robot.goal: outside map bounds")
    rcfg = RobotConfig(
        radius=_num(robot.get("radius", 0.4), "robot.radius"),
        v_max=_num(robot.get("v_max", 1.2), "robot.v_max"),
        omega_max=_num(robot.get("omega_max", 1.5), "robot.omega_max"),
    )
    if min(rcfg.radius, rcfg.v_max, rcfg.omega_max) <= 0:
        raise ScenarioError("robot: radius, v_max and omega_max must be positive")

    wps = doc["waypoints"]
    if not isinstance(wps, list):
        raise ScenarioError("waypoints: expected a list")
    if len(wps) != 5:
        raise ScenarioError(f"waypoints: expected 5, got {len(wps)}")
    wps = tuple(_pair(w, f"waypoints[{k}]") for k, w in enumerate(wps))

    s = doc["sensor"]
    if not isinstance(s, dict):
        raise ScenarioError("sensor: expected an object")
    defaults = SensorConfig()
    sensor = SensorConfig(
        n_beams=int(s.get("n_beams", defaults.n_beams)),
        fov=_num(s.get("fov", defaults.fov), "sensor.fov"),
        max_range=_num(s.get("max_range", defaults.max_range), "sensor.max_range"),
        range_noise_sigma=_num(s.get("range_noise_sigma", defaults.range_noise_sigma), "sensor.range_noise_sigma"),
        z_band=tuple(_pair(s.get("z_band", list(defaults.z_band)), "sensor.z_band")),
        beam_z_levels=tuple(_num(z, "sensor.beam_z_levels") for z in s.get("beam_z_levels", defaults.beam_z_levels)),
    )
    if sensor.n_beams < 1:
        raise ScenarioError("sensor.n_beams: must be >= 1")
    if sensor.max_range <= 0:
        raise ScenarioError("sensor.max_range: must be positive")
    if sensor.z_band[0] >= sensor.z_band[1]:
        raise ScenarioError("sensor.z_band: z_min must be below z_max")
    if sensor.range_noise_sigma < 0:
        raise ScenarioError("sensor.range_noise_sigma: must be >= 0")

    dt = _num(doc["dt"], "dt")
    if dt <= 0:
        raise ScenarioError(f"dt: must be positive, got {dt}")
    max_steps = doc["max_steps"]
    if isinstance(max_steps, bool) or not isinstance(max_steps, int) or max_steps < 1:
        raise ScenarioError("max_steps: expected a positive integer")
    file_seed = doc["seed"]
    if isinstance(file_seed, bool) or not isinstance(file_seed, int):
        raise ScenarioError("seed: expected an integer")
    seed = file_seed if seed is None else int(seed)

    if not isinstance(doc["obstacles"], list):
        raise ScenarioError("obstacles: expected a list")
    rng = np.random.default_rng([seed, 0])
    static, dynamic = [], []
    for idx, raw in enumerate(doc["obstacles"]):
        ob = _obstacle(raw, idx)
        jitter = _num(raw.get("jitter", 0.0), f"obstacles[{idx}].jitter")
        if jitter > 0:
            ob = _apply_jitter(ob, jitter, rng)
        (static if ob.motion == "static" else dynamic).append(ob)

    for key in ("planner", "prediction", "perception"):
        if not isinstance(doc.get(key, {}), dict):
            raise ScenarioError(f"{key}: expected an object")

    return Scenario(
        name=str(doc.get("name", name)),
        map_bounds=bounds,
        static_obstacles=tuple(static),
        dynamic_obstacles=tuple(dynamic),
        start=start,
        goal=(gx, gy, tol),
        waypoints=wps,
        sensor=sensor,
        robot=rcfg,
        dt=dt,
        max_steps=max_steps,
        seed=seed,
        planner=dict(doc.get("planner", {})),
        prediction=dict(doc.get("prediction", {})),
        perception=dict(doc.get("perception", {})),
    )


def read_scenario_doc(path) -> tuple[dict, str]:
    """Decode a scenario file, or a canonical scenario by name."""
    p = Path(path)
    if not p.exists() and str(path) in CANONICAL:
        text = resources.files("dynnav").joinpath("scenarios", f"{path}.json").read_text()
        label = str(path)
    else:
        try:
            text = p.read_text()
        except OSError as exc:
            raise ScenarioError(f"{path}: {exc.strerror or exc}") from exc
        label = p.stem
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return doc, label


def load_scenario(path, seed: int | None = None) -> Scenario:
    doc, label = read_scenario_doc(path)
    return parse_scenario(doc, name=label, seed=seed)
