"""Small builders shared by the test modules."""
import math

import numpy as np

from dynnav.planner import ConstraintSet, PlannerConfig, ReferenceTrajectory, cost, cost_gradient
from dynnav.scenario import parse_scenario
from dynnav.world import ObstacleScript, Pose2D, RobotConfig, RobotState, Scenario, SensorConfig

WAYPOINTS_X10 = ((0.0, 0.0), (2.5, 0.0), (5.0, 0.0), (7.5, 0.0), (10.0, 0.0))


def disc(x, y, r=0.5, oid=0, height=2.0):
    return ObstacleScript("disc", ((0.0, x, y),), radius=r, height=height, id=oid)


def square(x, y, half=0.5, oid=0):
    verts = ((-half, -half), (half, -half), (half, half), (-half, half))
    return ObstacleScript("polygon", ((0.0, x, y),), vertices=verts, id=oid)


def scenario(static=(), dynamic=(), start=(0.0, 0.0, 0.0), goal=(10.0, 0.0, 0.3),
             sensor=SensorConfig(), robot=RobotConfig(), bounds=(-20.0, -20.0, 20.0, 20.0),
             waypoints=WAYPOINTS_X10, max_steps=200, seed=0, **sections):
    return Scenario(
        name="test",
        map_bounds=bounds,
        static_obstacles=tuple(static),
        dynamic_obstacles=tuple(dynamic),
        start=Pose2D(*start),
        goal=goal,
        waypoints=tuple(waypoints),
        sensor=sensor,
        robot=robot,
        max_steps=max_steps,
        seed=seed,
        **sections,
    )


def minimal_doc(**overrides):
    """A valid scenario document with one static disc."""
    doc = {
        "map": {"bounds": [-5, -5, 15, 5]},
        "robot": {"start": [0, 0, 0], "goal": [10, 0], "goal_tolerance": 0.3},
        "sensor": {"n_beams": 90, "max_range": 8.0, "range_noise_sigma": 0.0},
        "waypoints": [[0, 0], [2.5, 0], [5, 0], [7.5, 0], [10, 0]],
        "obstacles": [{"shape": "disc", "radius": 0.5, "motion": "static", "position": [5, 2]}],
        "dt": 0.1,
        "max_steps": 50,
        "seed": 0,
    }
    doc.update(overrides)
    return doc


def rot(phi):
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, -s], [s, c]])


def load_doc(doc, seed=None):
    return parse_scenario(doc, "test", seed=seed)


def constraint_set(xy, eta=None):
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    eta = np.ones(len(xy)) if eta is None else np.asarray(eta, dtype=float)
    return ConstraintSet(xy, eta, np.zeros(len(xy), dtype=bool))


def random_instance(rng, h):
    cfg = PlannerConfig(horizon=h, rho=float(rng.uniform(0.5, 20)), d_safe=float(rng.uniform(0.2, 1.0)),
                        q=tuple(rng.uniform(0.1, 2, 3)), r=tuple(rng.uniform(0.01, 1, 2)))
    state = RobotState(Pose2D(*rng.uniform(-1, 1, 2), float(rng.uniform(-1, 1))))
    refs = np.column_stack([np.cumsum(rng.uniform(0, 0.1, h + 1)), rng.normal(0, 0.2, h + 1),
                            rng.normal(0, 0.3, h + 1)])
    ref = ReferenceTrajectory(refs)
    u = np.column_stack([rng.uniform(-1, 1.2, h), rng.uniform(-1.5, 1.5, h)])
    # rough rollout so points land near the path and constraints are active
    m = int(rng.integers(1, 21))
    near = state.pose.xy + rng.uniform(-1, 1, (m, 2)) * [1.5, 1.0] + [0.5 * h * 0.1, 0]
    pts = constraint_set(near, rng.uniform(1.0, 3.0, m))
    return u, state, ref, pts, cfg


def _fd_gradient(u, state, ref, pts, cfg, h=1e-5):
    g = np.zeros_like(u)
    for idx in np.ndindex(*u.shape):
        up, dn = u.copy(), u.copy()
        up[idx] += h
        dn[idx] -= h
        g[idx] = (cost(up, state, ref, pts, cfg).total - cost(dn, state, ref, pts, cfg).total) / (2 * h)
    return g


def gradient_errors(n=100, seed=2024):
    rng = np.random.default_rng(seed)
    errs, active = [], 0
    for _ in range(n):
        u, state, ref, pts, cfg = random_instance(rng, int(rng.integers(1, 11)))
        ga = cost_gradient(u, state, ref, pts, cfg)
        gf = _fd_gradient(u, state, ref, pts, cfg)
        errs.append(np.linalg.norm(ga - gf) / max(np.linalg.norm(gf), 1e-8))
        active += cost(u, state, ref, pts, cfg).obstacle > 0
    return np.array(errs), active
