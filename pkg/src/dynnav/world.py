"""Deterministic 2D world: scripted obstacles, raycast lidar, unicycle robot."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np


def wrap_angle(a: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    w = math.remainder(a, 2.0 * math.pi)
    return math.pi if w == -math.pi else w


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class RobotState:
    pose: Pose2D
    v: float = 0.0
    omega: float = 0.0


@dataclass(frozen=True)
class RobotConfig:
    radius: float = 0.4
    v_max: float = 1.2
    omega_max: float = 1.5


@dataclass(frozen=True)
class ControlCommand:
    v: float
    omega: float


@dataclass(frozen=True)
class ObstacleScript:
    """A disc or convex polygon following a piecewise-linear waypath.

    ``vertices`` are relative to the waypath position. A static obstacle has a
    single knot. Positions are held constant before the first knot and after
    the last one.
    """

    shape: str
    waypath: tuple[tuple[float, float, float], ...]
    radius: float = 0.0
    vertices: tuple[tuple[float, float], ...] = ()
    height: float = 2.0
    id: int = 0

    @property
    def motion(self) -> str:
        return "static" if len(self.waypath) == 1 else "piecewise_linear"

    def position_at(self, t: float) -> np.ndarray:
        knots = self.waypath
        if t <= knots[0][0] or len(knots) == 1:
            return np.array(knots[0][1:], dtype=float)
        for (t0, x0, y0), (t1, x1, y1) in zip(knots, knots[1:]):
            if t <= t1:
                a = (t - t0) / (t1 - t0)
                return np.array([x0 + a * (x1 - x0), y0 + a * (y1 - y0)])
        return np.array(knots[-1][1:], dtype=float)

    def velocity_at(self, t: float) -> np.ndarray:
        knots = self.waypath
        for (t0, x0, y0), (t1, x1, y1) in zip(knots, knots[1:]):
            if t0 <= t < t1:
                return np.array([(x1 - x0) / (t1 - t0), (y1 - y0) / (t1 - t0)])
        return np.zeros(2)

    def world_vertices(self, position) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float) + np.asarray(position, dtype=float)

    def signed_distance(self, position, point) -> float:
        """Distance from ``point`` to the obstacle boundary; negative inside."""
        point = np.asarray(point, dtype=float)
        if self.shape == "disc":
            return float(np.hypot(*(point - position)) - self.radius)
        return polygon_signed_distance(self.world_vertices(position), point)


def polygon_signed_distance(verts: np.ndarray, p: np.ndarray) -> float:
    """Signed distance from ``p`` to a convex counterclockwise polygon."""
    a = verts
    b = np.roll(verts, -1, axis=0)
    ab = b - a
    ap = p - a
    t = np.clip(np.einsum("ij,ij->i", ap, ab) / np.einsum("ij,ij->i", ab, ab), 0.0, 1.0)
    closest = a + t[:, None] * ab
    d = float(np.min(np.hypot(*(p - closest).T)))
    # inside iff p is left of every edge
    cross = ab[:, 0] * ap[:, 1] - ab[:, 1] * ap[:, 0]
    return -d if np.all(cross > 0.0) else d


def is_convex_ccw(verts) -> bool:
    v = np.asarray(verts, dtype=float)
    if v.ndim != 2 or v.shape[0] < 3:
        return False
    e = np.roll(v, -1, axis=0) - v
    en = np.roll(e, -1, axis=0)
    cross = e[:, 0] * en[:, 1] - e[:, 1] * en[:, 0]
    return bool(np.all(cross > 0.0))


@dataclass(frozen=True)
class SensorConfig:
    n_beams: int = 360
    fov: float = 2.0 * math.pi
    max_range: float = 10.0
    range_noise_sigma: float = 0.01
    z_band: tuple[float, float] = (0.1, 1.0)
    beam_z_levels: tuple[float, ...] = (0.05, 0.4, 0.8)

    def beam_angles(self) -> np.ndarray:
        """Beam directions in the body frame."""
        if self.fov >= 2.0 * math.pi - 1e-12:
            return -math.pi + 2.0 * math.pi * (np.arange(self.n_beams) + 0.5) / self.n_beams
        if self.n_beams == 1:
            return np.zeros(1)
        return np.linspace(-self.fov / 2.0, self.fov / 2.0, self.n_beams)


@dataclass(frozen=True)
class Scenario:
    name: str
    map_bounds: tuple[float, float, float, float]
    static_obstacles: tuple[ObstacleScript, ...]
    dynamic_obstacles: tuple[ObstacleScript, ...]
    start: Pose2D
    goal: tuple[float, float, float]
    waypoints: tuple[tuple[float, float], ...]
    sensor: SensorConfig = SensorConfig()
    robot: RobotConfig = RobotConfig()
    dt: float = 0.1
    max_steps: int = 400
    seed: int = 0
    # raw config sections, parsed by the modules that own them
    planner: dict = field(default_factory=dict)
    prediction: dict = field(default_factory=dict)
    perception: dict = field(default_factory=dict)

    @property
    def obstacles(self) -> tuple[ObstacleScript, ...]:
        return self.static_obstacles + self.dynamic_obstacles


@dataclass(frozen=True)
class ObstaclePose:
    id: int
    position: np.ndarray
    velocity: np.ndarray
    script: ObstacleScript


@dataclass(frozen=True)
class WorldState:
    time: float
    robot: RobotState
    obstacles: tuple[ObstaclePose, ...]
    robot_radius: float = 0.4
    collided: bool = False


@dataclass(frozen=True)
class LidarScan:
    timestamp: float
    points: np.ndarray  # (n, 3), body frame


def obstacle_poses(scripts: Sequence[ObstacleScript], t: float) -> tuple[ObstaclePose, ...]:
    return tuple(
        ObstaclePose(s.id, s.position_at(t), s.velocity_at(t), s) for s in scripts
    )


def clearance(world: WorldState) -> float:
    """Minimum gap between the robot disc and any obstacle (negative if overlapping)."""
    p = world.robot.pose.xy
    best = math.inf
    for ob in world.obstacles:
        best = min(best, ob.script.signed_distance(ob.position, p) - world.robot_radius)
    return best


def initial_world(scenario: Scenario) -> WorldState:
    world = WorldState(
        time=0.0,
        robot=RobotState(scenario.start),
        obstacles=obstacle_poses(scenario.obstacles, 0.0),
        robot_radius=scenario.robot.radius,
    )
    return replace(world, collided=clearance(world) < 0.0)


def step_world(world: WorldState, scenario: Scenario, control: ControlCommand, dt: float) -> WorldState:
    """Advance one explicit-Euler step; controls are saturated at the robot bounds."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    cfg = scenario.robot
    v = min(max(control.v, -cfg.v_max), cfg.v_max)
    w = min(max(control.omega, -cfg.omega_max), cfg.omega_max)
    pose = world.robot.pose
    new_pose = Pose2D(
        pose.x + v * math.cos(pose.theta) * dt,
        pose.y + v * math.sin(pose.theta) * dt,
        pose.theta + w * dt,
    )
    t = world.time + dt
    nxt = WorldState(
        time=t,
        robot=RobotState(new_pose, v, w),
        obstacles=obstacle_poses(scenario.obstacles, t),
        robot_radius=world.robot_radius,
    )
    return replace(nxt, collided=clearance(nxt) < 0.0)


def _ray_hits(origin, dirs, world: WorldState, z: float, max_range: float) -> np.ndarray:
    """First-hit range along each unit direction (inf where nothing is hit)."""
    ranges = np.full(dirs.shape[0], np.inf)
    ox, oy = origin
    dx, dy = dirs[:, 0], dirs[:, 1]
    for ob in world.obstacles:
        sc = ob.script
        if z > sc.height:
            continue
        if sc.shape == "disc":
            cx, cy = ob.position[0] - ox, ob.position[1] - oy
            # |t*d - c|^2 = R^2 with |d| = 1
            b = dx * cx + dy * cy
            disc = b * b - (cx * cx + cy * cy - sc.radius * sc.radius)
            ok = disc >= 0.0
            root = np.sqrt(np.where(ok, disc, 0.0))
            t1 = b - root
            t2 = b + root
            t = np.where(t1 > 1e-12, t1, t2)
            hit = ok & (t > 1e-12)
            ranges = np.where(hit & (t < ranges), t, ranges)
        else:
            verts = sc.world_vertices(ob.position)
            a = verts - np.array([ox, oy])
            e = np.roll(verts, -1, axis=0) - verts
            for (ax, ay), (ex, ey) in zip(a, e):
                den = dx * ey - dy * ex
                ok = np.abs(den) > 1e-15
                safe = np.where(ok, den, 1.0)
                t = (ax * ey - ay * ex) / safe
                s = (ax * dy - ay * dx) / safe
                hit = ok & (t > 1e-12) & (s >= 0.0) & (s <= 1.0)
                ranges = np.where(hit & (t < ranges), t, ranges)
    ranges[ranges > max_range] = np.inf
    return ranges


def simulate_lidar(world: WorldState, scenario: Scenario, rng: np.random.Generator) -> LidarScan:
    """One scan: a ray per beam per z-level, first hit, Gaussian range noise.

    Noise is drawn for every ray whether or not it hits, so the generator
    advances identically across worlds with the same sensor.
    """
    sensor = scenario.sensor
    pose = world.robot.pose
    local = sensor.beam_angles()
    glob = local + pose.theta
    dirs = np.column_stack([np.cos(glob), np.sin(glob)])
    chunks = []
    for z in sensor.beam_z_levels:
        r = _ray_hits((pose.x, pose.y), dirs, world, z, sensor.max_range)
        noise = rng.normal(0.0, 1.0, size=r.shape) * sensor.range_noise_sigma
        r = r + noise
        keep = np.isfinite(r) & (r > 0.0) & (r <= sensor.max_range)
        rr, aa = r[keep], local[keep]
        chunks.append(np.column_stack([rr * np.cos(aa), rr * np.sin(aa), np.full(rr.size, z)]))
    pts = np.concatenate(chunks) if chunks else np.empty((0, 3))
    return LidarScan(world.time, pts)


def path_length(trajectory: Sequence) -> float:
    """Sum of Euclidean segment lengths over poses (or (x, y) pairs)."""
    xy = np.array([(p.x, p.y) if isinstance(p, Pose2D) else (p[0], p[1]) for p in trajectory], dtype=float)
    if xy.shape[0] < 2:
        return 0.0
    return float(np.sum(np.hypot(*np.diff(xy, axis=0).T)))


def body_to_world(points: np.ndarray, pose: Pose2D) -> np.ndarray:
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    return np.column_stack([pose.x + c * pts[:, 0] - s * pts[:, 1], pose.y + s * pts[:, 0] + c * pts[:, 1]])


def world_to_body(points: np.ndarray, pose: Pose2D) -> np.ndarray:
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    dx, dy = pts[:, 0] - pose.x, pts[:, 1] - pose.y
    return np.column_stack([c * dx + s * dy, -s * dx + c * dy])
