"""Receding-horizon local planner over point constraints.

The planner works in the robot body frame at solve time: the robot sits at
the origin facing +x, and the reference, scan points and virtual points are
expressed relative to it. The objective over a control sequence
``u_0..u_{H-1}`` and rollout states ``s_0..s_H`` is::

    sum_k |s_k - ref_k|_Q^2 + sum_k |u_k|_R^2
        + rho * sum_k sum_j eta_j * max(0, d_safe - dist(s_k, p_j))^2

with ``dist`` the gap between point ``p_j`` and the disc footprint.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from time import perf_counter
from typing import Iterator, Sequence

import numpy as np

from . import kernels
from .perception import (
    FrameBuffer,
    PerceptionConfig,
    PointCloud2D,
    TrackerState,
    perceive,
    preprocess_scan,
    to_world,
)
from .prediction import PredictionConfig, VirtualPoint, predict
from .world import ControlCommand, LidarScan, Pose2D, RobotState, Scenario, world_to_body, wrap_angle

PREDICTION_MODES = ("no_prediction", "constant_velocity", "gmm")
FRAME_MODES = ("single_frame", "multi_frame")
STAGES = ("perception", "prediction", "reference", "selection", "solve", "postprocess")


class SolverAbort(RuntimeError):
    """The objective became non-finite; ``iterate`` holds the offending controls."""

    def __init__(self, message, iterate):
        super().__init__(message)
        self.iterate = iterate


@dataclass(frozen=True)
class PlannerConfig:
    horizon: int = 20
    dt_plan: float = 0.1
    q: tuple[float, float, float] = (1.0, 1.0, 0.2)
    r: tuple[float, float] = (0.1, 0.05)
    rho: float = 10.0
    d_safe: float = 0.5
    kappa: float = 1.0
    max_points: int = 100
    v_ref: float = 1.0
    v_max: float = 1.2
    omega_max: float = 1.5
    radius: float = 0.4
    iterations: int = 50
    step0: float = 0.05
    step_min: float = 1e-8
    step_max: float = 10.0
    armijo: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 40
    arc_starts: tuple[float, ...] = (-1.0, -0.6, -0.3, 0.0, 0.3, 0.6, 1.0)  # fractions of omega_max

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.rho < 0:
            raise ValueError("rho must be >= 0")
        if self.d_safe <= 0:
            raise ValueError("d_safe must be positive")
        if self.max_points < 1:
            raise ValueError("max_points must be >= 1")

    @classmethod
    def from_dict(cls, raw: dict, **overrides) -> PlannerConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"planner: unknown keys {sorted(unknown)}")
        vals = {k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()}
        for k, v in overrides.items():
            vals.setdefault(k, v)
        return cls(**vals)


@dataclass(frozen=True)
class ControlPostConfig:
    beta: float = 0.5
    omega_clip: float = 1.5

    def __post_init__(self):
        if not 0.0 <= self.beta < 1.0:
            raise ValueError("beta must lie in [0, 1)")
        if self.omega_clip <= 0:
            raise ValueError("omega_clip must be positive")


@dataclass(frozen=True)
class ReferenceTrajectory:
    states: np.ndarray  # (H+1, 3): x, y, theta

    @property
    def poses(self) -> list[Pose2D]:
        return [Pose2D(*s) for s in self.states]

    def to_body(self, pose: Pose2D) -> ReferenceTrajectory:
        xy = world_to_body(self.states[:, :2], pose)
        th = [wrap_angle(t - pose.theta) for t in self.states[:, 2]]
        return ReferenceTrajectory(np.column_stack([xy, th]))


@dataclass(frozen=True)
class ConstraintPoint:
    position: np.ndarray
    eta: float
    origin: str  # "scan" or "virtual"


@dataclass(frozen=True)
class ConstraintSet:
    positions: np.ndarray  # (m, 2)
    eta: np.ndarray  # (m,)
    virtual: np.ndarray  # (m,) bool

    @classmethod
    def empty(cls) -> ConstraintSet:
        return cls(np.empty((0, 2)), np.empty(0), np.empty(0, dtype=bool))

    def __len__(self):
        return self.positions.shape[0]

    def __iter__(self) -> Iterator[ConstraintPoint]:
        for p, e, v in zip(self.positions, self.eta, self.virtual):
            yield ConstraintPoint(p, float(e), "virtual" if v else "scan")


@dataclass(frozen=True)
class CostBreakdown:
    total: float
    tracking: float
    control: float
    obstacle: float


@dataclass(frozen=True)
class MpcSolution:
    controls: np.ndarray  # (H, 2)
    cost: float
    initial_cost: float
    iterations: int
    wall_time: float
    history: tuple[float, ...]


def _polyline(waypoints):
    w = np.asarray(waypoints, dtype=float).reshape(-1, 2)
    keep = np.ones(len(w), dtype=bool)
    keep[1:] = np.hypot(*np.diff(w, axis=0).T) > 1e-12
    return w[keep]


def build_reference(waypoints: Sequence, robot: RobotState, cfg: PlannerConfig) -> ReferenceTrajectory:
    """March along the waypoint polyline from the robot's projection onto it."""
    w = _polyline(waypoints)
    n_ref = cfg.horizon + 1
    if len(w) == 1:
        return ReferenceTrajectory(np.tile([w[0, 0], w[0, 1], robot.pose.theta], (n_ref, 1)))
    seg = np.diff(w, axis=0)
    seglen = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(seglen)])
    p = robot.pose.xy
    best_d, s0 = math.inf, 0.0
    for i in range(len(seg)):
        t = min(max(float(np.dot(p - w[i], seg[i])) / seglen[i] ** 2, 0.0), 1.0)
        d = float(np.hypot(*(p - (w[i] + t * seg[i]))))
        if d < best_d - 1e-12:
            best_d, s0 = d, cum[i] + t * seglen[i]
    s = np.minimum(s0 + np.arange(n_ref) * cfg.v_ref * cfg.dt_plan, cum[-1])
    x = np.interp(s, cum, w[:, 0])
    y = np.interp(s, cum, w[:, 1])
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    heading = np.arctan2(seg[idx, 1], seg[idx, 0])
    return ReferenceTrajectory(np.column_stack([x, y, heading]))


def select_points(cloud: PointCloud2D, virtual: Sequence[VirtualPoint], tracks=None,
                  cfg: PlannerConfig = PlannerConfig(), origin=(0.0, 0.0)) -> ConstraintSet:
    """The ``max_points`` constraint points nearest ``origin``.

    Scan points get weight 1, virtual points ``1 + kappa * source speed``.
    Ties are broken by (distance, x, y).
    """
    scan = np.asarray(cloud.points, dtype=float).reshape(-1, 2)
    if virtual:
        vpos = np.array([vp.position for vp in virtual], dtype=float)
        veta = 1.0 + cfg.kappa * np.array([vp.speed for vp in virtual], dtype=float)
    else:
        vpos, veta = np.empty((0, 2)), np.empty(0)
    pos = np.concatenate([scan, vpos])
    if pos.shape[0] == 0:
        return ConstraintSet.empty()
    eta = np.concatenate([np.ones(scan.shape[0]), veta])
    virt = np.concatenate([np.zeros(scan.shape[0], dtype=bool), np.ones(vpos.shape[0], dtype=bool)])
    d = np.hypot(pos[:, 0] - origin[0], pos[:, 1] - origin[1])
    order = np.lexsort((pos[:, 1], pos[:, 0], d))[: cfg.max_points]
    return ConstraintSet(pos[order], eta[order], virt[order])


def point_distance(state: RobotState, p, radius: float = 0.4) -> float:
    """Gap between a point and the disc footprint; negative inside."""
    pos = getattr(p, "position", p)
    return math.hypot(pos[0] - state.pose.x, pos[1] - state.pose.y) - radius


def _as_points(pts) -> tuple[np.ndarray, np.ndarray]:
    if pts is None:
        return np.empty((0, 2)), np.empty(0)
    if isinstance(pts, ConstraintSet):
        return pts.positions, pts.eta
    pts = list(pts)
    if not pts:
        return np.empty((0, 2)), np.empty(0)
    return (np.array([p.position for p in pts], dtype=float),
            np.array([p.eta for p in pts], dtype=float))


def _ref_array(ref: ReferenceTrajectory, theta0: float) -> np.ndarray:
    # headings are compared unwrapped around the start heading
    out = np.array(ref.states, dtype=float)
    out[:, 2] = theta0 + np.array([wrap_angle(t - theta0) for t in out[:, 2]])
    return out


class _Objective:
    def __init__(self, state: RobotState, ref: ReferenceTrajectory, pts, cfg: PlannerConfig):
        self.x0 = np.array([state.pose.x, state.pose.y, state.pose.theta])
        self.ref = _ref_array(ref, state.pose.theta)
        self.pts, self.eta = _as_points(pts)
        self.cfg = cfg
        self.q = np.asarray(cfg.q, dtype=float)
        self.r = np.asarray(cfg.r, dtype=float)
        if self.ref.shape[0] != cfg.horizon + 1:
            raise ValueError(f"reference has {self.ref.shape[0]} states, expected {cfg.horizon + 1}")

    def __call__(self, u, want_grad=True):
        c = self.cfg
        return kernels.rollout_cost_grad(
            u, self.x0, self.ref, self.pts, self.eta, c.dt_plan, self.q, self.r,
            c.rho, c.d_safe, c.radius, want_grad,
        )


def cost(controls, state: RobotState, ref: ReferenceTrajectory, pts, cfg: PlannerConfig) -> CostBreakdown:
    u = np.asarray(controls, dtype=float).reshape(-1, 2)
    if u.shape[0] != cfg.horizon:
        raise ValueError(f"expected {cfg.horizon} controls, got {u.shape[0]}")
    total, tr, ctl, obs, _ = _Objective(state, ref, pts, cfg)(u, want_grad=False)
    return CostBreakdown(total, tr, ctl, obs)


def cost_gradient(controls, state: RobotState, ref: ReferenceTrajectory, pts, cfg: PlannerConfig) -> np.ndarray:
    u = np.asarray(controls, dtype=float).reshape(-1, 2)
    return _Objective(state, ref, pts, cfg)(u)[4]


def shift_warm_start(controls: np.ndarray) -> np.ndarray:
    return np.concatenate([controls[1:], controls[-1:]])


def _candidate_starts(cfg: PlannerConfig) -> list[np.ndarray]:
    """Constant-turn arcs and turn/counter-turn swerves at the reference speed."""
    H = cfg.horizon
    v0 = min(cfg.v_ref, cfg.v_max)
    third = max(1, H // 3)
    out = []
    for frac in cfg.arc_starts:
        w = frac * cfg.omega_max
        arc = np.tile([v0, w], (H, 1))
        out.append(arc)
        if frac != 0.0:
            swerve = np.tile([v0, 0.0], (H, 1))
            swerve[:third, 1] = w
            swerve[third:2 * third, 1] = -w
            out.append(swerve)
    return out


def solve_mpc(state: RobotState, ref: ReferenceTrajectory, pts, cfg: PlannerConfig,
              warm_start: np.ndarray | None = None) -> MpcSolution:
    """Projected gradient descent with Armijo backtracking.

    Steps start from the Barzilai-Borwein length of the previous iterate
    and are halved until sufficient decrease holds, so the cost history is
    non-increasing. Stops after ``cfg.iterations`` accepted steps or when no
    step makes progress.
    """
    t0 = perf_counter()
    f_obj = _Objective(state, ref, pts, cfg)
    lo = np.array([-cfg.v_max, -cfg.omega_max])
    hi = -lo
    if warm_start is None:
        u = np.tile([min(cfg.v_ref, cfg.v_max), 0.0], (cfg.horizon, 1))
    else:
        u = np.array(warm_start, dtype=float).reshape(-1, 2)
        if u.shape[0] != cfg.horizon:
            raise ValueError(f"warm start has {u.shape[0]} steps, expected {cfg.horizon}")
    u = np.clip(u, lo, hi)
    if cfg.arc_starts:
        # escape symmetric local minima: start from the cheapest of the warm
        # start and a fan of arcs and swerves
        best = f_obj(u, want_grad=False)[0]
        for cand in _candidate_starts(cfg):
            fc = f_obj(cand, want_grad=False)[0]
            if fc < best:
                best, u = fc, cand
    f, *_, g = f_obj(u)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise SolverAbort("non-finite cost at the initial iterate", u)
    history = [f]
    step = cfg.step0
    iterations = 0
    for _ in range(cfg.iterations):
        accepted = False
        for _ in range(cfg.max_backtracks):
            un = np.clip(u - step * g, lo, hi)
            d = un - u
            slope = float(np.sum(g * d))
            if slope >= 0.0:
                break
            fn, *_, gn = f_obj(un)
            if not np.isfinite(fn):
                raise SolverAbort("non-finite cost during line search", un)
            if fn <= f + cfg.armijo * slope:
                accepted = True
                break
            step *= cfg.shrink
            if step < cfg.step_min:
                break
        if not accepted:
            break
        s = (un - u).ravel()
        y = (gn - g).ravel()
        sy = float(s @ y)
        step = float(s @ s) / sy if sy > 1e-16 else step * 2.0
        step = min(max(step, cfg.step_min), cfg.step_max)
        u, f, g = un, fn, gn
        history.append(f)
        iterations += 1
    return MpcSolution(u, f, history[0], iterations, perf_counter() - t0, tuple(history))


def postprocess(v_star: float, omega_star: float, prev_v_out: float,
                cfg: ControlPostConfig = ControlPostConfig()) -> ControlCommand:
    """First-order low-pass on v, symmetric clip on omega."""
    v = cfg.beta * prev_v_out + (1.0 - cfg.beta) * v_star
    w = min(max(omega_star, -cfg.omega_clip), cfg.omega_clip)
    return ControlCommand(v, w)


@dataclass(frozen=True)
class AblationMode:
    prediction: str = "gmm"
    frames: str = "multi_frame"

    def __post_init__(self):
        if self.prediction not in PREDICTION_MODES:
            raise ValueError(f"unknown prediction mode {self.prediction!r}")
        if self.frames not in FRAME_MODES:
            raise ValueError(f"unknown frame mode {self.frames!r}")

    @classmethod
    def parse(cls, text: str) -> AblationMode:
        """``gmm``, ``gmm+single_frame``, ``single_frame+no_prediction``, ..."""
        pred, frames = "gmm", "multi_frame"
        for part in text.split("+"):
            part = part.strip()
            if part in PREDICTION_MODES:
                pred = part
            elif part in FRAME_MODES:
                frames = part
            else:
                raise ValueError(f"unknown mode component {part!r}")
        return cls(pred, frames)

    def __str__(self):
        return f"{self.prediction}+{self.frames}"


@dataclass(frozen=True)
class NavConfig:
    perception: PerceptionConfig = PerceptionConfig()
    prediction: PredictionConfig = PredictionConfig()
    planner: PlannerConfig = PlannerConfig()
    post: ControlPostConfig = ControlPostConfig()
    z_band: tuple[float, float] = (0.1, 1.0)

    @classmethod
    def from_scenario(cls, scenario: Scenario) -> NavConfig:
        raw = dict(scenario.planner)
        post = ControlPostConfig(
            beta=float(raw.pop("lowpass_beta", 0.5)),
            omega_clip=float(raw.pop("omega_clip", scenario.robot.omega_max)),
        )
        planner = PlannerConfig.from_dict(
            raw,
            dt_plan=scenario.dt,
            radius=scenario.robot.radius,
            v_max=scenario.robot.v_max,
            omega_max=scenario.robot.omega_max,
        )
        return cls(
            perception=PerceptionConfig.from_dict(scenario.perception),
            prediction=PredictionConfig.from_dict(scenario.prediction, dt_plan=planner.dt_plan),
            planner=planner,
            post=post,
            z_band=scenario.sensor.z_band,
        )


@dataclass
class CycleReport:
    timings: dict[str, float] = field(default_factory=dict)  # seconds per stage
    n_tracks: int = 0
    n_virtual: int = 0
    n_constraints: int = 0
    solve: MpcSolution | None = None

    @property
    def total(self) -> float:
        return sum(self.timings.values())


class Navigator:
    """Per-trial planning state: frame history, tracks, warm start, filter memory."""

    def __init__(self, waypoints, cfg: NavConfig = NavConfig(), mode: AblationMode = AblationMode(),
                 planner: str = "mpc"):
        if planner not in ("mpc", "dwa"):
            raise ValueError(f"unknown planner {planner!r}")
        self.waypoints = tuple(tuple(w) for w in waypoints)
        self.cfg = cfg
        self.mode = mode
        self.planner = planner
        self.buffer = FrameBuffer()
        self.tracker = TrackerState()
        self.tracks = []
        self.warm_start: np.ndarray | None = None
        self.prev_v = 0.0
        pred = cfg.prediction
        if mode.prediction == "constant_velocity":
            pred = replace(pred, offsets="zero")
        self._pred_cfg = pred

    def plan_cycle(self, robot: RobotState, scan: LidarScan,
                   rng: np.random.Generator) -> tuple[ControlCommand, CycleReport]:
        """perceive -> predict -> reference -> select -> solve -> postprocess."""
        rep = CycleReport()
        pose = robot.pose
        cfg = self.cfg
        clock = perf_counter()

        def lap(stage):
            nonlocal clock
            now = perf_counter()
            rep.timings[stage] = now - clock
            clock = now

        body = preprocess_scan(scan, cfg.z_band, cfg.perception.cell)
        tracks = []
        if self.mode.frames == "multi_frame":
            self.buffer.push(to_world(body, pose))
            tracks, self.tracker = perceive(self.buffer, self.tracker, cfg.perception)
        self.tracks = tracks
        lap("perception")

        virtual = []
        if self.mode.prediction != "no_prediction" and tracks:
            virtual = predict(tracks, self._pred_cfg, rng)
        rep.n_tracks, rep.n_virtual = len(tracks), len(virtual)
        lap("prediction")

        ref = build_reference(self.waypoints, robot, cfg.planner).to_body(pose)
        lap("reference")

        if virtual:
            vb = world_to_body(np.array([vp.position for vp in virtual]), pose)
            virtual = [replace(vp, position=p) for vp, p in zip(virtual, vb)]
        pts = select_points(body, virtual, tracks, cfg.planner)
        rep.n_constraints = len(pts)
        lap("selection")

        origin = RobotState(Pose2D(0.0, 0.0, 0.0), robot.v, robot.omega)
        if self.planner == "dwa":
            from .dwa import dwa_command

            v_star, w_star = dwa_command(origin, ref, pts, cfg.planner)
        else:
            sol = solve_mpc(origin, ref, pts, cfg.planner, self.warm_start)
            self.warm_start = shift_warm_start(sol.controls)
            rep.solve = sol
            v_star, w_star = sol.controls[0]
        lap("solve")

        cmd = postprocess(float(v_star), float(w_star), self.prev_v, cfg.post)
        self.prev_v = cmd.v
        lap("postprocess")
        return cmd, rep


def plan_cycle(navigator: Navigator, robot: RobotState, scan: LidarScan, rng: np.random.Generator):
    return navigator.plan_cycle(robot, scan, rng)
