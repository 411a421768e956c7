"""Closed-loop trials, ablation sweeps and latency benchmarks."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from time import perf_counter

import numpy as np

from .perception import FrameBuffer, PerceptionConfig, TrackerState, perceive, preprocess_scan
from .planner import STAGES, AblationMode, NavConfig, Navigator, SolverAbort
from .scenario import load_scenario
from .world import LidarScan, Scenario, clearance, initial_world, path_length, simulate_lidar, step_world

PLANNERS = {"mfneupan": "mpc", "mpc": "mpc", "dwa": "dwa"}
TRAJ_HEADER = ("t", "x", "y", "theta", "v", "omega", "clearance")


@dataclass
class RunMetrics:
    scenario: str
    mode: str
    seed: int
    planner: str
    status: str  # reached | collided | timeout | solver_error
    path_length_m: float
    min_clearance_m: float
    steps: int
    mean_cycle_ms: float
    p95_cycle_ms: float

    @property
    def reached(self) -> bool:
        return self.status == "reached"

    @property
    def collided(self) -> bool:
        return self.status == "collided"


@dataclass
class TrialResult:
    metrics: RunMetrics
    trajectory: list[tuple[float, ...]]  # rows matching TRAJ_HEADER
    timings: list[dict[str, float]]  # per cycle, seconds per stage
    scenario: Scenario = field(repr=False, default=None)

    @property
    def trial_id(self) -> str:
        m = self.metrics
        tag = f"{m.scenario}_{m.mode}_{m.planner}_s{m.seed}"
        return tag.replace("+", "_").replace("/", "_")


def goal_reached(world, scenario: Scenario) -> bool:
    gx, gy, tol = scenario.goal
    p = world.robot.pose
    return math.hypot(p.x - gx, p.y - gy) <= tol


def _row(world) -> tuple[float, ...]:
    r = world.robot
    return (world.time, r.pose.x, r.pose.y, r.pose.theta, r.v, r.omega, clearance(world))


def run_trial(scenario: Scenario, mode: AblationMode = AblationMode(), seed: int | None = None,
              planner: str = "mfneupan", cfg: NavConfig | None = None) -> TrialResult:
    """Run lidar -> plan -> step until the goal, a collision, or ``max_steps``."""
    seed = scenario.seed if seed is None else int(seed)
    cfg = NavConfig.from_scenario(scenario) if cfg is None else cfg
    nav = Navigator(scenario.waypoints, cfg, mode, PLANNERS[planner])
    world = initial_world(scenario)
    lidar_rng = np.random.default_rng([seed, 1])
    rows = [_row(world)]
    timings = []
    status = "collided" if world.collided else None
    steps = 0
    while status is None:
        if goal_reached(world, scenario):
            status = "reached"
            break
        if steps >= scenario.max_steps:
            status = "timeout"
            break
        scan = simulate_lidar(world, scenario, lidar_rng)
        try:
            cmd, rep = nav.plan_cycle(world.robot, scan, np.random.default_rng([seed, 2, steps]))
        except SolverAbort:
            status = "solver_error"
            break
        timings.append(dict(rep.timings))
        world = step_world(world, scenario, cmd, scenario.dt)
        steps += 1
        rows.append(_row(world))
        if world.collided:
            status = "collided"

    totals = np.array([sum(t.values()) for t in timings]) * 1e3
    metrics = RunMetrics(
        scenario=scenario.name,
        mode=str(mode),
        seed=seed,
        planner=planner,
        status=status,
        path_length_m=path_length([(r[1], r[2]) for r in rows]),
        min_clearance_m=min(r[6] for r in rows),
        steps=steps,
        mean_cycle_ms=float(totals.mean()) if totals.size else float("nan"),
        p95_cycle_ms=float(np.percentile(totals, 95)) if totals.size else float("nan"),
    )
    return TrialResult(metrics, rows, timings, scenario)


def _trial_job(args):
    source, mode, seed, planner = args
    sc = source if isinstance(source, Scenario) else load_scenario(source, seed=seed)
    return run_trial(sc, AblationMode.parse(mode), seed, planner)


@dataclass
class AblationResult:
    trials: list[TrialResult]
    table: list[dict]


def summarize(trials: list[TrialResult]) -> list[dict]:
    """One row per (scenario, mode, planner), sorted by that key.

    Path statistics cover reached trials only; failures show up in the rates.
    """
    groups: dict[tuple, list[RunMetrics]] = {}
    for tr in trials:
        m = tr.metrics
        groups.setdefault((m.scenario, m.mode, m.planner), []).append(m)
    rows = []
    for key in sorted(groups):
        ms = groups[key]
        ok = [m.path_length_m for m in ms if m.reached]
        cyc = [m.mean_cycle_ms for m in ms if np.isfinite(m.mean_cycle_ms)]
        rows.append({
            "scenario": key[0],
            "mode": key[1],
            "planner": key[2],
            "trials": len(ms),
            "success_rate": len(ok) / len(ms),
            "collision_rate": sum(m.collided for m in ms) / len(ms),
            "mean_path_m": float(np.mean(ok)) if ok else None,
            "std_path_m": float(np.std(ok)) if ok else None,
            "mean_cycle_ms": float(np.mean(cyc)) if cyc else None,
        })
    return rows


def run_ablation(scenarios, modes, seeds, planner: str = "mfneupan", jobs: int = 1) -> AblationResult:
    """Full factorial of scenario x mode x seed.

    ``scenarios`` are paths or canonical names, reloaded per seed so that
    seeded obstacle jitter applies; failed trials are kept, not raised.
    """
    if len(scenarios) < 1:
        raise ValueError("need at least one scenario")
    if len(modes) < 2:
        raise ValueError("need at least two modes")
    jobs_list = [(s, str(AblationMode.parse(str(m))), int(seed), planner)
                 for s in scenarios for m in modes for seed in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            trials = list(ex.map(_trial_job, jobs_list))
    else:
        trials = [_trial_job(j) for j in jobs_list]
    return AblationResult(trials, summarize(trials))


@dataclass
class LatencySummary:
    cycles: int
    rows: list[dict]  # stage, mean_ms, p50_ms, p95_ms

    def row(self, stage: str) -> dict:
        return next(r for r in self.rows if r["stage"] == stage)


def _summarize_stages(samples: dict[str, list[float]]) -> list[dict]:
    rows = []
    for stage, vals in samples.items():
        a = np.asarray(vals) * 1e3
        rows.append({
            "stage": stage,
            "mean_ms": float(a.mean()),
            "p50_ms": float(np.percentile(a, 50)),
            "p95_ms": float(np.percentile(a, 95)),
        })
    return rows


def bench_latency(scenario: Scenario, n_cycles: int = 500, mode: AblationMode = AblationMode(),
                  cfg: NavConfig | None = None, planner: str = "mfneupan") -> LatencySummary:
    """Time ``plan_cycle`` in the closed loop, restarting trials as they end."""
    if n_cycles < 100:
        raise ValueError("n_cycles must be >= 100")
    cfg = NavConfig.from_scenario(scenario) if cfg is None else cfg
    samples = {s: [] for s in STAGES + ("total",)}
    seed = scenario.seed
    done = 0
    while done < n_cycles:
        nav = Navigator(scenario.waypoints, cfg, mode, PLANNERS[planner])
        world = initial_world(scenario)
        lidar_rng = np.random.default_rng([seed, 1])
        for step in range(scenario.max_steps):
            if done >= n_cycles or world.collided or goal_reached(world, scenario):
                break
            scan = simulate_lidar(world, scenario, lidar_rng)
            cmd, rep = nav.plan_cycle(world.robot, scan, np.random.default_rng([seed, 2, step]))
            for s in STAGES:
                samples[s].append(rep.timings[s])
            samples["total"].append(rep.total)
            world = step_world(world, scenario, cmd, scenario.dt)
            done += 1
        seed += 1
    return LatencySummary(done, _summarize_stages(samples))


def synthetic_scan(n_points: int, rng: np.random.Generator, n_obstacles: int = 8) -> LidarScan:
    """In-band points scattered around a few disc-shaped blobs."""
    centers = rng.uniform(-8, 8, size=(n_obstacles, 2))
    k = rng.integers(0, n_obstacles, size=n_points)
    ang = rng.uniform(0, 2 * np.pi, size=n_points)
    rad = rng.uniform(0.2, 0.6, size=n_points)
    xy = centers[k] + np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
    return LidarScan(0.0, np.column_stack([xy, np.full(n_points, 0.5)]))


def bench_perception_scaling(sizes=(100, 1000, 5000), repeats: int = 5, seed: int = 0,
                             cfg: PerceptionConfig = PerceptionConfig()) -> dict[int, float]:
    """Median wall time (s) of one perception step per synthetic scan size.

    Downsampling is skipped (cell far below point spacing) so the point
    count reaching clustering is the requested one.
    """
    rng = np.random.default_rng(seed)
    out = {}
    for n in sizes:
        scan = synthetic_scan(n, rng)
        times = []
        for _ in range(repeats):
            t0 = perf_counter()
            cloud = preprocess_scan(scan, (0.1, 1.0), 1e-6)
            buf = FrameBuffer()
            buf.push(cloud)
            perceive(buf, TrackerState(), cfg)
            times.append(perf_counter() - t0)
        out[n] = float(np.median(times))
    return out
