"""Scan preprocessing, clustering and multi-frame obstacle tracking.

Pipeline per frame: height-band filter and grid downsampling, Gaussian
smoothing, DBSCAN, greedy nearest-neighbour association, a constant-velocity
Kalman filter on cluster centroids, and exponential smoothing of the
filtered velocity.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import kernels
from .world import LidarScan, Pose2D, body_to_world

SMOOTHING_ALPHA = 0.7
HISTORY_FRAMES = 10


class CovarianceError(ValueError):
    """A covariance handed to the Kalman filter is not symmetric PSD."""


@dataclass(frozen=True)
class PointCloud2D:
    points: np.ndarray  # (n, 2)
    timestamp: float = 0.0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class DbscanParams:
    epsilon: float = 1.0
    min_pts: int = 5

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.min_pts < 1:
            raise ValueError("min_pts must be >= 1")


@dataclass(frozen=True)
class Cluster:
    points: np.ndarray

    @property
    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)

    @property
    def radius(self) -> float:
        return float(np.max(np.hypot(*(self.points - self.centroid).T)))


@dataclass(frozen=True)
class TrackedObstacle:
    id: int
    state: np.ndarray  # px, py, vx, vy
    cov: np.ndarray  # 4x4
    velocity: np.ndarray  # smoothed
    age: int = 1
    missed: int = 0
    cluster: Cluster | None = None

    @property
    def position(self) -> np.ndarray:
        return self.state[:2]

    @property
    def centroid(self) -> np.ndarray:
        return self.cluster.centroid if self.cluster is not None else self.state[:2]

    @property
    def speed(self) -> float:
        return float(np.hypot(*self.velocity))


@dataclass(frozen=True)
class PerceptionConfig:
    cell: float = 0.1
    sigma: float = 0.05
    dbscan: DbscanParams = DbscanParams()
    gate: float = 1.0
    miss_limit: int = 3
    process_noise: float = 0.05  # m/s^2
    measurement_noise: float = 0.05  # m
    init_velocity_var: float = 10.0
    alpha: float = SMOOTHING_ALPHA

    @classmethod
    def from_dict(cls, raw: dict) -> PerceptionConfig:
        raw = dict(raw)
        db = DbscanParams(float(raw.pop("epsilon", 1.0)), int(raw.pop("min_pts", 5)))
        unknown = set(raw) - {f for f in cls.__dataclass_fields__ if f != "dbscan"}
        if unknown:
            raise ValueError(f"perception: unknown keys {sorted(unknown)}")
        return cls(dbscan=db, **raw)


class FrameBuffer:
    """Ring of the most recent preprocessed clouds, oldest first."""

    def __init__(self, capacity: int = HISTORY_FRAMES):
        self.capacity = capacity
        self._frames: deque[PointCloud2D] = deque(maxlen=capacity)

    def push(self, cloud: PointCloud2D) -> None:
        if self._frames and cloud.timestamp <= self._frames[-1].timestamp:
            raise ValueError("frames must arrive in increasing timestamp order")
        self._frames.append(cloud)

    def __len__(self):
        return len(self._frames)

    def __iter__(self):
        return iter(self._frames)

    @property
    def latest(self) -> PointCloud2D:
        return self._frames[-1]


def preprocess_scan(scan: LidarScan, z_band=(0.1, 1.0), cell: float = 0.1) -> PointCloud2D:
    """Height-band filter, planar projection and grid downsampling (cell centroids)."""
    if cell <= 0:
        raise ValueError("cell must be positive")
    pts = np.asarray(scan.points, dtype=float).reshape(-1, 3)
    pts = pts[(pts[:, 2] >= z_band[0]) & (pts[:, 2] <= z_band[1]), :2]
    if pts.shape[0] == 0:
        return PointCloud2D(np.empty((0, 2)), scan.timestamp)
    keys = np.floor(pts / cell).astype(np.int64)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    out = np.column_stack(
        [np.bincount(inverse, pts[:, 0]) / counts, np.bincount(inverse, pts[:, 1]) / counts]
    )
    return PointCloud2D(out, scan.timestamp)


def load_scan_replay(directory) -> list[LidarScan]:
    """Read recorded scans: one CSV per frame (header ``t,x,y,z``), ordered by filename."""
    scans = []
    for path in sorted(Path(directory).glob("*.csv")):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.size == 0:
            raise ValueError(f"{path}: no rows")
        if data.shape[1] != 4:
            raise ValueError(f"{path}: expected columns t,x,y,z")
        scans.append(LidarScan(float(data[0, 0]), data[:, 1:4].copy()))
    return scans


def to_world(cloud: PointCloud2D, pose: Pose2D) -> PointCloud2D:
    return PointCloud2D(body_to_world(cloud.points, pose), cloud.timestamp)


def gaussian_filter(cloud: PointCloud2D, sigma: float) -> PointCloud2D:
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return PointCloud2D(kernels.gaussian_smooth(cloud.points, sigma), cloud.timestamp)


def dbscan(cloud: PointCloud2D, params: DbscanParams = DbscanParams()) -> tuple[list[Cluster], np.ndarray]:
    """Clusters and the noise points of ``cloud``.

    Neighbourhoods are closed balls (``|p - q| <= epsilon``) that include the
    point itself.
    """
    pts = cloud.points
    labels = kernels.dbscan_labels(pts, params.epsilon, params.min_pts)
    n_clusters = int(labels.max()) + 1 if labels.size else 0
    clusters = [Cluster(pts[labels == c]) for c in range(n_clusters)]
    return clusters, pts[labels < 0]


@dataclass(frozen=True)
class Association:
    matches: list[tuple[int, int]]  # (track id, cluster index)
    births: list[int]  # cluster indices
    deaths: list[int]  # track ids


def match_clusters(tracks, clusters, gate: float = 1.0, miss_limit: int = 3) -> Association:
    """Greedy nearest-neighbour association on centroid distance.

    Pairs are taken in order of (distance, track id, cluster index) while
    both sides are free and the distance is within ``gate``.
    """
    if gate <= 0:
        raise ValueError("gate must be positive")
    cand = []
    cents = [c.centroid for c in clusters]
    for tr in tracks:
        for ci, c in enumerate(cents):
            d = float(np.hypot(*(tr.centroid - c)))
            if d <= gate:
                cand.append((d, tr.id, ci))
    cand.sort()
    used_t, used_c, matches = set(), set(), []
    for _, tid, ci in cand:
        if tid in used_t or ci in used_c:
            continue
        used_t.add(tid)
        used_c.add(ci)
        matches.append((tid, ci))
    births = [ci for ci in range(len(clusters)) if ci not in used_c]
    deaths = [tr.id for tr in tracks if tr.id not in used_t and tr.missed + 1 > miss_limit]
    return Association(matches, births, deaths)


def _check_cov(cov: np.ndarray) -> None:
    if cov.shape != (4, 4) or not np.all(np.isfinite(cov)):
        raise CovarianceError("covariance must be a finite 4x4 matrix")
    if not np.allclose(cov, cov.T, atol=1e-9, rtol=0.0):
        raise CovarianceError("covariance is not symmetric")
    if np.linalg.eigvalsh(cov).min() < -1e-9:
        raise CovarianceError("covariance is not positive semidefinite")


def _transition(dt: float, q: float):
    F = np.eye(4)
    F[0, 2] = F[1, 3] = dt
    # discretized white-noise acceleration, per axis
    g = np.array([0.5 * dt * dt, dt])
    blk = q * q * np.outer(g, g)
    Q = np.zeros((4, 4))
    for ax in (0, 1):
        idx = [ax, ax + 2]
        Q[np.ix_(idx, idx)] = blk
    return F, Q


_H = np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0]])


def kalman_predict(track: TrackedObstacle, dt: float, q: float = 0.05) -> TrackedObstacle:
    F, Q = _transition(dt, q)
    cov = F @ track.cov @ F.T + Q
    return replace(track, state=F @ track.state, cov=0.5 * (cov + cov.T))


def kalman_update(track: TrackedObstacle, measured, dt: float, q: float = 0.05, r: float = 0.05) -> TrackedObstacle:
    """Constant-velocity predict then position update (Joseph form).

    The returned track's ``state[2:]`` is the raw velocity estimate; the
    smoothed ``velocity`` field is left for :func:`smooth_velocity`.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    _check_cov(np.asarray(track.cov, dtype=float))
    pred = kalman_predict(track, dt, q)
    x, P = pred.state, pred.cov
    R = r * r * np.eye(2)
    innov = np.asarray(measured, dtype=float) - _H @ x
    S = _H @ P @ _H.T + R
    K = np.linalg.solve(S, _H @ P).T
    x = x + K @ innov
    A = np.eye(4) - K @ _H
    P = A @ P @ A.T + K @ R @ K.T
    return replace(track, state=x, cov=0.5 * (P + P.T), age=track.age + 1, missed=0)


def smooth_velocity(prev, meas, alpha: float = SMOOTHING_ALPHA) -> np.ndarray:
    """Exponential smoothing ``alpha * prev + (1 - alpha) * meas``."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    return alpha * np.asarray(prev, dtype=float) + (1.0 - alpha) * np.asarray(meas, dtype=float)


@dataclass
class TrackerState:
    tracks: list[TrackedObstacle] = field(default_factory=list)
    next_id: int = 0
    last_time: float | None = None

    def copy(self) -> TrackerState:
        return TrackerState(list(self.tracks), self.next_id, self.last_time)


def _new_track(tid: int, cluster: Cluster, cfg: PerceptionConfig) -> TrackedObstacle:
    c = cluster.centroid
    r2 = cfg.measurement_noise ** 2
    cov = np.diag([r2, r2, cfg.init_velocity_var, cfg.init_velocity_var])
    return TrackedObstacle(tid, np.array([c[0], c[1], 0.0, 0.0]), cov, np.zeros(2), cluster=cluster)


def track_frame(state: TrackerState, cloud: PointCloud2D, cfg: PerceptionConfig) -> TrackerState:
    """Fold one world-frame cloud into the tracker."""
    state = state.copy()
    smoothed = gaussian_filter(cloud, cfg.sigma) if len(cloud) else cloud
    clusters, _ = dbscan(smoothed, cfg.dbscan)
    dt = None if state.last_time is None else cloud.timestamp - state.last_time
    assoc = match_clusters(state.tracks, clusters, cfg.gate, cfg.miss_limit)
    by_track = dict(assoc.matches)
    dead = set(assoc.deaths)
    tracks = []
    for tr in state.tracks:
        if tr.id in dead:
            continue
        if tr.id in by_track:
            cl = clusters[by_track[tr.id]]
            upd = kalman_update(tr, cl.centroid, dt, cfg.process_noise, cfg.measurement_noise)
            vel = smooth_velocity(tr.velocity, upd.state[2:], cfg.alpha)
            tracks.append(replace(upd, velocity=vel, cluster=cl))
        else:
            coast = kalman_predict(tr, dt, cfg.process_noise) if dt else tr
            tracks.append(replace(coast, missed=tr.missed + 1))
    for ci in assoc.births:
        tracks.append(_new_track(state.next_id, clusters[ci], cfg))
        state.next_id += 1
    state.tracks = tracks
    state.last_time = cloud.timestamp
    return state


def perceive(buffer: FrameBuffer, state: TrackerState | None = None,
             cfg: PerceptionConfig = PerceptionConfig()) -> tuple[list[TrackedObstacle], TrackerState]:
    """Bring the tracker up to date with ``buffer``.

    Frames newer than the tracker's last processed timestamp are folded in
    oldest first, so a fresh tracker replays the whole history. Returns the
    tracks observed in the newest frame and the new tracker state.
    """
    if len(buffer) == 0:
        raise ValueError("frame buffer is empty")
    state = TrackerState() if state is None else state
    for cloud in buffer:
        if state.last_time is None or cloud.timestamp > state.last_time:
            state = track_frame(state, cloud, cfg)
    live = [tr for tr in state.tracks if tr.missed == 0]
    return live, state

