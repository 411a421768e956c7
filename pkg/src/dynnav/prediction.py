"""Scattered virtual points along predicted obstacle paths.

A moving track (speed strictly above the threshold) contributes, for each
step ``j = 1..N``, points ``p + d*j*ds + perp*o`` where ``d`` is its unit
heading, ``perp`` the left normal and ``o`` a lateral offset drawn from a
three-component 1D Gaussian mixture.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GmmParams:
    means: tuple[float, float, float]
    variances: tuple[float, float, float]
    weights: tuple[float, float, float]

    def __post_init__(self):
        if not (len(self.means) == len(self.variances) == len(self.weights) == 3):
            raise ValueError("GMM needs exactly 3 components")
        if any(v <= 0 for v in self.variances):
            raise ValueError("GMM variances must be positive")
        if any(w < 0 for w in self.weights) or abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError("GMM weights must be non-negative and sum to 1")

    def mean(self) -> float:
        return float(np.dot(self.weights, self.means))

    def variance(self) -> float:
        m = np.asarray(self.means)
        second = float(np.dot(self.weights, np.asarray(self.variances) + m * m))
        return second - self.mean() ** 2


GMM_PRESETS = {
    "sim": GmmParams((0.0, 0.1, -0.1), (0.002, 0.002, 0.002), (0.4, 0.3, 0.3)),
    "real": GmmParams((0.0, 0.05, 0.1), (0.01, 0.01, 0.01), (0.3, 0.5, 0.2)),
}


@dataclass(frozen=True)
class PredictionConfig:
    gmm: GmmParams = GMM_PRESETS["sim"]
    speed_threshold: float = 0.3
    n_steps: int = 20
    dt_plan: float = 0.1
    samples_per_step: int = 3
    step_size: float | None = None  # None: speed * dt_plan per track
    offsets: str = "gmm"  # "gmm" or "zero" (constant-velocity baseline)

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.samples_per_step < 1:
            raise ValueError("samples_per_step must be >= 1")
        if self.step_size is not None and self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.offsets not in ("gmm", "zero"):
            raise ValueError("offsets must be 'gmm' or 'zero'")

    @classmethod
    def from_dict(cls, raw: dict, dt_plan: float = 0.1) -> PredictionConfig:
        raw = dict(raw)
        preset = raw.pop("gmm_preset", "sim")
        custom = raw.pop("gmm", None)
        if preset == "custom":
            if not isinstance(custom, dict):
                raise ValueError("prediction.gmm: required when gmm_preset is 'custom'")
            gmm = GmmParams(tuple(custom["means"]), tuple(custom["variances"]), tuple(custom["weights"]))
        elif preset in GMM_PRESETS:
            gmm = GMM_PRESETS[preset]
        else:
            raise ValueError(f"prediction.gmm_preset: expected sim, real or custom, got {preset!r}")
        raw.setdefault("dt_plan", dt_plan)
        return cls(gmm=gmm, **raw)


@dataclass(frozen=True)
class VirtualPoint:
    position: np.ndarray
    track_id: int
    step: int
    speed: float


def sample_gmm(params: GmmParams, rng: np.random.Generator, size=None):
    """Draw lateral offsets: component ~ Categorical(weights), then Normal(mean, var)."""
    k = rng.choice(3, size=size, p=params.weights)
    mu = np.asarray(params.means)[k]
    sd = np.sqrt(np.asarray(params.variances))[k]
    o = rng.normal(mu, sd)
    return float(o) if size is None else o


def scatter_offsets(track, cfg: PredictionConfig, rng) -> np.ndarray:
    """Offsets, shape (n_steps, samples_per_step), for one moving track."""
    shape = (cfg.n_steps, cfg.samples_per_step)
    if cfg.offsets == "zero":
        return np.zeros(shape)
    return sample_gmm(cfg.gmm, rng, size=shape)


def scatter_points(track, cfg: PredictionConfig, rng: np.random.Generator,
                   offsets: np.ndarray | None = None) -> list[VirtualPoint]:
    """Virtual points for one track; empty unless its speed exceeds the threshold.

    ``offsets`` (n_steps x samples_per_step) overrides the drawn offsets.
    """
    v = np.asarray(track.velocity, dtype=float)
    speed = math.hypot(v[0], v[1])
    if not speed > cfg.speed_threshold:
        return []
    d = v / speed
    perp = np.array([-d[1], d[0]])
    ds = cfg.step_size if cfg.step_size is not None else speed * cfg.dt_plan
    if offsets is None:
        offsets = scatter_offsets(track, cfg, rng)
    offsets = np.asarray(offsets, dtype=float).reshape(cfg.n_steps, cfg.samples_per_step)
    p = np.asarray(track.centroid, dtype=float)
    out = []
    for j in range(1, cfg.n_steps + 1):
        base = p + d * (j * ds)
        for o in offsets[j - 1]:
            out.append(VirtualPoint(base + perp * o, track.id, j, speed))
    return out


def predict(tracks, cfg: PredictionConfig, rng: np.random.Generator) -> list[VirtualPoint]:
    out = []
    for tr in tracks:
        out.extend(scatter_points(tr, cfg, rng))
    return out
