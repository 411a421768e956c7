"""Dynamic-window baseline: sample constant (v, omega) pairs, score the arcs.

Used for structural comparison with the optimizing planner
(``--planner dwa``). Works on the same body-frame inputs.
"""
import numpy as np

N_V = 11
N_W = 21
SIM_TIME = 1.5
W_GOAL, W_CLEAR, W_SPEED = 1.0, 0.3, 0.2


def _arcs(v, w, dt, steps):
    th = np.cumsum(np.broadcast_to(w * dt, (steps,) + w.shape), axis=0) - w * dt
    x = np.cumsum(v * np.cos(th) * dt, axis=0)
    y = np.cumsum(v * np.sin(th) * dt, axis=0)
    return x, y, th


def dwa_command(state, ref, pts, cfg):
    """Best (v, omega) by goal progress, clearance and speed; arcs that hit are dropped."""
    vs = np.linspace(0.0, cfg.v_max, N_V)
    ws = np.linspace(-cfg.omega_max, cfg.omega_max, N_W)
    V, W = np.meshgrid(vs, ws, indexing="ij")
    V, W = V.ravel(), W.ravel()
    steps = max(1, int(round(SIM_TIME / cfg.dt_plan)))
    x, y, _ = _arcs(V, W, cfg.dt_plan, steps)  # (steps, n)

    target = ref.states[-1, :2]
    goal_err = np.hypot(x[-1] - target[0], y[-1] - target[1])

    positions = pts.positions if len(pts) else np.empty((0, 2))
    if positions.shape[0]:
        dx = x[:, :, None] - positions[None, None, :, 0]
        dy = y[:, :, None] - positions[None, None, :, 1]
        gap = np.sqrt(dx * dx + dy * dy).min(axis=(0, 2)) - cfg.radius
    else:
        gap = np.full(V.shape, np.inf)
    ok = gap > 0.05
    if not ok.any():
        return 0.0, cfg.omega_max
    clear = np.minimum(gap, cfg.d_safe * 2) / (cfg.d_safe * 2)
    score = -W_GOAL * goal_err + W_CLEAR * clear + W_SPEED * V / cfg.v_max
    score = np.where(ok, score, -np.inf)
    best = int(np.argmax(score))
    return float(V[best]), float(W[best])
