"""Report files: metrics.json, table.csv, per-trial trajectory CSV and SVG."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .harness import TRAJ_HEADER, TrialResult, summarize

TIMING_FIELDS = ("mean_cycle_ms", "p95_cycle_ms")


def _clean(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, np.floating):
        return _clean(float(value))
    return value


def metrics_document(results: list[TrialResult], timing: bool = True) -> dict:
    trials = []
    for tr in results:
        m = tr.metrics
        rec = {
            "scenario": m.scenario,
            "mode": m.mode,
            "planner": m.planner,
            "seed": m.seed,
            "status": m.status,
            "path_length_m": m.path_length_m,
            "min_clearance_m": m.min_clearance_m,
            "steps": m.steps,
            "mean_cycle_ms": m.mean_cycle_ms if timing else None,
            "p95_cycle_ms": m.p95_cycle_ms if timing else None,
            "trajectory": f"traj_{tr.trial_id}.csv",
        }
        trials.append({k: _clean(v) for k, v in rec.items()})
    summary = summarize(results)
    for row in summary:
        if not timing:
            row["mean_cycle_ms"] = None
    return {"trials": trials, "summary": [{k: _clean(v) for k, v in r.items()} for r in summary]}


def write_trajectory(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJ_HEADER)
        for r in rows:
            w.writerow([repr(float(v)) for v in r])


def write_timing(path: Path, results: list[TrialResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("cycle", "stage", "microseconds"))
        for tr in results:
            for i, stages in enumerate(tr.timings):
                for stage, sec in stages.items():
                    w.writerow((i, stage, f"{sec * 1e6:.1f}"))


def plot_trial(path: Path, result: TrialResult) -> None:
    """Overhead SVG: obstacles, dynamic obstacle paths, waypoints, trajectory."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.patches import Circle, Polygon

    sc = result.scenario
    plt.rcParams["svg.hashsalt"] = "dynnav"
    fig, ax = plt.subplots(figsize=(7, 7))
    for ob in sc.obstacles:
        pos = ob.position_at(0.0)
        dyn = ob.motion != "static"
        color = "0.55" if dyn else "black"
        if ob.shape == "disc":
            ax.add_patch(Circle(pos, ob.radius, color=color))
        else:
            ax.add_patch(Polygon(ob.world_vertices(pos), closed=True, color=color))
        if dyn:
            knots = np.array([k[1:] for k in ob.waypath])
            ax.plot(knots[:, 0], knots[:, 1], "--", color="goldenrod", lw=1)
            ax.annotate("", xy=knots[1], xytext=knots[0],
                        arrowprops=dict(arrowstyle="->", color="goldenrod"))
    wp = np.array(sc.waypoints)
    ax.plot(wp[:, 0], wp[:, 1], "-o", color="tab:blue", lw=0.8, ms=4, label="waypoints")
    traj = np.array([(r[1], r[2]) for r in result.trajectory])
    ax.plot(traj[:, 0], traj[:, 1], color="tab:red", lw=1.5, label="robot")
    gx, gy, tol = sc.goal
    ax.add_patch(Circle((gx, gy), tol, fill=False, color="tab:green"))
    m = result.metrics
    ax.set_title(f"{m.scenario} {m.mode} seed {m.seed}: {m.status}, {m.path_length_m:.2f} m")
    xmin, ymin, xmax, ymax = sc.map_bounds
    ax.set_xlim(xmin, xmax)
    ax.set_ylim(ymin, ymax)
    ax.set_aspect("equal")
    ax.legend(loc="upper right", fontsize=8)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_report(results: list[TrialResult], out_dir, timing: bool = True, plots: bool = True,
                timing_csv: bool = False) -> list[Path]:
    """Write all report files into ``out_dir``; returns the paths written."""
    if not results:
        raise ValueError("no results to report")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = []
        doc = metrics_document(results, timing)
        p = out / "metrics.json"
        p.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        written.append(p)

        p = out / "table.csv"
        with open(p, "w", newline="") as fh:
            rows = doc["summary"]
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
        written.append(p)

        for tr in results:
            p = out / f"traj_{tr.trial_id}.csv"
            write_trajectory(p, tr.trajectory)
            written.append(p)
            if plots and tr.scenario is not None:
                p = out / f"traj_{tr.trial_id}.svg"
                plot_trial(p, tr)
                written.append(p)
        if timing_csv:
            p = out / "timing.csv"
            write_timing(p, results)
            written.append(p)
    except OSError as exc:
        raise OSError(f"{exc.filename or out}: {exc.strerror or exc}") from exc
    return written
