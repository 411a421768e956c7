"""Command line entry point: ``run``, ``ablate`` and ``bench``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import kernels
from .harness import bench_latency, run_ablation, run_trial
from .planner import AblationMode
from .report import emit_report
from .scenario import ScenarioError, load_scenario


def _seeds(values: list[str]) -> list[int]:
    out = []
    for v in values:
        for part in v.split(","):
            if "-" in part.strip("-"):
                lo, hi = part.split("-", 1)
                out.extend(range(int(lo), int(hi) + 1))
            elif part:
                out.append(int(part))
    return out


def _exit_code(results) -> int:
    return 1 if any(r.metrics.status == "solver_error" for r in results) else 0


def cmd_run(args) -> int:
    sc = load_scenario(args.scenario, seed=args.seed)
    res = run_trial(sc, AblationMode.parse(args.mode), sc.seed, args.planner)
    emit_report([res], args.out, timing=not args.no_timing, plots=not args.no_plot, timing_csv=args.timing)
    m = res.metrics
    print(f"{m.scenario} {m.mode} seed={m.seed}: {m.status} path={m.path_length_m:.3f} m "
          f"min_clearance={m.min_clearance_m:.3f} m steps={m.steps} mean_cycle={m.mean_cycle_ms:.2f} ms")
    return _exit_code([res])


def cmd_ablate(args) -> int:
    res = run_ablation(args.scenarios, args.modes, _seeds(args.seeds), args.planner, args.jobs)
    emit_report(res.trials, args.out, timing=not args.no_timing, plots=not args.no_plot, timing_csv=args.timing)
    for row in res.table:
        path = "-" if row["mean_path_m"] is None else f"{row['mean_path_m']:.3f}"
        print(f"{row['scenario']:<14} {row['mode']:<30} success={row['success_rate']:.2f} "
              f"path={path} m")
    return _exit_code(res.trials)


def cmd_bench(args) -> int:
    sc = load_scenario(args.scenario)
    summary = bench_latency(sc, args.cycles, AblationMode.parse(args.mode), planner=args.planner)
    print(f"backend={kernels.BACKEND} cycles={summary.cycles}")
    print(f"{'stage':<12} {'mean_ms':>9} {'p50_ms':>9} {'p95_ms':>9}")
    for r in summary.rows:
        print(f"{r['stage']:<12} {r['mean_ms']:9.3f} {r['p50_ms']:9.3f} {r['p95_ms']:9.3f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        doc = {"backend": kernels.BACKEND, "cycles": summary.cycles, "stages": summary.rows}
        (out / "latency.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dynnav", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--planner", choices=("mfneupan", "dwa"), default="mfneupan")
        sp.add_argument("--out", default="out")
        sp.add_argument("--timing", action="store_true", help="also write timing.csv (cycle,stage,microseconds)")
        sp.add_argument("--no-timing", action="store_true", help="omit timing fields from metrics.json")
        sp.add_argument("--no-plot", action="store_true", help="skip SVG plots")

    r = sub.add_parser("run", help="run one trial")
    r.add_argument("scenario", help="scenario JSON path or canonical name")
    r.add_argument("--mode", default="gmm+multi_frame")
    r.add_argument("--seed", type=int, default=None)
    common(r)
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("ablate", help="scenario x mode x seed sweep")
    a.add_argument("scenarios", nargs="+")
    a.add_argument("--modes", nargs="+", required=True)
    a.add_argument("--seeds", nargs="+", default=["0-4"], help="e.g. 0 1 2, 0-4 or 0,3")
    a.add_argument("--jobs", type=int, default=1)
    common(a)
    a.set_defaults(func=cmd_ablate)

    b = sub.add_parser("bench", help="plan_cycle latency in the closed loop")
    b.add_argument("scenario")
    b.add_argument("--cycles", type=int, default=500)
    b.add_argument("--mode", default="gmm+multi_frame")
    b.add_argument("--planner", choices=("mfneupan", "dwa"), default="mfneupan")
    b.add_argument("--out", default=None)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
