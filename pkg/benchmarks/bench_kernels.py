"""Compare the compiled kernels with the numpy fallback.

Times each kernel on representative inputs for every importable backend,
then the full closed-loop ``plan_cycle`` under each backend (the fallback is
forced in a child process with ``DYNNAV_PURE_PYTHON=1``).

    python benchmarks/bench_kernels.py [--cycles 200] [--repeat 50]
"""
import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from dynnav.kernels import available_backends


def kernel_cases(rng):
    h, m = 20, 100
    u = np.column_stack([rng.uniform(0.5, 1.2, h), rng.uniform(-1, 1, h)])
    ref = np.column_stack([np.linspace(0, 2, h + 1), np.zeros(h + 1), np.zeros(h + 1)])
    pts = rng.uniform([0, -2], [3, 2], (m, 2))
    args = (u, np.zeros(3), ref, pts, np.ones(m), 0.1, np.array([1.0, 1.0, 0.2]),
            np.array([0.1, 0.05]), 10.0, 0.5, 0.4)
    scan = np.concatenate([c + rng.normal(0, 0.2, (150, 2)) for c in rng.uniform(-8, 8, (6, 2))])
    return {
        "rollout_cost_grad (H=20, M=100)": lambda k: k.rollout_cost_grad(*args),
        "dbscan_labels (n=900)": lambda k: k.dbscan_labels(scan, 1.0, 5),
        "gaussian_smooth (n=900)": lambda k: k.gaussian_smooth(scan, 0.05),
    }


def time_kernels(repeat):
    rows = []
    backends = available_backends()
    for name, fn in kernel_cases(np.random.default_rng(0)).items():
        row = {"kernel": name}
        for label, mod in backends.items():
            fn(mod)
            best = min(timeit.repeat(lambda: fn(mod), number=repeat, repeat=5)) / repeat
            row[label] = best * 1e6
        rows.append(row)
    return rows


def time_cycles(cycles, pure):
    env = dict(os.environ)
    env.pop("DYNNAV_PURE_PYTHON", None)
    if pure:
        env["DYNNAV_PURE_PYTHON"] = "1"
    code = (
        "import json; from dynnav import kernels; from dynnav.harness import bench_latency;"
        "from dynnav.scenario import load_scenario;"
        f"s = bench_latency(load_scenario('dense-dynamic'), {cycles});"
        "print(json.dumps({'backend': kernels.BACKEND, 'total': s.row('total'), 'solve': s.row('solve')}))"
    )
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cycles", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=50)
    args = ap.parse_args()

    rows = time_kernels(args.repeat)
    labels = [k for k in rows[0] if k != "kernel"]
    print(f"{'kernel':<34}" + "".join(f"{b + ' us':>14}" for b in labels) + (f"{'speedup':>10}" if len(labels) > 1 else ""))
    for r in rows:
        line = f"{r['kernel']:<34}" + "".join(f"{r[b]:14.1f}" for b in labels)
        if "cython" in r:
            line += f"{r['python'] / r['cython']:9.1f}x"
        print(line)

    print(f"\nplan_cycle on dense-dynamic, {args.cycles} cycles")
    print(f"{'backend':<10}{'mean_ms':>10}{'p95_ms':>10}{'solve_ms':>10}")
    modes = (False, True) if "cython" in labels else (True,)
    for pure in modes:
        r = time_cycles(args.cycles, pure)
        print(f"{r['backend']:<10}{r['total']['mean_ms']:10.2f}{r['total']['p95_ms']:10.2f}{r['solve']['mean_ms']:10.2f}")


if __name__ == "__main__":
    main()
