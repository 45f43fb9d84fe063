"""Time the compiled kernels against the pure-Python fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel is run on a workload shaped like its use in training, inference
or scoring; the table reports the best-of-N wall time per call.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from casanet import kernels


def workloads(rng):
    scores = rng.normal(size=(8, 4, 200, 200))
    probs = kernels.python_backend.softmax_rows(scores)
    grad = rng.normal(size=scores.shape)
    series = rng.random(1500)
    n_ev = 2000
    times = np.sort(rng.uniform(0, 600, n_ev))
    who = rng.integers(0, 8, n_ev)
    delta = np.where(np.arange(n_ev) % 2 == 0, 1, -1)
    cost = rng.random((8, 8))
    a = np.sort(rng.uniform(0, 600, 400)).reshape(-1, 2)
    b = np.sort(rng.uniform(0, 600, 400)).reshape(-1, 2)
    return {
        "softmax_rows (8x4x200x200)": lambda k: k.softmax_rows(scores),
        "softmax_rows_backward": lambda k: k.softmax_rows_backward(probs, grad, 0.125),
        "median_filter (1500, w=11)": lambda k: k.median_filter(series, 11),
        "label_runs (1500)": lambda k: k.label_runs(series > 0.5),
        "intersection_length (200x200)": lambda k: k.intersection_length(a[:, 0], a[:, 1], b[:, 0], b[:, 1]),
        "sweep_components (2000 events)": lambda k: k.sweep_components(
            times, who, delta, 4, 4, np.arange(4)
        ),
        "assign_min_cost (8x8)": lambda k: k.assign_min_cost(cost),
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if kernels.compiled_backend is None:
        print("compiled extension not built; only the Python backend is available")
    backends = [("python", kernels.python_backend)]
    if kernels.compiled_backend is not None:
        backends.append(("cython", kernels.compiled_backend))
    rng = np.random.default_rng(0)
    print(f"{'kernel':<32s}" + "".join(f"{name:>14s}" for name, _ in backends) + f"{'speedup':>10s}")
    for label, fn in workloads(rng).items():
        cols = []
        for _, impl in backends:
            number = 3
            t = min(timeit.repeat(lambda: fn(impl), number=number, repeat=args.repeat)) / number
            cols.append(t)
        speed = f"{cols[0] / cols[1]:9.1f}x" if len(cols) == 2 else ""
        print(f"{label:<32s}" + "".join(f"{1e3 * t:12.3f}ms" for t in cols) + speed)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
