"""Compare the numba kernels against the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py``.  Each kernel is timed on
both backends in this process (after one warm-up call so compilation is not
counted), the outputs are checked against each other, and a final section
times a whole surface-tension solve in two subprocesses, one with
``ACHLAB_DISABLE_NUMBA=1`` and one without.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from achlab import build_double_well, build_product_triple_well
from achlab.kernels import _potential_args, backend


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def polyline_case(P, K):
    a, b = P.minima[0], P.minima[1]
    s = np.linspace(0.0, 1.0, K + 1)[:, None]
    bend = np.sin(np.pi * s) * 0.2
    path = a + s * (b - a) + bend
    path[0], path[-1] = a, b
    return path


def bench_polyline(repeat):
    rows = []
    for label, P in (("double well", build_double_well()),
                     ("triple well", build_product_triple_well([1, 0], [0, 1]))):
        path = polyline_case(P, 256)
        form, minima, sr, st = _potential_args(P)
        for kernel in ("polyline_action", "polyline_descent"):
            results = {}
            for name in ("numba", "numpy"):
                mod = backend(name)
                if kernel == "polyline_action":
                    call = lambda: mod.polyline_action(path, form, minima, sr, st)  # noqa: E731
                else:
                    call = lambda: mod.polyline_descent(path, form, minima, sr, st, 20000, 1e-10, 10)  # noqa: E731
                call()
                results[name] = best_of(call, repeat)
            t_nb, out_nb = results["numba"]
            t_np, out_np = results["numpy"]
            diff = abs(float(out_nb[1] if kernel == "polyline_descent" else out_nb[0])
                       - float(out_np[1] if kernel == "polyline_descent" else out_np[0]))
            rows.append((f"{kernel} ({label}, K=256)", t_nb, t_np, diff))
    return rows


def bench_geometry(repeat):
    rng = np.random.default_rng(0)
    lengths = np.array([1.0, 1.0])
    spacing = np.array([1 / 256, 1 / 256])
    points = rng.random((4000, 2))
    faces = rng.random((600, 2))
    axes = rng.integers(0, 2, size=600)
    cloud = rng.random((3000, 2))
    rows = []
    for label, make in (("face_distances 4000x600", lambda m: lambda: m.face_distances(points, faces, axes,
                                                                                         spacing, lengths)),
                        ("max_pair_distance 3000", lambda m: lambda: m.max_pair_distance(cloud, lengths))):
        results = {}
        for name in ("numba", "numpy"):
            call = make(backend(name))
            call()
            results[name] = best_of(call, repeat)
        diff = float(np.max(np.abs(np.asarray(results["numba"][1]) - np.asarray(results["numpy"][1]))))
        rows.append((label, results["numba"][0], results["numpy"][0], diff))
    return rows


_END_TO_END = (
    "import time;"
    "from achlab import build_product_triple_well, tension_matrix;"
    "from achlab.kernels import ACTIVE;"
    "P = build_product_triple_well([1, 0], [0, 1]);"
    "tension_matrix(P, 64);"
    "t0 = time.perf_counter(); T = tension_matrix(P, 256); dt = time.perf_counter() - t0;"
    "print(ACTIVE, dt, T.omega[0, 1])"
)


def end_to_end():
    out = []
    for disable in ("0", "1"):
        env = dict(os.environ, ACHLAB_DISABLE_NUMBA=disable)
        res = subprocess.run([sys.executable, "-c", _END_TO_END], env=env, capture_output=True, text=True,
                             check=True)
        name, dt, omega = res.stdout.split()
        out.append((name, float(dt), float(omega)))
    return out


def main(argv=None):
    parser = argparse.ArgumentParser(description="numba vs numpy kernel timings")
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--skip-end-to-end", action="store_true")
    args = parser.parse_args(argv)

    print(f"{'kernel':44s} {'numba [s]':>11s} {'numpy [s]':>11s} {'speedup':>8s} {'|diff|':>10s}")
    for label, t_nb, t_np, diff in bench_polyline(args.repeat) + bench_geometry(args.repeat):
        print(f"{label:44s} {t_nb:11.5f} {t_np:11.5f} {t_np / t_nb:8.1f} {diff:10.2e}")
    if not args.skip_end_to_end:
        print()
        print("tension_matrix, triple well, K=256 (fresh interpreter per backend)")
        for name, dt, omega in end_to_end():
            print(f"  {name:6s} {dt:8.3f} s   omega_12 = {omega:.10f}")


if __name__ == "__main__":
    main()
