"""Timing comparison of the numba-compiled kernels vs the numpy fallbacks.

Run with ``python benchmarks/bench_backends.py``.  Reports per-call times
for each kernel at representative sizes; both backends are invoked on
identical inputs, so the table doubles as a coarse agreement check.
"""

from __future__ import annotations

import time

import numpy as np

from fairlift import backend


def _time(fn, *args, repeat: int = 200) -> float:
    fn(*args)  # warm (JIT-compiles on the numba path)
    start = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - start) / repeat


def _spd(rng, n):
    base = rng.normal(size=(n, n))
    return np.ascontiguousarray(base @ base.T + n * np.eye(n))


def main() -> None:
    try:
        tables = {"numpy": backend.kernels_for("numpy"), "numba": backend.kernels_for("numba")}
    except ImportError:
        print("numba is not importable; nothing to compare")
        return

    rng = np.random.default_rng(0)
    rows = []

    for n in (17, 32):
        base = rng.normal(size=(n, n))
        sym = np.ascontiguousarray(0.5 * (base + base.T))
        times = {
            name: _time(lambda k=k: k["jacobi_eigh"](sym, 1e-14, 64))
            for name, k in tables.items()
        }
        rows.append((f"jacobi_eigh {n}x{n}", times))

    for n in (17, 32):
        spd = _spd(rng, n)
        rhs = np.ascontiguousarray(rng.normal(size=(n, 8)))
        times = {}
        for name, k in tables.items():
            def solve(k=k):
                lower, _, _ = k["cholesky"](spd, 1e-12)
                k["chol_solve"](lower, rhs)
            times[name] = _time(solve)
        rows.append((f"cholesky+solve {n}x{n}x8", times))

    # fixed-point smoothing on a ring graph
    for n, alpha in ((17, 0.1), (32, 0.05)):
        adj = np.zeros((n, n))
        for i in range(n):
            adj[i, (i + 1) % n] = adj[(i + 1) % n, i] = 1.0
        a_tilde = adj + np.eye(n)
        deg = a_tilde.sum(1)
        s_norm = np.ascontiguousarray(a_tilde / np.sqrt(np.outer(deg, deg)))
        x = np.ascontiguousarray(rng.normal(size=(n, 3)))
        times = {
            name: _time(lambda k=k: k["fair_jacobi"](s_norm, x, alpha, 1e-10, 10_000), repeat=50)
            for name, k in tables.items()
        }
        rows.append((f"fair_jacobi {n} nodes alpha={alpha}", times))

    for size in (1_000, 100_000):
        param = rng.normal(size=size)
        grad = rng.normal(size=size)
        m = np.zeros(size)
        v = np.zeros(size)
        times = {
            name: _time(
                lambda k=k: k["adam_update"](param, grad, m, v, 1e-3, 0.9, 0.999, 1e-8, 0.1, 0.01)
            )
            for name, k in tables.items()
        }
        rows.append((f"adam_update {size} params", times))

    width = max(len(label) for label, _ in rows)
    print(f"{'kernel'.ljust(width)}  {'numpy':>12}  {'numba':>12}  {'speedup':>8}")
    for label, times in rows:
        speedup = times["numpy"] / times["numba"] if times["numba"] > 0 else float("inf")
        print(
            f"{label.ljust(width)}  {times['numpy'] * 1e6:>10.1f}us  "
            f"{times['numba'] * 1e6:>10.1f}us  {speedup:>7.1f}x"
        )


if __name__ == "__main__":
    main()
