"""Benchmark the compiled quadrature kernels against the pure-python
fallback and confirm both backends agree.

Run as: python benchmarks/bench_quadrature.py
"""

import time

import numpy as np

from fraqhom import KERNEL_BACKEND
from fraqhom import _quad_py

try:
    from fraqhom import _quad_cy
except ImportError:
    _quad_cy = None


def _time(fn, *args, repeat=3):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def _agree(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = max(np.max(np.abs(a)), 1e-300)
    return np.max(np.abs(a - b)) / scale


def bench_1d():
    rng = np.random.default_rng(0)
    n = 2048
    h = 16.0 / n
    x = -8.0 + h * (np.arange(n) + 0.5)
    u = np.exp(-x ** 2) * np.sin(x)
    idx = rng.integers(200, n - 200, size=256)
    m = np.minimum(idx, n - 1 - idx)
    args = (u, x, h, 0.5, idx, m)
    rows = []
    t_py, (s_py, w_py) = _time(_quad_py.quad_sums_1d, *args)
    rows.append(("quad_sums_1d", "pure", t_py, 0.0))
    if _quad_cy is not None:
        t_cy, (s_cy, w_cy) = _time(_quad_cy.quad_sums_1d, *args)
        dev = max(_agree(s_py, s_cy), _agree(w_py, w_cy))
        rows.append(("quad_sums_1d", "compiled", t_cy, dev))
    phi = np.exp(-(x - 0.5) ** 2)
    t_py, l_py = _time(_quad_py.leibniz_sum_1d, phi, u, x, h, 0.5)
    rows.append(("leibniz_sum_1d", "pure", t_py, 0.0))
    if _quad_cy is not None:
        t_cy, l_cy = _time(_quad_cy.leibniz_sum_1d, phi, u, x, h, 0.5)
        rows.append(("leibniz_sum_1d", "compiled", t_cy, _agree(l_py, l_cy)))
    return rows


def bench_2d():
    rng = np.random.default_rng(1)
    n = 128
    h = 8.0 / n
    x = -4.0 + h * (np.arange(n) + 0.5)
    xx, yy = np.meshgrid(x, x, indexing="ij")
    u = np.exp(-(xx ** 2 + yy ** 2))
    i0 = rng.integers(20, n - 20, size=64)
    j0 = rng.integers(20, n - 20, size=64)
    m = np.minimum(np.minimum(i0, n - 1 - i0), np.minimum(j0, n - 1 - j0))
    args = (u, x, h, 0.5, i0, j0, m)
    rows = []
    t_py, (s_py, w_py) = _time(_quad_py.quad_sums_2d, *args)
    rows.append(("quad_sums_2d", "pure", t_py, 0.0))
    if _quad_cy is not None:
        t_cy, (s_cy, w_cy) = _time(_quad_cy.quad_sums_2d, *args)
        dev = max(_agree(s_py, s_cy), _agree(w_py, w_cy))
        rows.append(("quad_sums_2d", "compiled", t_cy, dev))
    phi = np.exp(-((xx - 0.5) ** 2 + yy ** 2))
    t_py, l_py = _time(_quad_py.leibniz_sum_2d, phi, u, x, h, 0.5)
    rows.append(("leibniz_sum_2d", "pure", t_py, 0.0))
    if _quad_cy is not None:
        t_cy, l_cy = _time(_quad_cy.leibniz_sum_2d, phi, u, x, h, 0.5)
        rows.append(("leibniz_sum_2d", "compiled", t_cy, _agree(l_py, l_cy)))
    return rows


def main():
    print(f"selected backend at import: {KERNEL_BACKEND}")
    if _quad_cy is None:
        print("compiled backend unavailable; timing the pure fallback only")
    rows = bench_1d() + bench_2d()
    print(f"{'kernel':<16} {'backend':<9} {'best (ms)':>10} {'rel dev':>10}")
    speedups = {}
    for name, backend, t, dev in rows:
        print(f"{name:<16} {backend:<9} {1e3 * t:>10.2f} {dev:>10.2e}")
        speedups.setdefault(name, {})[backend] = t
    for name, t in speedups.items():
        if "compiled" in t:
            print(f"{name}: compiled is {t['pure'] / t['compiled']:.1f}x faster")


if __name__ == "__main__":
    main()
