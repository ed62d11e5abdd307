"""Benchmark the compiled kernel extension against the pure NumPy fallback.

The two implementations are imported directly (bypassing the backend selector)
so both can be timed in one process. Checks agreement to round-off before
timing.

Run: python benchmarks/bench_kernels.py [--drones 9] [--samples 64] [--repeat 200]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from swarmchor import _kernels_py

try:
    from swarmchor import _kernels as _compiled
except ImportError:
    _compiled = None


def make_case(rng, n_drones: int, n_samples: int):
    p = rng.uniform(-1.5, 1.5, size=(n_samples, 3))
    p[:, 2] = rng.uniform(0.3, 2.0, size=n_samples)
    neighbors = rng.uniform(-1.5, 1.5, size=(n_drones - 1, n_samples, 3))
    neighbors[:, :, 2] = rng.uniform(0.3, 2.0, size=(n_drones - 1, n_samples))
    positions = np.concatenate([p[None], neighbors], axis=0)
    inv_axes = 1.0 / np.array([0.25, 0.25, 0.6])
    return p, neighbors, positions, inv_axes


def check_agreement(case, gamma: float) -> None:
    p, neighbors, positions, inv_axes = case
    t_py, a_py = _kernels_py.collision_projection(p, neighbors, inv_axes, gamma, 1.05)
    t_c, a_c = _compiled.collision_projection(p, neighbors, inv_axes, gamma, 1.05)
    assert np.array_equal(a_py, a_c), "active masks differ"
    assert np.allclose(t_py, t_c, rtol=1e-12, atol=1e-12), "projection targets differ"
    h_py = _kernels_py.pair_clearance_series(positions, inv_axes)
    h_c = _compiled.pair_clearance_series(positions, inv_axes)
    assert np.allclose(h_py, h_c, rtol=1e-12, atol=1e-12), "clearance series differ"
    m_py = _kernels_py.min_pair_clearance(positions, inv_axes)
    m_c = _compiled.min_pair_clearance(positions, inv_axes)
    assert abs(m_py - m_c) < 1e-12, "min clearance differs"


def bench(fn, repeat: int) -> float:
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--drones", type=int, default=9)
    ap.add_argument("--samples", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    if _compiled is None:
        print("compiled extension not available; nothing to compare")
        return 1

    rng = np.random.default_rng(args.seed)
    case = make_case(rng, args.drones, args.samples)
    p, neighbors, positions, inv_axes = case
    for gamma in (0.5, 1.0):
        check_agreement(case, gamma)
    print(f"agreement OK ({args.drones} drones, {args.samples} samples)")
    print(f"{'kernel':<24}{'python':>12}{'compiled':>12}{'speedup':>9}")

    cases = [
        ("collision_projection",
         lambda mod: mod.collision_projection(p, neighbors, inv_axes, 0.5, 1.05)),
        ("pair_clearance_series",
         lambda mod: mod.pair_clearance_series(positions, inv_axes)),
        ("min_pair_clearance",
         lambda mod: mod.min_pair_clearance(positions, inv_axes)),
    ]
    for name, call in cases:
        t_py = bench(lambda: call(_kernels_py), args.repeat)
        t_c = bench(lambda: call(_compiled), args.repeat)
        print(f"{name:<24}{t_py * 1e6:>10.1f}us{t_c * 1e6:>10.1f}us{t_py / t_c:>8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
