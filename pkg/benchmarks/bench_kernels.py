#!/usr/bin/env python3
"""Benchmark the compiled CPN kernels against the pure-Python twin.

Times the three hot kernels (excitation fixed point, learning update,
smart-packet walk + acknowledgement processing) on identical inputs, and
one full simulation run per backend in a subprocess (backend selection
happens at import time). Run from the repository root:

    python benchmarks/bench_kernels.py
"""
from __future__ import annotations

import os
import subprocess
import sys
import time

import numpy as np

from cpnevac._kernels import cpn_py

try:
    from cpnevac._kernels import _cpn_c as cpn_c
except ImportError:
    cpn_c = None

SOLVE = dict(ext_exc=0.25, ext_inh=0.0, damping=0.5, tol=1e-6, max_iter=200)


def timeit(fn, repeat: int) -> float:
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def bench_solve(impl, d=4, repeat=2000) -> float:
    rng = np.random.default_rng(1)
    wp = rng.uniform(0, 0.5, (d, d))
    wm = rng.uniform(0, 0.5, (d, d))
    np.fill_diagonal(wp, 0)
    np.fill_diagonal(wm, 0)
    wp, wm = np.ascontiguousarray(wp), np.ascontiguousarray(wm)
    q = np.full(d, 0.5)

    def once():
        q[:] = 0.5
        impl.solve_node(wp, wm, q, **SOLVE)

    return timeit(once, repeat)


def bench_reinforce(impl, d=4, repeat=2000) -> float:
    rng = np.random.default_rng(2)
    wp = rng.uniform(0, 0.5, (d, d))
    wm = rng.uniform(0, 0.5, (d, d))
    np.fill_diagonal(wp, 0)
    np.fill_diagonal(wm, 0)
    wp, wm = np.ascontiguousarray(wp), np.ascontiguousarray(wm)
    q = np.full(d, 0.5)
    thr = np.zeros(1)
    step = [0]

    def once():
        impl.reinforce_node(
            wp, wm, q, thr, step[0] % d, 0.3, 0.8, 0.1, **SOLVE
        )
        step[0] += 1

    return timeit(once, repeat)


def bench_walk_ack(impl, repeat=400) -> float:
    """One exploration cycle on the bundled building graph."""
    from cpnevac.building import fixture_path, load_graph

    graph = load_graph(fixture_path())
    idx = graph.index()
    nv = idx.n_slots
    degrees = np.diff(idx.indptr)
    w_off = np.zeros(idx.n_vertices, dtype=np.int64)
    np.cumsum(degrees[:-1] ** 2, out=w_off[1:])
    total = int(np.sum(degrees**2))
    wp = np.zeros(total)
    wm = np.zeros(total)
    for vi in range(idx.n_vertices):
        d = int(degrees[vi])
        if d >= 2:
            block = np.full((d, d), 1.0 / (2 * (d - 1)))
            np.fill_diagonal(block, 0.0)
            off = int(w_off[vi])
            wp[off : off + d * d] = block.ravel()
            wm[off : off + d * d] = block.ravel()
    q = np.full(nv, 0.5)
    thr = np.zeros(idx.n_vertices)
    eff = idx.slot_len.copy()
    t_haz = np.full(idx.n_vertices, 1e9)
    growth = np.zeros(idx.n_vertices)
    qlen = np.zeros(idx.n_vertices)
    arr = np.zeros(idx.n_vertices)
    rng = np.zeros(2, dtype=np.uint64)
    impl.pcg_seed(rng, 42)
    visited = np.zeros(idx.n_vertices, dtype=np.int64)
    path = np.zeros(40, dtype=np.int32)
    slots = np.zeros(40, dtype=np.int32)
    cand = np.zeros(8, dtype=np.int32)
    goal = np.zeros(40)
    cong = np.zeros(40)
    source = idx.vidx[305]
    stamp = [0]

    def once():
        stamp[0] += 1
        n = impl.walk(
            idx.indptr, idx.indices, idx.is_exit, q, source, 0.05, 31,
            rng, visited, stamp[0], path, slots, cand,
        )
        if n > 0:
            impl.process_ack(
                idx.indptr, idx.indices, w_off, wp, wm, q, thr,
                eff, t_haz, growth, qlen, arr, 0, 130.0,
                path, slots, n, 0.25, 0.0, 0.5, 1e-6, 200, 0.8, 0.1,
                goal, cong,
            )

    return timeit(once, repeat)


def bench_simulation(backend: str) -> float:
    """Wall time of one seeded occupancy-60 run under a given backend."""
    script = (
        "import time\n"
        "from dataclasses import replace\n"
        "from cpnevac.building import fixture_path\n"
        "from cpnevac.config import config_from_file, MetricMode\n"
        "from cpnevac.engine import run\n"
        "cfg = config_from_file(fixture_path().parent / 'demo.cfg')\n"
        "cfg = replace(cfg, occupancy=60, metric_mode=MetricMode.CM, radius=0.0)\n"
        "t0 = time.perf_counter()\n"
        "run(cfg, seed=1)\n"
        "print(time.perf_counter() - t0)\n"
    )
    env = dict(os.environ, CPNEVAC_KERNEL=backend)
    out = subprocess.run(
        [sys.executable, "-c", script], capture_output=True, text=True, env=env
    )
    if out.returncode != 0:
        raise RuntimeError(out.stderr)
    return float(out.stdout.strip())


def main() -> None:
    impls = [("python", cpn_py)] + ([("compiled", cpn_c)] if cpn_c else [])
    rows = {}
    for name, impl in impls:
        rows[name] = {
            "solve_node": bench_solve(impl),
            "reinforce_node": bench_reinforce(impl),
            "walk+ack": bench_walk_ack(impl),
        }
    print(f"{'kernel':<16}" + "".join(f"{name:>14}" for name in rows))
    for key in ("solve_node", "reinforce_node", "walk+ack"):
        line = f"{key:<16}"
        for name in rows:
            line += f"{rows[name][key]*1e6:>11.1f} us"
        if len(rows) == 2:
            ratio = rows["python"][key] / rows["compiled"][key]
            line += f"   ({ratio:.0f}x)"
        print(line)

    if cpn_c is not None:
        py = bench_simulation("py")
        cc = bench_simulation("c")
        print(
            f"{'full run':<16}{py:>11.2f} s {cc:>12.2f} s   ({py / cc:.1f}x)"
        )
    else:
        print("compiled kernels unavailable; pure-Python timings only")


if __name__ == "__main__":
    main()
