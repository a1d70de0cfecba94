#!/usr/bin/env python3
"""Benchmark the numba-jitted kernels against their numpy fallbacks.

Runs each hot kernel on synthetic inputs sized like a mid-size placement
run and prints a speedup table. Both paths are imported directly, so the
ISLANDPLACE_NUMBA flag does not matter here (it selects the default path
used by the package).
"""

import argparse
import time

import numpy as np

from islandplace import accel
from islandplace.accel import (_b2b_pairs_loop, _b2b_pairs_np, _cg_loop,
                               _cg_np, _eval_delay_loop, _eval_delay_np,
                               _hpwl_per_net_loop, _hpwl_per_net_np,
                               _sta_backward_loop, _sta_backward_np,
                               _sta_forward_loop, _sta_forward_np)

try:
    from numba import njit
except ImportError:
    njit = None


def _time(fn, *args, repeat=5):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def build_inputs(n_inst, n_nets, seed=0):
    rng = np.random.default_rng(seed)
    ptr = [0]
    pins = []
    for _ in range(n_nets):
        p = int(rng.integers(2, 8))
        pins.extend(rng.choice(n_inst, size=p, replace=False))
        ptr.append(len(pins))
    ptr = np.array(ptr, dtype=np.int64)
    pins = np.array(pins, dtype=np.int64)
    x = rng.uniform(0, 60, size=n_inst)
    y = rng.uniform(0, 60, size=n_inst)
    w = rng.uniform(0.5, 2.0, size=n_nets)
    return ptr, pins, x, y, w, rng


def bench_hpwl(n_inst, n_nets, jit_fns):
    ptr, pins, x, y, w, _ = build_inputs(n_inst, n_nets)
    out = np.zeros(n_nets)
    t_jit, _ = _time(jit_fns["hpwl"], ptr, pins, x, y, out)
    t_np, _ = _time(_hpwl_per_net_np, ptr, pins, x, y, out)
    return t_jit, t_np


def bench_eval_delay(n_edges, jit_fns):
    rng = np.random.default_rng(1)
    dx = rng.uniform(0, 20, size=n_edges)
    dy = rng.uniform(0, 20, size=n_edges)
    breaks = np.array([3.0, 6.0])
    coeffs = rng.uniform(0, 0.3, size=(3, 4))
    ded = np.zeros(n_edges)
    pen = np.zeros(n_edges)
    out = np.empty(n_edges)
    args = (dx, dy, breaks, coeffs, 0.3, 0.5, ded, pen, out)
    t_jit, _ = _time(jit_fns["eval"], *args)
    t_np, _ = _time(_eval_delay_np, *args)
    return t_jit, t_np


def bench_cg(n, jit_fns):
    from scipy.sparse import random as sprandom

    rng = np.random.default_rng(2)
    a = sprandom(n, n, density=5.0 / n, random_state=3, format="csr")
    a = a + a.T
    a.setdiag(np.abs(a).sum(axis=1).A1 + 1.0)
    a = a.tocsr()
    b = rng.uniform(-1, 1, size=n)
    x0 = np.zeros(n)
    args = (a.indptr.astype(np.int64), a.indices.astype(np.int64),
            a.data.astype(np.float64), b, x0, 1e-8, 10 * n)
    t_jit, ja = _time(jit_fns["cg"], *args, repeat=3)
    t_np, na = _time(_cg_np, *args, repeat=3)
    assert np.allclose(ja[0], na[0], atol=1e-6)
    return t_jit, t_np


def bench_b2b(n_inst, n_nets, jit_fns):
    ptr, pins, x, _, w, _ = build_inputs(n_inst, n_nets, seed=4)
    counts = np.diff(ptr)
    cap = int(np.maximum(2 * counts - 1, 0).sum())

    def run(fn):
        pi = np.zeros(cap, dtype=np.int64)
        pj = np.zeros(cap, dtype=np.int64)
        pw = np.zeros(cap, dtype=np.float64)
        return fn(ptr, pins, w, x, 1e-4, pi, pj, pw)

    t_jit, _ = _time(lambda: run(jit_fns["b2b"]))
    t_np, _ = _time(lambda: run(_b2b_pairs_np))
    return t_jit, t_np


def bench_sta(n_inst, jit_fns):
    # long chain: worst case for the sweep loops
    from islandplace.model import Instance, Net, Netlist
    from islandplace.timing import build_timing_graph

    insts = [Instance(id=i, name=f"i{i}", kind="LUT",
                      is_timing_start=(i == 0),
                      is_timing_end=(i == n_inst - 1))
             for i in range(n_inst)]
    nets = [Net(id=e, weight=1.0, pins=[(e, "driver"), (e + 1, "sink")])
            for e in range(n_inst - 1)]
    nl = Netlist(insts, nets, [], 10.0)
    graph = build_timing_graph(nl)
    rng = np.random.default_rng(5)
    t_net = rng.uniform(0.1, 1.0, size=graph.n_edges)
    arr = np.zeros(n_inst)
    launch = np.zeros(n_inst)
    req = np.full(n_inst, np.inf)
    fargs = (graph.fwd_order, graph.in_ptr, graph.in_src, graph.in_eid,
             graph.t_logic, nl.tstart, t_net, arr, launch)
    bargs = (graph.bwd_order, graph.out_ptr, graph.out_dst, graph.out_eid,
             graph.t_logic, nl.tend, t_net, graph.dly_max, req)
    t_jit = (_time(jit_fns["fwd"], *fargs)[0]
             + _time(jit_fns["bwd"], *bargs)[0])
    t_np = (_time(_sta_forward_np, *fargs)[0]
            + _time(_sta_backward_np, *bargs)[0])
    return t_jit, t_np


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scale", type=float, default=1.0,
                    help="input size multiplier")
    args = ap.parse_args(argv)
    if njit is None:
        print("numba not available; nothing to compare")
        return 1
    s = args.scale
    jit_fns = {
        "hpwl": njit(cache=True)(_hpwl_per_net_loop),
        "eval": njit(cache=True, parallel=True)(_eval_delay_loop),
        "cg": njit(cache=True)(_cg_loop),
        "b2b": njit(cache=True)(_b2b_pairs_loop),
        "fwd": njit(cache=True)(_sta_forward_loop),
        "bwd": njit(cache=True)(_sta_backward_loop),
    }
    rows = [
        ("hpwl", *bench_hpwl(int(20000 * s), int(15000 * s), jit_fns)),
        ("eval_delay", *bench_eval_delay(int(200000 * s), jit_fns)),
        ("cg_solve", *bench_cg(int(20000 * s), jit_fns)),
        ("b2b_pairs", *bench_b2b(int(20000 * s), int(15000 * s), jit_fns)),
        ("sta_sweeps", *bench_sta(int(20000 * s), jit_fns)),
    ]
    print(f"{'kernel':<12} {'numba':>10} {'numpy':>10} {'speedup':>8}")
    for name, t_jit, t_np in rows:
        print(f"{name:<12} {t_jit * 1e3:9.2f}ms {t_np * 1e3:9.2f}ms "
              f"{t_np / t_jit:7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
