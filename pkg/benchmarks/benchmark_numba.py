#!/usr/bin/env python3
"""Compare the numba kernels against the pure-numpy fallback.

Runs each hot kernel with identical inputs in both modes and reports the
speedup.  The fallback is selected by re-importing the kernels module with
FRACTURE_NO_NUMBA=1 in a subprocess, so the two paths use exactly the code
a user would get.

Usage: python benchmarks/benchmark_numba.py [--repeat N]
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

WORKLOADS = ("strains", "clip_areas", "energy_terms", "cg", "tri_dist")


def build_inputs(seed=0):
    rng = np.random.default_rng(seed)
    n_tris = 20_000
    nodes = rng.uniform(0.0, 10.0, size=(n_tris * 3, 2))
    tris = np.arange(n_tris * 3, dtype=np.int64).reshape(n_tris, 3)
    values = rng.standard_normal((n_tris * 3, 2)) * 0.1
    return nodes, tris, values


def run_workload(name, repeat):
    from quasifrac import _kernels as K

    nodes, tris, values = build_inputs()
    bmats, areas = K.strain_b_matrices(nodes, tris)

    if name == "strains":
        def job():
            return K.strains_from_values(bmats, tris, values)
    elif name == "clip_areas":
        def job():
            return K.clip_areas_rect(nodes, tris, 2.0, 2.0, 8.0, 8.0)
    elif name == "energy_terms":
        strains = K.strains_from_values(bmats, tris, values)
        cmat = np.eye(3)
        w = np.abs(areas)

        def job():
            return K.truncated_energy_terms(strains, cmat, w, w, 0.05, 1.0)
    elif name == "cg":
        # small Poisson-like SPD system in CSR form
        n = 6_000
        main = np.full(n, 4.0)
        off = np.full(n - 1, -1.0)
        import scipy.sparse as sp
        a = sp.diags([off, main, off], [-1, 0, 1]).tocsr()
        free = np.ones(n)
        inv_diag = 1.0 / main
        rigid = np.zeros((n, 0))
        x0 = np.zeros(n)
        x0[0] = 1.0  # pinned head drives the solve
        free[0] = 0.0

        def job():
            return K.cg_deflated(a.indptr, a.indices, a.data, x0.copy(), free,
                                 inv_diag, rigid, 1e-10, 10 * n)
    elif name == "tri_dist":
        p = nodes[tris[:200]]

        def job():
            acc = 0.0
            for i in range(200):
                for j in range(i + 1, 200, 7):
                    acc += K.tri_tri_dist(p[i], p[j])
            return acc
    else:
        raise SystemExit(f"unknown workload {name}")

    job()  # warm-up (and JIT compile on the numba path)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        job()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--workload", choices=WORKLOADS, default=None,
                    help=argparse.SUPPRESS)  # internal: single-workload mode
    ap.add_argument("--mode", choices=("numba", "numpy"), default=None,
                    help=argparse.SUPPRESS)
    args = ap.parse_args()

    if args.workload:
        t = run_workload(args.workload, args.repeat)
        print(json.dumps({"workload": args.workload, "seconds": t}))
        return

    rows = []
    for wl in WORKLOADS:
        times = {}
        for mode in ("numba", "numpy"):
            env = dict(os.environ)
            if mode == "numpy":
                env["FRACTURE_NO_NUMBA"] = "1"
            else:
                env.pop("FRACTURE_NO_NUMBA", None)
            out = subprocess.run(
                [sys.executable, __file__, "--workload", wl,
                 "--repeat", str(args.repeat)],
                capture_output=True, text=True, env=env, check=True)
            times[mode] = json.loads(out.stdout)["seconds"]
        rows.append((wl, times["numba"], times["numpy"]))

    print(f"{'kernel':<16} {'numba':>12} {'numpy':>12} {'speedup':>9}")
    print("-" * 52)
    for wl, tn, tp in rows:
        print(f"{wl:<16} {tn * 1e3:>10.2f}ms {tp * 1e3:>10.2f}ms "
              f"{tp / tn:>8.1f}x")


if __name__ == "__main__":
    main()
