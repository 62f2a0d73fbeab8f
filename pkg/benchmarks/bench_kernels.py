"""Compare the numba and pure-numpy kernel paths on one synthetic graph.

Each backend runs in its own interpreter because the choice is fixed at
import time by ``EGOCLUSTER_DISABLE_NUMBA``.  Reports the best of ``--repeat``
timings for clustering and for the per-ego loss tally, and checks that both
backends write the same assignment file.

    python benchmarks/bench_kernels.py --edges 2000000 --repeat 3
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import hashlib, json, sys, time
from egocluster._accel import backend
from egocluster.clustering import build_solution
from egocluster.diagnostics import overall_loss_rate
from egocluster.export import solution_to_bytes
from egocluster.graph_model import NetworkSnapshot
from egocluster.simulator import SimConfig, generate_edge_arrays

edges, repeat, workers = (int(x) for x in sys.argv[1:4])
alters = max(1, edges // 10)
cfg = SimConfig(ego_count=max(2, alters // 10), alter_count=alters, mean_degree=10.0, seed=1)
snap = NetworkSnapshot.from_arrays(*generate_edge_arrays(cfg), id_mode="integer")
build_solution(snap, 0, workers=workers)  # warm-up (numba compiles or loads its cache)

def best(fn):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out

t_cluster, sol = best(lambda: build_solution(snap, 1, workers=workers))
t_tally, _ = best(lambda: overall_loss_rate(sol, snap))
print(json.dumps({
    "backend": backend(), "edges": int(snap.n_edges), "cluster_s": t_cluster, "tally_s": t_tally,
    "digest": hashlib.sha256(solution_to_bytes(sol)).hexdigest(),
}))
"""


def run(disable_numba: bool, edges: int, repeat: int, workers: int) -> dict:
    env = dict(os.environ, EGOCLUSTER_DISABLE_NUMBA="1" if disable_numba else "0")
    res = subprocess.run(
        [sys.executable, "-c", WORKER, str(edges), str(repeat), str(workers)],
        env=env, capture_output=True, text=True, check=True,
    )
    return json.loads(res.stdout.strip().splitlines()[-1])


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--edges", type=int, default=1_000_000, help="approximate edge count")
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args(argv)

    results = [run(flag, args.edges, args.repeat, args.workers) for flag in (False, True)]
    print(f"{'backend':<8}{'edges':>12}{'cluster (s)':>14}{'loss tally (s)':>16}")
    for r in results:
        print(f"{r['backend']:<8}{r['edges']:>12,}{r['cluster_s']:>14.3f}{r['tally_s']:>16.3f}")
    fast, slow = results
    if fast["backend"] == slow["backend"]:
        print("numba is not installed; both runs used the numpy path")
    else:
        print(f"speed-up: clustering x{slow['cluster_s'] / fast['cluster_s']:.1f}, "
              f"loss tally x{slow['tally_s'] / fast['tally_s']:.1f}")
    same = fast["digest"] == slow["digest"]
    print(f"identical assignment files: {same}")
    return 0 if same else 1


if __name__ == "__main__":
    sys.exit(main())
