import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import random_snapshot
from egocluster import _kernels
from egocluster._accel import HAS_NUMBA, backend
from egocluster.clustering import _alloc, alter_tie_uniforms, build_solution
from egocluster.diagnostics import ego_tallies
from egocluster.export import solution_to_bytes
from egocluster.graph_model import NetworkSnapshot

needs_numba = pytest.mark.skipif(not HAS_NUMBA, reason="numba not installed")


def _inputs(seed):
    rng = np.random.default_rng(seed)
    snap = random_snapshot(rng, 15, 400, max_deg=6, int_weights=seed % 2 == 0)
    member_var = np.full(snap.n_members, -1, np.int8)
    member_var[snap.ego_codes] = rng.integers(0, 2, len(snap.ego_codes))
    rows = snap.alter_codes[member_var[snap.alter_codes] < 0]
    return snap, member_var, rows, alter_tie_uniforms(snap.members[rows], seed)


@needs_numba
@pytest.mark.parametrize("seed", range(6))
def test_assign_kernels_bit_identical(seed):
    snap, member_var, rows, tie_u = _inputs(seed)
    outs = []
    for flag in (True, False):
        out = _alloc(len(rows))
        _kernels.assign_rows(snap.alter_indptr, snap.ego, snap.weight, member_var, rows, tie_u, out, use_numba=flag)
        outs.append(out)
    for a, b in zip(*outs):
        assert np.array_equal(a, b)


@needs_numba
@pytest.mark.parametrize("seed", range(6))
def test_tally_kernels_bit_identical(seed):
    snap, member_var, rows, _ = _inputs(seed)
    member_var[rows[::3]] = 1
    member_var[rows[1::3]] = 0
    ego_var = np.where(np.isin(np.arange(snap.n_members), snap.ego_codes), member_var, -1).astype(np.int8)
    nb = _kernels.ego_tally(snap.alter, snap.ego, snap.weight, member_var, ego_var, snap.n_members, use_numba=True)
    np_ = _kernels.ego_tally(snap.alter, snap.ego, snap.weight, member_var, ego_var, snap.n_members, use_numba=False)
    for a, b in zip(nb, np_):
        assert np.array_equal(a, b)


def test_tally_against_python_loop():
    snap, member_var, rows, _ = _inputs(3)
    member_var[rows[::2]] = 1
    ego_var = np.where(np.isin(np.arange(snap.n_members), snap.ego_codes), member_var, -1).astype(np.int8)
    mis, tot, new = _kernels.ego_tally(snap.alter, snap.ego, snap.weight, member_var, ego_var, snap.n_members)
    ref = np.zeros((3, snap.n_members))
    for a, e, w in zip(snap.alter, snap.ego, snap.weight):
        if ego_var[e] < 0:
            continue
        if member_var[a] < 0:
            ref[2, e] += w
        else:
            ref[1, e] += w
            ref[0, e] += w * (member_var[a] != ego_var[e])
    assert np.allclose(mis, ref[0]) and np.allclose(tot, ref[1]) and np.allclose(new, ref[2])


@needs_numba
def test_solution_and_tallies_identical_across_backends():
    snap = random_snapshot(np.random.default_rng(8), 20, 500, int_weights=False)
    a = build_solution(snap, 4, use_numba=True)
    b = build_solution(snap, 4, use_numba=False)
    assert solution_to_bytes(a) == solution_to_bytes(b)
    assert np.array_equal(a.chosen_ego_weight, b.chosen_ego_weight)
    ta, tb = ego_tallies(a, snap, use_numba=True), ego_tallies(a, snap, use_numba=False)
    assert np.array_equal(ta.misaligned, tb.misaligned) and np.array_equal(ta.total, tb.total)


def test_env_flag_selects_numpy_backend():
    code = (
        "import hashlib, numpy as np\n"
        "from egocluster import backend\n"
        "from egocluster.graph_model import NetworkSnapshot\n"
        "from egocluster.clustering import build_solution\n"
        "from egocluster.export import solution_to_bytes\n"
        "rng = np.random.default_rng(1)\n"
        "s = NetworkSnapshot.from_arrays(rng.integers(50, 3000, 20000), rng.integers(0, 50, 20000), rng.random(20000))\n"
        "print(backend(), hashlib.sha256(solution_to_bytes(build_solution(s, 3))).hexdigest())\n"
    )
    env = dict(os.environ)
    outs = {}
    for flag in ("1", "0"):
        env["EGOCLUSTER_DISABLE_NUMBA"] = flag
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        outs[flag] = res.stdout.split()
    assert outs["1"][0] == "numpy"
    assert outs["0"][0] == ("numba" if HAS_NUMBA else "numpy")
    assert outs["1"][1] == outs["0"][1]


def test_backend_reports_a_known_name():
    assert backend() in {"numba", "numpy"}


def test_snapshot_with_no_alter_rows_is_fine():
    snap = NetworkSnapshot.from_edges([("e1", "e0", 1.0), ("e0", "e1", 1.0)])
    sol = build_solution(snap, 0)
    assert sol.n_alters == 0 and sol.n_egos == 2
