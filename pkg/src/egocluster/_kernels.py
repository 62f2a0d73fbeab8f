"""Hot loops: per-alter variant/ego assignment and per-ego weight tallies.

Each kernel has a numba version and a numpy version producing bit-identical
results (sums are accumulated sequentially in edge order in both), and the
public wrapper dispatches on :data:`egocluster._accel.USE_NUMBA`.
"""
from __future__ import annotations

import numpy as np

from ._accel import USE_NUMBA, njit

TREATMENT = 1
CONTROL = 0
UNASSIGNED = -1


@njit(nogil=True, cache=True)
def _assign_rows_nb(indptr, ego, weight, member_var, rows, tie_u,
                    out_var, out_ego, out_wt, out_wc, out_tied, out_cw):
    for i in range(rows.shape[0]):
        r = rows[i]
        lo = indptr[r]
        hi = indptr[r + 1]
        wt = 0.0
        wc = 0.0
        for k in range(lo, hi):
            v = member_var[ego[k]]
            if v == 1:
                wt += weight[k]
            elif v == 0:
                wc += weight[k]
        out_wt[i] = wt
        out_wc[i] = wc
        out_tied[i] = False
        if wt > wc:
            var = 1
        elif wc > wt:
            var = 0
        elif wt + wc > 0.0:
            out_tied[i] = True
            var = 1 if tie_u[i] < 0.5 else 0
        else:
            out_var[i] = -1
            out_ego[i] = -1
            out_cw[i] = 0.0
            continue
        best = -1
        bw = -1.0
        # rows are sorted by ego code, so strict '>' keeps the smallest id on ties
        for k in range(lo, hi):
            if member_var[ego[k]] == var and weight[k] > bw:
                bw = weight[k]
                best = ego[k]
        out_var[i] = var
        out_ego[i] = best
        out_cw[i] = bw


def _assign_rows_np(indptr, ego, weight, member_var, rows, tie_u,
                    out_var, out_ego, out_wt, out_wc, out_tied, out_cw):
    n = rows.shape[0]
    starts = indptr[rows]
    counts = indptr[rows + 1] - starts
    local = np.repeat(np.arange(n), counts)
    offsets = np.cumsum(counts) - counts
    eidx = np.arange(counts.sum()) - np.repeat(offsets, counts) + np.repeat(starts, counts)
    ev = member_var[ego[eidx]]
    w = weight[eidx]
    wt = np.bincount(local, weights=np.where(ev == 1, w, 0.0), minlength=n)
    wc = np.bincount(local, weights=np.where(ev == 0, w, 0.0), minlength=n)
    tied = (wt == wc) & (wt + wc > 0.0)
    var = np.where(wt > wc, 1, np.where(wc > wt, 0, np.where(tie_u < 0.5, 1, 0))).astype(np.int8)
    var[(wt + wc) <= 0.0] = -1

    match = ev == var[local]
    m_local = local[match]
    m_ego = ego[eidx[match]]
    m_w = w[match]
    order = np.lexsort((m_ego, -m_w, m_local))
    m_local = m_local[order]
    first = np.ones(len(m_local), dtype=bool)
    first[1:] = m_local[1:] != m_local[:-1]
    chosen_ego = np.full(n, -1, dtype=np.int64)
    chosen_w = np.zeros(n, dtype=np.float64)
    chosen_ego[m_local[first]] = m_ego[order][first]
    chosen_w[m_local[first]] = m_w[order][first]

    out_var[:] = var
    out_ego[:] = chosen_ego
    out_wt[:] = wt
    out_wc[:] = wc
    out_tied[:] = tied
    out_cw[:] = chosen_w


@njit(nogil=True, cache=True)
def _ego_tally_nb(alter, ego, weight, member_var, ego_var, n_members, mis, tot, new):
    for k in range(alter.shape[0]):
        ve = ego_var[ego[k]]
        if ve < 0:
            continue
        va = member_var[alter[k]]
        w = weight[k]
        if va < 0:
            new[ego[k]] += w
        else:
            tot[ego[k]] += w
            if va != ve:
                mis[ego[k]] += w


def _ego_tally_np(alter, ego, weight, member_var, ego_var, n_members, mis, tot, new):
    ve = ego_var[ego]
    va = member_var[alter]
    keep = ve >= 0
    e = ego[keep]
    w = weight[keep]
    va = va[keep]
    ve = ve[keep]
    known = va >= 0
    new += np.bincount(e, weights=np.where(known, 0.0, w), minlength=n_members)
    tot += np.bincount(e, weights=np.where(known, w, 0.0), minlength=n_members)
    mis += np.bincount(e, weights=np.where(known & (va != ve), w, 0.0), minlength=n_members)


def assign_rows(indptr, ego, weight, member_var, rows, tie_u, out, *, use_numba: bool | None = None):
    """Assign the alters listed in ``rows`` (member codes); write into ``out`` slices."""
    fn = _assign_rows_nb if (USE_NUMBA if use_numba is None else use_numba) else _assign_rows_np
    fn(indptr, ego, weight, member_var, rows, tie_u, *out)


def ego_tally(alter, ego, weight, member_var, ego_var, n_members, *, use_numba: bool | None = None):
    """Per-ego (misaligned, total known, new-alter) weight sums indexed by member code.

    ``member_var`` gives every member's solution variant (-1 if absent);
    ``ego_var`` is non-negative only for members measured as egos.
    """
    mis = np.zeros(n_members, dtype=np.float64)
    tot = np.zeros(n_members, dtype=np.float64)
    new = np.zeros(n_members, dtype=np.float64)
    fn = _ego_tally_nb if (USE_NUMBA if use_numba is None else use_numba) else _ego_tally_np
    fn(alter, ego, weight, member_var, ego_var, n_members, mis, tot, new)
    return mis, tot, new
