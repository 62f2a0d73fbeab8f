"""One-degree label propagation over alter -> ego graphs.

1. every ego draws Treatment/Control from its own (seed, id) stream;
2. every alter sums its edge weight toward each variant and joins the heavier
   one, breaking exact ties with a fair coin from its (seed, id) stream;
3. the alter attaches to its heaviest ego inside the chosen variant
   (equal weights: smallest ego id).

Members that are egos keep their ego role and are not re-assigned as alters.
"""
from __future__ import annotations

import enum
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels
from .errors import EgoClusterError, OracleGuardError
from .graph_model import NetworkSnapshot, NetworkType
from .rng import ALTER_TIE_STREAM, EGO_VARIANT_STREAM, member_keys, stream_uniforms

ROLE_EGO = 0
ROLE_ALTER = 1
MAX_ORACLE_ALTERS = 20


class Variant(enum.IntEnum):
    CONTROL = 0
    TREATMENT = 1

    @classmethod
    def parse(cls, text: str) -> Variant:
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown variant {text!r}") from None

    def __str__(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class AssignmentTrace:
    alter: object
    treatment_weight: float
    control_weight: float
    tie_broken: bool
    chosen_ego_weight: float


def assign_ego_variants(egos, seed: int, treatment_fraction: float = 0.5) -> dict:
    """Map each ego id to a :class:`Variant`, reproducibly from ``seed``."""
    egos = np.asarray(sorted(set(egos)) if not isinstance(egos, np.ndarray) else egos)
    if len(egos) == 0:
        raise ValueError("egos must be non-empty")
    draws = _ego_variant_array(egos, seed, treatment_fraction)
    return {e: Variant(int(v)) for e, v in zip(egos.tolist(), draws)}


def _ego_variant_array(ego_ids: np.ndarray, seed: int, treatment_fraction: float) -> np.ndarray:
    if not 0.0 < treatment_fraction <= 1.0:
        raise ValueError(f"treatment_fraction must be in (0, 1], got {treatment_fraction}")
    u = stream_uniforms(member_keys(ego_ids), seed, EGO_VARIANT_STREAM)
    return (u < treatment_fraction).astype(np.int8)


def alter_tie_uniforms(alter_ids: np.ndarray, seed: int) -> np.ndarray:
    return stream_uniforms(member_keys(alter_ids), seed, ALTER_TIE_STREAM)


def assign_alter(alter, incident_edges, ego_variants: dict, tie_u: float | None = None, *, seed: int | None = None):
    """Assign a single alter from its (ego, weight) list.

    ``tie_u`` is the alter's uniform tie-break draw; if omitted it is derived
    from ``seed`` and the alter id exactly as :func:`build_solution` does.
    Returns ``(variant, attached_ego, trace)``, or ``None`` when the alter has
    no positive weight.
    """
    if tie_u is None:
        if seed is None:
            raise ValueError("either tie_u or seed is required")
        tie_u = float(alter_tie_uniforms(np.asarray([alter]), seed)[0])
    edges = {}
    for ego, w in incident_edges:
        if ego not in ego_variants:
            raise ValueError(f"ego {ego!r} has no variant")
        if w < 0:
            raise ValueError("edge weights must be non-negative")
        edges[ego] = edges.get(ego, 0.0) + float(w)
    if not edges:
        raise ValueError("incident_edges must be non-empty")
    egos = sorted(edges)
    member_var = np.array([int(ego_variants[e]) for e in egos], dtype=np.int8)
    out = _alloc(1)
    _kernels.assign_rows(
        np.array([0, len(egos)], dtype=np.int64), np.arange(len(egos), dtype=np.int64),
        np.array([edges[e] for e in egos], dtype=np.float64), member_var,
        np.zeros(1, dtype=np.int64), np.array([tie_u]), out,
    )
    var, ego_pos, wt, wc, tied, cw = (x[0] for x in out)
    if var < 0:
        return None
    trace = AssignmentTrace(alter, float(wt), float(wc), bool(tied), float(cw))
    return Variant(int(var)), egos[int(ego_pos)], trace


def _alloc(n: int):
    return (
        np.empty(n, dtype=np.int8),
        np.empty(n, dtype=np.int64),
        np.empty(n, dtype=np.float64),
        np.empty(n, dtype=np.float64),
        np.empty(n, dtype=np.bool_),
        np.empty(n, dtype=np.float64),
    )


@dataclass(frozen=True, eq=False)
class EgoClusterSolution:
    """Cluster assignment for every ego and every assigned alter.

    Stored as one table sorted by member id (the export layout): ``role``
    (0 ego, 1 alter), ``variant`` (0 control, 1 treatment) and ``attached``,
    the row index of an alter's ego (-1 for egos).
    """

    member_ids: np.ndarray
    role: np.ndarray
    variant: np.ndarray
    attached: np.ndarray
    seed: int
    network_type: NetworkType | None = None
    treatment_fraction: float = 0.5
    id_mode: str = "string"
    excluded_alters: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=object))
    treatment_weight: np.ndarray | None = None
    control_weight: np.ndarray | None = None
    tie_broken: np.ndarray | None = None
    chosen_ego_weight: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.member_ids)

    @property
    def cluster_size(self) -> int:
        return len(self.member_ids)

    @cached_property
    def ego_rows(self) -> np.ndarray:
        return np.flatnonzero(self.role == ROLE_EGO)

    @cached_property
    def alter_rows(self) -> np.ndarray:
        return np.flatnonzero(self.role == ROLE_ALTER)

    @property
    def n_egos(self) -> int:
        return len(self.ego_rows)

    @property
    def n_alters(self) -> int:
        return len(self.alter_rows)

    @cached_property
    def ego_variants(self) -> dict:
        ids = self.member_ids[self.ego_rows].tolist()
        return {i: Variant(int(v)) for i, v in zip(ids, self.variant[self.ego_rows])}

    @cached_property
    def alter_assignments(self) -> dict:
        rows = self.alter_rows
        ids = self.member_ids[rows].tolist()
        egos = self.member_ids[self.attached[rows]].tolist()
        return {i: (Variant(int(v)), e) for i, v, e in zip(ids, self.variant[rows], egos)}

    @cached_property
    def cluster_index(self) -> dict:
        index: dict = {e: set() for e in self.member_ids[self.ego_rows].tolist()}
        for alter, (_, ego) in self.alter_assignments.items():
            index[ego].add(alter)
        return index

    def trace(self, alter) -> AssignmentTrace:
        if self.treatment_weight is None:
            raise EgoClusterError("solution carries no assignment traces")
        row = self.rows_of([alter])[0]
        if row < 0 or self.role[row] != ROLE_ALTER:
            raise KeyError(alter)
        return AssignmentTrace(
            alter, float(self.treatment_weight[row]), float(self.control_weight[row]),
            bool(self.tie_broken[row]), float(self.chosen_ego_weight[row]),
        )

    def rows_of(self, ids) -> np.ndarray:
        """Row index per id, -1 where the id is not in the solution."""
        ids = np.asarray(ids, dtype=self.member_ids.dtype)
        if len(self.member_ids) == 0:
            return np.full(len(ids), -1, dtype=np.int64)
        pos = np.searchsorted(self.member_ids, ids)
        pos_c = np.minimum(pos, len(self.member_ids) - 1)
        return np.where(self.member_ids[pos_c] == ids, pos_c, -1).astype(np.int64)

    def member_arrays(self, snapshot: NetworkSnapshot) -> tuple[np.ndarray, np.ndarray]:
        """Variant per snapshot member code, and variant for solution egos only (else -1)."""
        rows = self.rows_of(snapshot.members)
        found = rows >= 0
        member_var = np.full(snapshot.n_members, -1, dtype=np.int8)
        member_var[found] = self.variant[rows[found]]
        ego_var = np.full(snapshot.n_members, -1, dtype=np.int8)
        is_ego = found.copy()
        is_ego[found] = self.role[rows[found]] == ROLE_EGO
        ego_var[is_ego] = member_var[is_ego]
        return member_var, ego_var

    def check_invariants(self) -> None:
        """Raise AssertionError if the solution table is internally inconsistent."""
        ids = self.member_ids
        assert len(ids) == len(np.unique(ids)), "member ids must be unique"
        if len(ids) > 1:
            assert np.all(ids[1:] > ids[:-1]), "member ids must be sorted"
        alters = self.alter_rows
        assert np.all(self.attached[self.ego_rows] == -1)
        att = self.attached[alters]
        assert np.all(att >= 0), "every alter needs an attached ego"
        assert np.all(self.role[att] == ROLE_EGO), "alters must attach to egos"
        assert np.all(self.variant[att] == self.variant[alters]), "alter variant must match its ego"

    def equals(self, other: EgoClusterSolution) -> bool:
        return (
            np.array_equal(self.member_ids, other.member_ids)
            and np.array_equal(self.role, other.role)
            and np.array_equal(self.variant, other.variant)
            and np.array_equal(self.attached, other.attached)
        )


def build_solution(
    snapshot: NetworkSnapshot,
    seed: int,
    treatment_fraction: float = 0.5,
    *,
    network_type: NetworkType | None = None,
    ego_variants: dict | None = None,
    workers: int = 1,
    chunk_size: int = 65_536,
    use_numba: bool | None = None,
) -> EgoClusterSolution:
    """Cluster every alter of ``snapshot``.

    Alters are processed in independent chunks on ``workers`` threads; each
    decision depends only on (seed, alter id, its edges), so the result is the
    same for any chunking or thread count.  ``ego_variants`` pins the ego
    draw (every ego of the snapshot must be present) instead of seeding it.
    """
    ego_codes = snapshot.ego_codes
    if len(ego_codes) == 0:
        raise EgoClusterError("snapshot has no egos to cluster")
    members = snapshot.members
    member_var = np.full(snapshot.n_members, -1, dtype=np.int8)
    if ego_variants is None:
        member_var[ego_codes] = _ego_variant_array(members[ego_codes], seed, treatment_fraction)
    else:
        try:
            member_var[ego_codes] = [int(ego_variants[e]) for e in members[ego_codes].tolist()]
        except KeyError as exc:
            raise ValueError(f"ego {exc.args[0]!r} has no variant") from None

    alter_codes = snapshot.alter_codes
    alter_codes = alter_codes[member_var[alter_codes] < 0]
    n = len(alter_codes)
    tie_u = alter_tie_uniforms(members[alter_codes], seed)
    out = _alloc(n)

    indptr = snapshot.alter_indptr
    def run(lo: int, hi: int) -> None:
        _kernels.assign_rows(
            indptr, snapshot.ego, snapshot.weight, member_var,
            alter_codes[lo:hi], tie_u[lo:hi], tuple(o[lo:hi] for o in out),
            use_numba=use_numba,
        )

    bounds = list(range(0, n, max(1, chunk_size))) + [n]
    spans = list(itertools.pairwise(bounds)) if n else []
    if workers <= 1 or len(spans) <= 1:
        for lo, hi in spans:
            run(lo, hi)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for f in [pool.submit(run, lo, hi) for lo, hi in spans]:
                f.result()

    a_var, a_ego, wt, wc, tied, cw = out
    ok = a_var >= 0
    excluded = members[alter_codes[~ok]]

    # member table: all egos plus assigned alters, in member-code (= id) order
    codes = np.concatenate([ego_codes, alter_codes[ok]])
    order = np.argsort(codes, kind="stable")
    codes = codes[order]
    n_e = len(ego_codes)
    role = np.concatenate([np.zeros(n_e, np.int8), np.ones(int(ok.sum()), np.int8)])[order]
    variant = np.concatenate([member_var[ego_codes], a_var[ok]])[order]
    attached_code = np.concatenate([np.full(n_e, -1, np.int64), a_ego[ok]])[order]
    attached = np.full(len(codes), -1, dtype=np.int64)
    is_alter = role == ROLE_ALTER
    attached[is_alter] = np.searchsorted(codes, attached_code[is_alter])

    def spread(values, fill, dtype):
        arr = np.full(len(codes), fill, dtype=dtype)
        arr[is_alter] = np.concatenate([np.full(n_e, fill, dtype), values[ok]])[order][is_alter]
        return arr

    return EgoClusterSolution(
        member_ids=members[codes],
        role=role,
        variant=variant,
        attached=attached,
        seed=int(seed),
        network_type=network_type,
        treatment_fraction=float(treatment_fraction),
        id_mode=snapshot.id_mode,
        excluded_alters=excluded,
        treatment_weight=spread(wt, 0.0, np.float64),
        control_weight=spread(wc, 0.0, np.float64),
        tie_broken=spread(tied, False, np.bool_),
        chosen_ego_weight=spread(cw, 0.0, np.float64),
    )


def total_misaligned_weight(snapshot: NetworkSnapshot, solution: EgoClusterSolution) -> float:
    """Sum of edge weight whose alter and ego sit in different variants."""
    member_var, ego_var = solution.member_arrays(snapshot)
    va = member_var[snapshot.alter]
    ve = ego_var[snapshot.ego]
    mask = (va >= 0) & (ve >= 0) & (va != ve)
    return float(snapshot.weight[mask].sum())


def brute_force_min_loss(snapshot: NetworkSnapshot, ego_variants: dict) -> tuple[dict, float]:
    """Exhaustive search over all alter variant vectors for the least misaligned weight.

    Each candidate is scored from the raw edge list (no per-alter shortcut).
    Alters that are themselves egos keep their ego variant.  Limited to
    :data:`MAX_ORACLE_ALTERS` free alters.
    """
    members = snapshot.members.tolist()
    ego_ids = set(members[c] for c in snapshot.ego_codes.tolist())
    missing = ego_ids - set(ego_variants)
    if missing:
        raise ValueError(f"egos without a variant: {sorted(missing)[:5]}")
    alters = [members[c] for c in snapshot.alter_codes.tolist() if members[c] not in ego_ids]
    if len(alters) > MAX_ORACLE_ALTERS:
        raise OracleGuardError(
            f"{len(alters)} alters exceed the brute-force limit of {MAX_ORACLE_ALTERS}; use build_solution"
        )
    pos = {a: i for i, a in enumerate(alters)}
    free_edges = []
    fixed_loss = 0.0
    for (a, e), w in snapshot.edge_dict().items():
        ve = int(ego_variants[e])
        if a in pos:
            free_edges.append((pos[a], ve, w))
        elif int(ego_variants[a]) != ve:
            fixed_loss += w

    n = len(alters)
    best_bits, best = 0, None
    chunk = 1 << min(n, 14)
    if free_edges:
        ea = np.array([x[0] for x in free_edges])
        ev = np.array([x[1] for x in free_edges])
        ew = np.array([x[2] for x in free_edges])
    for start in range(0, 1 << n, chunk):
        combos = np.arange(start, min(start + chunk, 1 << n), dtype=np.int64)
        if free_edges:
            bits = (combos[:, None] >> ea[None, :]) & 1
            loss = ((bits != ev[None, :]) * ew[None, :]).sum(axis=1)
        else:
            loss = np.zeros(len(combos))
        i = int(np.argmin(loss))
        if best is None or loss[i] < best:
            best, best_bits = float(loss[i]), int(combos[i])
    assignment = {a: Variant((best_bits >> i) & 1) for i, a in enumerate(alters)}
    return assignment, best + fixed_loss
