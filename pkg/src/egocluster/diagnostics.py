"""Cluster quality: loss rate at creation (T0), 14-day loss rate under three
traffic scenarios, network stability, and the per-network-type summary table.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .clustering import ROLE_EGO, EgoClusterSolution, Variant
from .errors import EgoClusterError
from .graph_model import NetworkSnapshot, NetworkType

SCENARIOS = (1, 2, 3)


@dataclass(frozen=True)
class EgoLoss:
    ego: object
    misaligned_weight: float
    total_weight: float
    loss_rate: float
    flagged: bool = False

    def to_dict(self) -> dict:
        return {
            "ego": self.ego,
            "misaligned_weight": self.misaligned_weight,
            "total_weight": self.total_weight,
            "loss_rate": self.loss_rate,
            "flagged": self.flagged,
        }


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: int
    ramp_fraction: float = 0.10

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}, got {self.scenario}")
        if not 0.0 < self.ramp_fraction <= 1.0:
            raise ValueError(f"ramp_fraction must be in (0, 1], got {self.ramp_fraction}")


@dataclass
class EgoTallies:
    """Per solution-ego weight sums against one snapshot."""

    egos: np.ndarray
    variant: np.ndarray
    misaligned: np.ndarray
    total: np.ndarray
    new: np.ndarray


def ego_tallies(solution: EgoClusterSolution, snapshot: NetworkSnapshot, *, use_numba: bool | None = None) -> EgoTallies:
    member_var, ego_var = solution.member_arrays(snapshot)
    mis, tot, new = _kernels.ego_tally(
        snapshot.alter, snapshot.ego, snapshot.weight, member_var, ego_var, snapshot.n_members,
        use_numba=use_numba,
    )
    rows = solution.ego_rows
    ids = solution.member_ids[rows]
    codes = snapshot.codes_of(ids)
    present = codes >= 0

    def pick(arr):
        out = np.zeros(len(ids))
        out[present] = arr[codes[present]]
        return out

    return EgoTallies(ids, solution.variant[rows], pick(mis), pick(tot), pick(new))


def _rates(num: np.ndarray, den: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ok = den > 0
    rate = np.zeros(len(den))
    rate[ok] = num[ok] / den[ok]
    return rate, ok


def per_ego_losses(solution: EgoClusterSolution, snapshot: NetworkSnapshot) -> list[EgoLoss]:
    t = ego_tallies(solution, snapshot)
    rate, ok = _rates(t.misaligned, t.total)
    return [
        EgoLoss(e, float(m), float(w), float(r), not bool(k))
        for e, m, w, r, k in zip(t.egos.tolist(), t.misaligned, t.total, rate, ok)
    ]


def ego_loss_rate(solution: EgoClusterSolution, snapshot: NetworkSnapshot, ego) -> EgoLoss:
    """Misaligned over total incident weight from assigned alters for one ego.

    An ego with no weight gets rate 0 and ``flagged=True``.
    """
    row = solution.rows_of([ego])[0]
    if row < 0 or solution.role[row] != ROLE_EGO:
        raise EgoClusterError(f"ego {ego!r} is not in the solution")
    v = int(solution.variant[row])
    mis = tot = 0.0
    edges = snapshot.edges_of_ego(ego)
    rows = solution.rows_of([a for a, _ in edges])
    for (_, w), r in zip(edges, rows):
        if r < 0:
            continue
        tot += w
        if int(solution.variant[r]) != v:
            mis += w
    if tot <= 0:
        return EgoLoss(ego, 0.0, 0.0, 0.0, True)
    return EgoLoss(ego, mis, tot, mis / tot)


def overall_loss_rate(solution: EgoClusterSolution, snapshot: NetworkSnapshot) -> float:
    """Simple average of ego loss rates over egos with positive weight."""
    t = ego_tallies(solution, snapshot)
    rate, ok = _rates(t.misaligned, t.total)
    if not ok.any():
        raise EgoClusterError("no ego has positive incident weight; loss rate undefined")
    return float(rate[ok].mean())


def weighted_loss_rate(solution: EgoClusterSolution, snapshot: NetworkSnapshot) -> float:
    t = ego_tallies(solution, snapshot)
    den = t.total.sum()
    return float(t.misaligned.sum() / den) if den > 0 else 0.0


def _new_misaligned(new: np.ndarray, variant: np.ndarray, scenario: int, r: float) -> np.ndarray:
    if scenario == 1:
        return new
    treated = (variant == int(Variant.TREATMENT)).astype(np.float64)
    if scenario == 2:
        return (r / 2.0) * new + (1.0 - r) * new * treated
    return (r / 2.0) * new


def t14_ego_rates(solution: EgoClusterSolution, snapshot_t14: NetworkSnapshot, config: ScenarioConfig):
    """Per-ego 14-day loss rates and eligibility mask."""
    t = ego_tallies(solution, snapshot_t14)
    mis_new = _new_misaligned(t.new, t.variant, config.scenario, config.ramp_fraction)
    return _rates(t.misaligned + mis_new, t.total + t.new)


def loss_rate_t14(solution: EgoClusterSolution, snapshot_t14: NetworkSnapshot, config: ScenarioConfig) -> float:
    """Mean over egos of (existing + new misaligned) / total T14 weight.

    Alters absent from the solution are "new"; their misaligned share is
    all of it (scenario 1), the ramped half plus the non-ramped remainder for
    treatment egos (scenario 2), or only the ramped half (scenario 3).
    """
    if snapshot_t14.n_edges == 0:
        raise EgoClusterError("T14 snapshot is empty")
    rate, ok = t14_ego_rates(solution, snapshot_t14, config)
    if not ok.any():
        raise EgoClusterError("no solution ego has T14 weight; loss rate undefined")
    return float(rate[ok].mean())


def stability_rate(snapshot_t0: NetworkSnapshot, snapshot_t14: NetworkSnapshot, solution: EgoClusterSolution) -> float:
    """Share of T0 (alter, ego) pairs into solution egos that still have weight at T14."""
    if snapshot_t0.n_edges == 0 or snapshot_t14.n_edges == 0:
        raise EgoClusterError("stability rate needs non-empty T0 and T14 snapshots")
    _, ego_var0 = solution.member_arrays(snapshot_t0)
    keep0 = (snapshot_t0.weight > 0) & (ego_var0[snapshot_t0.ego] >= 0)
    if not keep0.any():
        raise EgoClusterError("no T0 edges into solution egos")
    m = np.int64(snapshot_t0.n_members)
    key0 = snapshot_t0.alter[keep0] * m + snapshot_t0.ego[keep0]

    remap = snapshot_t0.codes_of(snapshot_t14.members)
    a14 = remap[snapshot_t14.alter]
    e14 = remap[snapshot_t14.ego]
    ok14 = (a14 >= 0) & (e14 >= 0) & (snapshot_t14.weight > 0)
    key14 = a14[ok14] * m + e14[ok14]
    return float(np.isin(key0, key14).sum() / len(key0))


@dataclass
class ClusterDiagnostics:
    network_type: NetworkType | None
    cluster_size: int
    loss_rate_t0: float
    loss_rate_t14: dict[int, float] | None
    stability_rate: float | None
    per_ego: list[EgoLoss] = field(default_factory=list)
    weighted_loss_rate_t0: float | None = None
    warnings: list[str] = field(default_factory=list)

    def to_dict(self, per_ego: bool = False) -> dict:
        nt = self.network_type
        out = {
            "network_type": nt.kind if nt else None,
            "window_days": nt.window_days if nt else None,
            "cluster_size": self.cluster_size,
            "loss_rate_t0": self.loss_rate_t0,
            "weighted_loss_rate_t0": self.weighted_loss_rate_t0,
            "loss_rate_t14": (
                {f"s{k}": v for k, v in sorted(self.loss_rate_t14.items())} if self.loss_rate_t14 else None
            ),
            "stability_rate": self.stability_rate,
            "warnings": list(self.warnings),
        }
        if per_ego:
            out["per_ego"] = [e.to_dict() for e in self.per_ego]
        return out


def diagnose(
    solution: EgoClusterSolution,
    snapshot_t0: NetworkSnapshot,
    snapshot_t14: NetworkSnapshot | None = None,
    *,
    ramp_fraction: float = 0.10,
    network_type: NetworkType | None = None,
) -> ClusterDiagnostics:
    """All quality metrics for one solution; T14 metrics only when a T14 snapshot is given."""
    per_ego = per_ego_losses(solution, snapshot_t0)
    flagged = [e.ego for e in per_ego if e.flagged]
    warns = []
    if flagged:
        warns.append(f"{len(flagged)} ego(s) with zero T0 weight excluded from loss averages")
    t14 = stab = None
    if snapshot_t14 is not None:
        t14 = {}
        for s in SCENARIOS:
            t14[s] = loss_rate_t14(solution, snapshot_t14, ScenarioConfig(s, ramp_fraction))
        _, ok = t14_ego_rates(solution, snapshot_t14, ScenarioConfig(1, ramp_fraction))
        if not ok.all():
            warns.append(f"{int((~ok).sum())} ego(s) with zero T14 weight excluded from T14 loss averages")
        stab = stability_rate(snapshot_t0, snapshot_t14, solution)
    return ClusterDiagnostics(
        network_type=network_type or solution.network_type,
        cluster_size=solution.cluster_size,
        loss_rate_t0=overall_loss_rate(solution, snapshot_t0),
        loss_rate_t14=t14,
        stability_rate=stab,
        per_ego=per_ego,
        weighted_loss_rate_t0=weighted_loss_rate(solution, snapshot_t0),
        warnings=warns,
    )


SUMMARY_COLUMNS = (
    "network type",
    "cluster size",
    "loss rate at T0",
    "loss rate at T14 - scenario 1",
    "loss rate at T14 - scenario 2",
    "loss rate at T14 - scenario 3",
    "stability rate",
)


@dataclass
class SummaryTable:
    rows: list[dict]

    def to_json(self) -> str:
        return json.dumps({"columns": list(SUMMARY_COLUMNS), "rows": self.rows}, indent=2)

    def to_text(self) -> str:
        def pct(v):
            return "-" if v is None else f"{100 * v:.1f}%"

        body = [
            [r["network type"], f"{r['cluster size']:,}"] + [pct(r[c]) for c in SUMMARY_COLUMNS[2:]]
            for r in self.rows
        ]
        widths = [max(len(c), *(len(b[i]) for b in body)) for i, c in enumerate(SUMMARY_COLUMNS)]
        lines = ["  ".join(c.ljust(w) for c, w in zip(SUMMARY_COLUMNS, widths))]
        lines.append("  ".join("-" * w for w in widths))
        for b in body:
            lines.append("  ".join([b[0].ljust(widths[0])] + [x.rjust(w) for x, w in zip(b[1:], widths[1:])]))
        return "\n".join(lines) + "\n"


def summary_table(runs) -> SummaryTable:
    """One row per network type, sorted by kind then window."""
    runs = list(runs)
    if not runs:
        raise ValueError("summary_table needs at least one run")
    rows = []
    for nt, d in sorted(runs, key=lambda r: r[0].sort_key):
        t14 = d.loss_rate_t14 or {}
        rows.append({
            "network type": nt.label,
            "cluster size": d.cluster_size,
            "loss rate at T0": d.loss_rate_t0,
            "loss rate at T14 - scenario 1": t14.get(1),
            "loss rate at T14 - scenario 2": t14.get(2),
            "loss rate at T14 - scenario 3": t14.get(3),
            "stability rate": d.stability_rate,
        })
    return SummaryTable(rows)
