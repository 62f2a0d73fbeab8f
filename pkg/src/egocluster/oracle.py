"""Small random instances checked against exhaustive search."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clustering import (
    MAX_ORACLE_ALTERS,
    Variant,
    brute_force_min_loss,
    build_solution,
    total_misaligned_weight,
)
from .errors import OracleGuardError
from .graph_model import NetworkSnapshot

SINGLE_ALTER_EGO_VARIANTS = {
    "t1": Variant.TREATMENT, "t2": Variant.TREATMENT, "t3": Variant.TREATMENT,
    "c1": Variant.CONTROL, "c2": Variant.CONTROL,
}
SINGLE_ALTER_EDGES = [("alter", "t1", 1.0), ("alter", "t2", 2.0), ("alter", "t3", 3.0), ("alter", "c1", 6.0), ("alter", "c2", 5.0)]


def single_alter_fixture() -> NetworkSnapshot:
    """One alter viewing three treatment egos (total 6) and two control egos (6 and 5)."""
    return NetworkSnapshot.from_edges(SINGLE_ALTER_EDGES)


def random_instance(rng: np.random.Generator, max_alters: int = 12, max_egos: int = 6,
                    max_weight: int = 9) -> NetworkSnapshot:
    n_egos = int(rng.integers(1, max_egos + 1))
    n_alters = int(rng.integers(1, max_alters + 1))
    alters, egos, weights = [], [], []
    for j in range(n_alters):
        k = int(rng.integers(1, n_egos + 1))
        for i in rng.choice(n_egos, size=k, replace=False):
            alters.append(f"a{j:02d}")
            egos.append(f"e{int(i)}")
            weights.append(float(rng.integers(1, max_weight + 1)))
    return NetworkSnapshot.from_arrays(alters, egos, weights)


def tie_fixture() -> NetworkSnapshot:
    """Every alter splits equal weight between one treatment-bound and one control-bound ego."""
    rows = []
    for j in range(8):
        rows += [(f"a{j}", "e0", 4.0), (f"a{j}", "e1", 4.0)]
    return NetworkSnapshot.from_edges(rows)


@dataclass
class OracleCase:
    index: int
    algorithm_loss: float
    oracle_loss: float
    ties: int

    @property
    def passed(self) -> bool:
        return self.algorithm_loss == self.oracle_loss


@dataclass
class OracleReport:
    cases: list[OracleCase] = field(default_factory=list)

    @property
    def n_pass(self) -> int:
        return sum(c.passed for c in self.cases)

    @property
    def all_passed(self) -> bool:
        return self.n_pass == len(self.cases)

    def to_dict(self) -> dict:
        return {
            "n_instances": len(self.cases),
            "n_pass": self.n_pass,
            "all_passed": self.all_passed,
            "instances_with_ties": sum(c.ties > 0 for c in self.cases),
            "failures": [vars(c) for c in self.cases if not c.passed],
        }


def check_instance(snapshot: NetworkSnapshot, seed: int, index: int = 0,
                   ego_variants: dict | None = None) -> OracleCase:
    sol = build_solution(snapshot, seed, ego_variants=ego_variants)
    _, oracle_loss = brute_force_min_loss(snapshot, sol.ego_variants)
    ties = int(sol.tie_broken.sum()) if sol.tie_broken is not None else 0
    return OracleCase(index, total_misaligned_weight(snapshot, sol), oracle_loss, ties)


def run_oracle_check(n: int = 200, *, seed: int = 0, max_alters: int = 12, max_egos: int = 6,
                     max_weight: int = 9) -> OracleReport:
    if max_alters > MAX_ORACLE_ALTERS:
        raise OracleGuardError(f"max_alters {max_alters} exceeds brute-force limit {MAX_ORACLE_ALTERS}")
    rng = np.random.default_rng(seed)
    report = OracleReport()
    for i in range(n):
        snap = random_instance(rng, max_alters, max_egos, max_weight)
        report.cases.append(check_instance(snap, seed + i, i))
    return report


def tie_case(seed: int = 0) -> OracleCase:
    """Check :func:`tie_fixture` under the first seed >= ``seed`` that splits its two egos."""
    snap = tie_fixture()
    s = seed
    while True:
        sol = build_solution(snap, s)
        v = sol.ego_variants
        if v["e0"] != v["e1"]:
            return check_instance(snap, s)
        s += 1


def single_alter_case(seed: int = 0) -> OracleCase:
    return check_instance(single_alter_fixture(), seed, ego_variants=SINGLE_ALTER_EGO_VARIANTS)
