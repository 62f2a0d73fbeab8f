"""Synthetic creator/viewer networks with a planted feedback effect.

Each ego's outcome is ``base_rate + effect_size * f(p)`` plus noise, where
``p`` is the weight share of the ego's incoming interactions that comes from
treated alters.  With every alter treated ``p = 1``; with none treated
``p = 0``; so the true average treatment effect is ``effect_size``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import optimize, stats

from .clustering import EgoClusterSolution, Variant, _ego_variant_array, build_solution
from .errors import EgoClusterError
from .graph_model import NetworkSnapshot
from .rng import LEAKAGE_STREAM, member_keys, splitmix64, stream_uniforms

DESIGNS = ("ego_cluster", "naive_viewer")


@dataclass(frozen=True)
class SimConfig:
    ego_count: int = 200
    alter_count: int = 2000
    mean_degree: float = 3.0
    degree_exponent: float = 2.5
    affinity: float = 0.8
    weight_mean: float = 5.0
    weight_shape: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.ego_count <= 0 or self.alter_count <= 0:
            raise ValueError("ego_count and alter_count must be positive")
        if not 0.0 <= self.affinity <= 1.0:
            raise ValueError("affinity must lie in [0, 1]")
        if self.degree_exponent <= 2.0:
            raise ValueError("degree_exponent must exceed 2 for a finite mean degree")
        if self.weight_mean <= 0 or self.weight_shape <= 0:
            raise ValueError("weight_mean and weight_shape must be positive")


@dataclass(frozen=True)
class EffectModel:
    base_rate: float = 1.0
    effect_size: float = 0.1
    response: str = "linear"
    noise_sd: float = 0.0
    saturation: float = 3.0

    def __post_init__(self):
        if self.response not in ("linear", "saturating"):
            raise ValueError("response must be 'linear' or 'saturating'")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be non-negative")
        if self.response == "saturating" and self.saturation <= 0:
            raise ValueError("saturation must be positive")

    def f(self, p):
        """Response to the treated feedback share; f(0) = 0, f(1) = 1, nondecreasing."""
        p = np.clip(np.asarray(p, dtype=np.float64), 0.0, 1.0)
        if self.response == "linear":
            return p
        k = self.saturation
        return -np.expm1(-k * p) / -math.expm1(-k)

    @property
    def true_ate(self) -> float:
        return float(self.effect_size * (self.f(1.0) - self.f(0.0)))


@dataclass(frozen=True)
class Churn:
    edge_drop_prob: float = 0.0
    new_edge_rate: float = 0.0
    new_alter_rate: float = 0.0

    def __post_init__(self):
        for name in ("edge_drop_prob", "new_edge_rate", "new_alter_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


def _sub_seed(seed: int, stream: int) -> int:
    return int(splitmix64(np.array([(int(seed) ^ stream) & ((1 << 64) - 1)], dtype=np.uint64))[0])


def _expected_clipped_pareto(xmin: float, tail: float, cap: float) -> float:
    # E[min(X, cap)] for X ~ Pareto(xmin, tail), tail > 1
    if xmin >= cap:
        return cap
    return xmin + xmin**tail * (cap ** (1 - tail) - xmin ** (1 - tail)) / (1 - tail)


def degree_scale(mean_degree: float, exponent: float, cap: int) -> float:
    """Pareto scale giving the requested mean once degrees are capped at ``cap``."""
    if mean_degree < 1 or mean_degree > cap:
        raise EgoClusterError(f"mean degree {mean_degree} infeasible with {cap} egos")
    if mean_degree == cap:
        return float(cap)
    tail = exponent - 1.0
    return optimize.brentq(lambda x: _expected_clipped_pareto(x, tail, cap) - mean_degree, 1e-9, cap)


def sample_degrees(n: int, mean_degree: float, exponent: float, cap: int, rng: np.random.Generator) -> np.ndarray:
    xmin = degree_scale(mean_degree, exponent, cap)
    x = xmin * (1.0 - rng.random(n)) ** (-1.0 / (exponent - 1.0))
    return np.clip(np.rint(x), 1, cap).astype(np.int64)


def generate_edge_arrays(config: SimConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Raw (alter ids, ego ids, weights) rows behind :func:`generate_graph`."""
    rng = np.random.default_rng(config.seed)
    E, A = config.ego_count, config.alter_count
    deg = sample_degrees(A, config.mean_degree, config.degree_exponent, E, rng)
    home = rng.integers(0, E, size=A)
    total = rng.gamma(config.weight_shape, config.weight_mean / config.weight_shape, size=A)

    a = config.affinity
    home_w = total * (a + (1.0 - a) / deg)
    extra = deg - 1
    owner = np.repeat(np.arange(A), extra)
    other = rng.integers(0, max(E - 1, 1), size=len(owner)) if E > 1 else np.zeros(len(owner), dtype=np.int64)
    other = other + (other >= home[owner])
    other_w = (total * (1.0 - a) / deg)[owner]

    alters = np.concatenate([np.arange(A), owner]) + E
    egos = np.concatenate([home, other])
    weights = np.concatenate([home_w, other_w])
    keep = weights > 0
    return alters[keep].astype(np.int64), egos[keep].astype(np.int64), weights[keep]


def generate_graph(config: SimConfig) -> NetworkSnapshot:
    """Random alter -> ego graph with integer ids (egos ``0..E-1``, alters after).

    Each alter gets a power-law degree, a uniformly chosen home ego, and
    ``degree - 1`` further egos drawn uniformly (with replacement, so repeats
    merge).  Its Gamma-distributed total weight is split so the home ego gets
    ``affinity + (1 - affinity) / degree`` and every other draw
    ``(1 - affinity) / degree``; zero-weight edges are omitted.
    """
    alters, egos, weights = generate_edge_arrays(config)
    return NetworkSnapshot.from_arrays(alters, egos, weights, label="T0", id_mode="integer")


def _member_var_from(snapshot: NetworkSnapshot, alter_variants) -> np.ndarray:
    if isinstance(alter_variants, EgoClusterSolution):
        member_var, _ = alter_variants.member_arrays(snapshot)
        return member_var
    if isinstance(alter_variants, np.ndarray):
        return alter_variants.astype(np.int8)
    member_var = np.full(snapshot.n_members, -1, dtype=np.int8)
    if alter_variants:
        ids = list(alter_variants)
        codes = snapshot.codes_of(ids)
        vals = np.array([int(alter_variants[i]) for i in ids], dtype=np.int8)
        member_var[codes[codes >= 0]] = vals[codes >= 0]
    return member_var


def treated_share(snapshot: NetworkSnapshot, member_var: np.ndarray, *, leakage: str = "control", seed: int = 0) -> np.ndarray:
    """Per ego-code weight share from treated alters (members without a variant follow ``leakage``)."""
    mv = member_var.copy()
    unknown = mv < 0
    if unknown.any():
        if leakage == "control":
            mv[unknown] = 0
        elif leakage == "random":
            u = stream_uniforms(member_keys(snapshot.members[unknown]), seed, LEAKAGE_STREAM)
            mv[unknown] = (u < 0.5).astype(np.int8)
        else:
            raise ValueError("leakage must be 'control' or 'random'")
    treated = mv[snapshot.alter] == 1
    n = snapshot.n_members
    tw = np.bincount(snapshot.ego, weights=np.where(treated, snapshot.weight, 0.0), minlength=n)
    tot = np.bincount(snapshot.ego, weights=snapshot.weight, minlength=n)
    codes = snapshot.ego_codes
    share = np.zeros(len(codes))
    ok = tot[codes] > 0
    share[ok] = tw[codes][ok] / tot[codes][ok]
    return share


def _outcome_array(snapshot, member_var, model: EffectModel, seed: int, leakage: str) -> np.ndarray:
    share = treated_share(snapshot, member_var, leakage=leakage, seed=seed)
    y = model.base_rate + model.effect_size * model.f(share)
    if model.noise_sd > 0:
        y = y + np.random.default_rng(seed).normal(0.0, model.noise_sd, size=len(y))
    return y


def simulate_outcomes(snapshot: NetworkSnapshot, alter_variants, model: EffectModel, seed: int, *, leakage: str = "control") -> dict:
    """Outcome per ego given alter variants (a dict, a solution, or a per-member-code array)."""
    y = _outcome_array(snapshot, _member_var_from(snapshot, alter_variants), model, seed, leakage)
    return dict(zip(snapshot.egos.tolist(), y.tolist()))


def _two_sample(y_t: np.ndarray, y_c: np.ndarray) -> tuple[float, float, float]:
    """Difference in means, pooled standard error, two-sided t p-value."""
    nt, nc = len(y_t), len(y_c)
    if nt == 0 or nc == 0:
        raise EgoClusterError("both arms need at least one ego")
    est = float(y_t.mean() - y_c.mean())
    df = nt + nc - 2
    if df <= 0:
        return est, math.nan, math.nan
    ss = float(((y_t - y_t.mean()) ** 2).sum() + ((y_c - y_c.mean()) ** 2).sum())
    se = math.sqrt(ss / df * (1.0 / nt + 1.0 / nc))
    if se == 0:
        p = 1.0 if est == 0 else 0.0
    else:
        p = float(2.0 * stats.t.sf(abs(est) / se, df))
    return est, se, p


def estimate_ate(outcomes: dict, solution: EgoClusterSolution) -> tuple[float, float]:
    """Treatment-cluster minus control-cluster mean ego outcome, with pooled SE."""
    ev = solution.ego_variants
    missing = [e for e in ev if e not in outcomes]
    if missing:
        raise EgoClusterError(f"{len(missing)} solution ego(s) lack an outcome, e.g. {missing[0]!r}")
    y_t = np.array([outcomes[e] for e, v in ev.items() if v == Variant.TREATMENT])
    y_c = np.array([outcomes[e] for e, v in ev.items() if v == Variant.CONTROL])
    est, se, _ = _two_sample(y_t, y_c)
    return est, se


@dataclass
class ExperimentRun:
    design: str
    seed: int
    estimate: float
    std_error: float
    p_value: float
    true_ate: float
    n_treatment: int
    n_control: int
    loss_rate: float | None = None
    outcomes: dict | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("outcomes")
        return d


def run_design(snapshot: NetworkSnapshot, design: str, model: EffectModel, seed: int, *,
               solution: EgoClusterSolution | None = None, leakage: str = "control",
               keep_outcomes: bool = False) -> ExperimentRun:
    """Replay one experiment on ``snapshot`` and read out the creator-side effect."""
    egos = snapshot.members[snapshot.ego_codes]
    if design == "ego_cluster":
        if solution is None:
            solution = build_solution(snapshot, seed)
        member_var, _ = solution.member_arrays(snapshot)
        arms = member_var[snapshot.ego_codes]
    elif design == "naive_viewer":
        # viewers randomised iid; creators keep the random labels they would get as egos
        arms = _ego_variant_array(egos, seed, 0.5)
        member_var = np.full(snapshot.n_members, -1, dtype=np.int8)
        alters = snapshot.alter_codes
        u = np.random.default_rng(_sub_seed(seed, 0x4E41495645)).random(len(alters))
        member_var[alters] = (u < 0.5).astype(np.int8)
    else:
        raise ValueError(f"unknown design {design!r}")
    y = _outcome_array(snapshot, member_var, model, _sub_seed(seed, DESIGNS.index(design) + 1), leakage)
    treated = arms == 1
    est, se, p = _two_sample(y[treated], y[~treated])
    run = ExperimentRun(design, int(seed), est, se, p, model.true_ate, int(treated.sum()), int((~treated).sum()))
    if keep_outcomes:
        run.outcomes = dict(zip(egos.tolist(), y.tolist()))
    return run


@dataclass
class ComparisonReport:
    config: SimConfig
    model: EffectModel
    alpha: float
    runs: list[ExperimentRun]
    null_runs: list[ExperimentRun]

    def summary(self) -> dict:
        out = {}
        for design in DESIGNS:
            rs = [r for r in self.runs if r.design == design]
            est = np.array([r.estimate for r in rs])
            rej = np.array([r.p_value < self.alpha for r in rs])
            nulls = [r for r in self.null_runs if r.design == design]
            n = len(est)
            out[design] = {
                "n_seeds": n,
                "mean_estimate": float(est.mean()),
                "bias": float(est.mean() - self.model.true_ate),
                "mc_se": float(est.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan,
                "power": float(rej.mean()),
                "null_fpr": float(np.mean([r.p_value < self.alpha for r in nulls])) if nulls else None,
            }
        return out

    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "model": asdict(self.model) | {"true_ate": self.model.true_ate},
            "alpha": self.alpha,
            "per_seed": [r.to_dict() for r in self.runs],
            "summary": self.summary(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def run_comparison(config: SimConfig, model: EffectModel, seeds, *, alpha: float = 0.05,
                   leakage: str = "control", include_null: bool = True, min_seeds: int = 30) -> ComparisonReport:
    """Run both designs on a fresh graph per seed; optionally replay under a zero effect."""
    seeds = list(seeds)
    if len(seeds) < min_seeds:
        raise ValueError(f"need at least {min_seeds} seeds for a stable Monte Carlo summary, got {len(seeds)}")
    null_model = replace(model, effect_size=0.0)
    runs, nulls = [], []
    for s in seeds:
        g = generate_graph(replace(config, seed=int(s)))
        sol = build_solution(g, int(s))
        for design in DESIGNS:
            runs.append(run_design(g, design, model, int(s), solution=sol, leakage=leakage))
            if include_null:
                nulls.append(run_design(g, design, null_model, int(s), solution=sol, leakage=leakage))
    return ComparisonReport(config, model, alpha, runs, nulls)


def evolve_network(snapshot_t0: NetworkSnapshot, churn: Churn, seed: int) -> NetworkSnapshot:
    """Age a snapshot by one experiment window.

    Every edge survives with probability ``1 - edge_drop_prob``; about
    ``new_edge_rate * edges`` new edges join existing alters to random egos;
    ``new_alter_rate * alters`` brand-new alters appear, with degrees and
    weights resampled from the T0 graph.
    """
    rng = np.random.default_rng(seed)
    s = snapshot_t0
    keep = rng.random(s.n_edges) >= churn.edge_drop_prob
    a_ids = [s.members[s.alter[keep]]]
    e_ids = [s.members[s.ego[keep]]]
    ws = [s.weight[keep]]

    egos = s.ego_codes
    alters = s.alter_codes
    n_new_edges = int(rng.poisson(churn.new_edge_rate * s.n_edges)) if churn.new_edge_rate > 0 else 0
    if n_new_edges and len(alters):
        a_ids.append(s.members[rng.choice(alters, n_new_edges)])
        e_ids.append(s.members[rng.choice(egos, n_new_edges)])
        ws.append(rng.choice(s.weight, n_new_edges))

    n_new_alters = int(round(churn.new_alter_rate * len(alters)))
    if n_new_alters:
        deg = np.diff(s.alter_indptr)[alters]
        d = np.minimum(rng.choice(deg, n_new_alters), len(egos))
        if s.id_mode == "integer":
            start = int(s.members.max()) + 1
            new_ids = np.arange(start, start + n_new_alters, dtype=np.int64)
        else:
            existing = set(s.members.tolist())
            new_ids, k = [], 0
            while len(new_ids) < n_new_alters:
                cand = f"new_{seed}_{k}"
                k += 1
                if cand not in existing:
                    new_ids.append(cand)
            new_ids = np.array(new_ids, dtype=object)
        owner = np.repeat(np.arange(n_new_alters), d)
        a_ids.append(new_ids[owner])
        e_ids.append(s.members[rng.choice(egos, len(owner))])
        ws.append(rng.choice(s.weight, len(owner)))

    return NetworkSnapshot.from_arrays(
        np.concatenate(a_ids), np.concatenate(e_ids), np.concatenate(ws),
        label="T14", id_mode=s.id_mode,
    )
