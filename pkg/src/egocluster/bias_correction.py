"""Leftover-traffic bias correction for viewer-side experiments.

Viewer experiments that run beside an ego-cluster test only see the leftover
traffic, which is less engaged than the ego-cluster members.  A reserved
sample of ego-cluster traffic is run alongside; both strata are recombined
with population weights n_E/(n_E+n_1) and n_1/(n_E+n_1).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from scipy.stats import norm

from .errors import EgoClusterError, EgoClusterWarning


@dataclass(frozen=True)
class PopulationSizes:
    n_E: float
    n_1: float
    n_R: float | None = None
    n_T: float | None = None
    n_C: float | None = None

    def __post_init__(self):
        if self.n_E <= 0 or self.n_1 <= 0:
            raise ValueError("n_E and n_1 must be positive")
        for name in ("n_R", "n_T", "n_C"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be positive")
        if self.n_R is not None and self.n_R > self.n_E:
            raise ValueError("reserved population n_R cannot exceed ego-cluster traffic n_E")

    def weights(self) -> tuple[float, float]:
        total = self.n_E + self.n_1
        if total <= 0:
            raise EgoClusterError("n_E + n_1 must be positive")
        return self.n_E / total, self.n_1 / total


@dataclass(frozen=True)
class ArmStats:
    """Per-arm reserve and leftover sample summaries (unit-level variances)."""

    mean_reserve: float
    mean_leftover: float
    var_reserve: float
    var_leftover: float
    n_reserve: int
    n_leftover: int

    def __post_init__(self):
        if self.var_reserve < 0 or self.var_leftover < 0:
            raise ValueError("variances must be non-negative")
        if self.n_reserve <= 0 or self.n_leftover <= 0:
            raise ValueError("sample counts must be positive")

    @property
    def n(self) -> int:
        return self.n_reserve + self.n_leftover


@dataclass(frozen=True)
class SampleStats:
    """Plain mean / unit variance / count of one arm."""

    mean: float
    var: float
    n: int


@dataclass(frozen=True)
class CorrectedReadout:
    mean_t: float
    mean_c: float
    var_t: float
    var_c: float
    delta_pct: float
    var_delta_pct: float
    p_value: float
    mde: float
    n_t: float
    n_c: float
    alpha: float = 0.05
    power: float = 0.8

    def to_dict(self) -> dict:
        return {
            "mean_t": self.mean_t,
            "mean_c": self.mean_c,
            "var_t": self.var_t,
            "var_c": self.var_c,
            "delta_pct": self.delta_pct,
            "var_delta_pct": self.var_delta_pct,
            "p_value": self.p_value,
            "mde": self.mde,
            "config": {"alpha": self.alpha, "power": self.power, "n_t": self.n_t, "n_c": self.n_c},
        }


def combined_mean(arm: ArmStats, sizes: PopulationSizes) -> float:
    w_e, w_1 = sizes.weights()
    return arm.mean_reserve * w_e + arm.mean_leftover * w_1


def combined_var(arm: ArmStats, sizes: PopulationSizes) -> float:
    w_e, w_1 = sizes.weights()
    return arm.var_reserve * w_e**2 + arm.var_leftover * w_1**2


def relative_lift_variance(mean_t: float, mean_c: float, var_t: float, var_c: float, n_t: float, n_c: float) -> float:
    """Delta-method variance of (mean_t - mean_c) / mean_c from unit variances."""
    return var_t / (mean_c**2 * n_t) + mean_t**2 * var_c / (mean_c**4 * n_c)


def two_sided_p(delta: float, var: float) -> float:
    if var <= 0:
        return 1.0 if delta == 0 else 0.0
    return float(min(1.0, 2.0 * norm.sf(abs(delta) / math.sqrt(var))))


def mde(var_delta_pct: float, alpha: float = 0.05, power: float = 0.8) -> float:
    """Smallest relative lift detectable two-sided at ``alpha`` with ``power``."""
    if var_delta_pct < 0:
        raise ValueError("var_delta_pct must be non-negative")
    if not 0 < alpha < 1 or not 0 < power < 1:
        raise ValueError("alpha and power must lie in (0, 1)")
    return float((norm.ppf(1 - alpha / 2) + norm.ppf(power)) * math.sqrt(var_delta_pct))


def _readout(mean_t, mean_c, var_t, var_c, n_t, n_c, alpha, power) -> CorrectedReadout:
    if mean_c == 0:
        raise EgoClusterError("control mean is zero; relative lift undefined")
    if n_t <= 0 or n_c <= 0:
        raise ValueError("n_T and n_C must be positive")
    delta = (mean_t - mean_c) / mean_c
    var_delta = relative_lift_variance(mean_t, mean_c, var_t, var_c, n_t, n_c)
    if var_delta == 0 and delta != 0:
        warnings.warn("zero lift variance with non-zero lift; p-value set to 0", EgoClusterWarning, stacklevel=3)
    return CorrectedReadout(
        mean_t, mean_c, var_t, var_c, delta, var_delta, two_sided_p(delta, var_delta),
        mde(var_delta, alpha, power), n_t, n_c, alpha, power,
    )


def lift_and_significance(
    stats_t: ArmStats, stats_c: ArmStats, sizes: PopulationSizes, *, alpha: float = 0.05, power: float = 0.8
) -> CorrectedReadout:
    """Bias-corrected relative lift, its variance, p-value and MDE.

    ``sizes.n_T``/``n_C`` default to each arm's reserve + leftover count.
    """
    n_t = sizes.n_T if sizes.n_T is not None else stats_t.n
    n_c = sizes.n_C if sizes.n_C is not None else stats_c.n
    return _readout(
        combined_mean(stats_t, sizes), combined_mean(stats_c, sizes),
        combined_var(stats_t, sizes), combined_var(stats_c, sizes),
        n_t, n_c, alpha, power,
    )


def plain_readout(t: SampleStats, c: SampleStats, *, alpha: float = 0.05, power: float = 0.8) -> CorrectedReadout:
    """Uncorrected readout from single-population arm summaries."""
    return _readout(t.mean, c.mean, t.var, c.var, t.n, c.n, alpha, power)


@dataclass(frozen=True)
class BacktestReport:
    full: CorrectedReadout
    corrected: CorrectedReadout
    leftover_only: CorrectedReadout
    metric: str = "metric"

    @property
    def mde(self) -> float:
        return self.full.mde

    @property
    def corrected_mde(self) -> float:
        return self.corrected.mde

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "mde": self.full.mde,
            "bias_corrected_mde": self.corrected.mde,
            "relative_lift": self.full.delta_pct,
            "bias_corrected_lift": self.corrected.delta_pct,
            "leftover_only_lift": self.leftover_only.delta_pct,
            "leftover_only_mde": self.leftover_only.mde,
        }

    def to_text(self) -> str:
        cols = ["MDE", "bias-corrected MDE", "relative lift", "bias-corrected lift"]
        vals = [f"{100 * v:.2f}%" for v in (self.full.mde, self.corrected.mde, self.full.delta_pct, self.corrected.delta_pct)]
        widths = [max(len(c), len(v)) for c, v in zip(cols, vals)]
        lines = [
            self.metric,
            "  ".join(c.ljust(w) for c, w in zip(cols, widths)),
            "  ".join(v.rjust(w) for v, w in zip(vals, widths)),
            f"(leftover-only lift without correction: {100 * self.leftover_only.delta_pct:.2f}%)",
        ]
        return "\n".join(lines) + "\n"


def backtest_report(
    full_t: SampleStats,
    full_c: SampleStats,
    stats_t: ArmStats,
    stats_c: ArmStats,
    sizes: PopulationSizes,
    *,
    alpha: float = 0.05,
    power: float = 0.8,
    metric: str = "metric",
) -> BacktestReport:
    """Compare a full-population readout with the corrected and leftover-only ones."""
    full = plain_readout(full_t, full_c, alpha=alpha, power=power)
    corrected = lift_and_significance(stats_t, stats_c, sizes, alpha=alpha, power=power)
    leftover = _readout(
        stats_t.mean_leftover, stats_c.mean_leftover, stats_t.var_leftover, stats_c.var_leftover,
        stats_t.n_leftover, stats_c.n_leftover, alpha, power,
    )
    return BacktestReport(full, corrected, leftover, metric)


def readout_table(r: CorrectedReadout) -> str:
    cols = ["mean T", "mean C", "relative lift", "var(lift)", "p-value", "MDE"]
    vals = [f"{r.mean_t:.6g}", f"{r.mean_c:.6g}", f"{100 * r.delta_pct:.3f}%", f"{r.var_delta_pct:.4g}",
            f"{r.p_value:.4g}", f"{100 * r.mde:.3f}%"]
    widths = [max(len(c), len(v)) for c, v in zip(cols, vals)]
    return "  ".join(c.ljust(w) for c, w in zip(cols, widths)) + "\n" + "  ".join(
        v.rjust(w) for v, w in zip(vals, widths)) + "\n"

