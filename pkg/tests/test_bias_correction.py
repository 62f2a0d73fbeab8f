import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from egocluster.bias_correction import (
    ArmStats,
    PopulationSizes,
    SampleStats,
    backtest_report,
    combined_mean,
    combined_var,
    lift_and_significance,
    mde,
    plain_readout,
    readout_table,
    relative_lift_variance,
    two_sided_p,
)
from egocluster.errors import EgoClusterError, EgoClusterWarning


def arm(mr=1.0, ml=1.0, vr=1.0, vl=1.0, nr=100, nl=100):
    return ArmStats(mr, ml, vr, vl, nr, nl)


# -- combined mean / variance --------------------------------------------------

def test_combined_mean_hand_value():
    assert combined_mean(arm(mr=2.0, ml=1.0), PopulationSizes(100, 300)) == 1.25


@pytest.mark.parametrize("sizes", [PopulationSizes(1, 1), PopulationSizes(7, 1e6), PopulationSizes(1e9, 3)])
def test_combined_mean_of_equal_means(sizes):
    assert combined_mean(arm(mr=3.5, ml=3.5), sizes) == pytest.approx(3.5, rel=1e-15)


def test_combined_mean_small_leftover_limit():
    assert abs(combined_mean(arm(mr=2.0, ml=1.0), PopulationSizes(1e9, 1)) - 2.0) < 1e-6
    with pytest.raises(ValueError):
        PopulationSizes(10, 0)


def test_combined_var_hand_values():
    assert combined_var(arm(vr=4.0, vl=1.0), PopulationSizes(50, 50)) == 1.25
    assert combined_var(arm(vr=0.0, vl=0.0), PopulationSizes(3, 9)) == 0.0
    base = combined_var(arm(vr=4.0, vl=1.0), PopulationSizes(3, 9))
    assert combined_var(arm(vr=12.0, vl=3.0), PopulationSizes(3, 9)) == pytest.approx(3 * base, rel=1e-15)


def test_population_size_validation():
    with pytest.raises(ValueError):
        PopulationSizes(10, 10, n_R=11)
    with pytest.raises(ValueError):
        PopulationSizes(10, 10, n_T=0)
    with pytest.raises(ValueError):
        ArmStats(1, 1, -1, 1, 10, 10)
    with pytest.raises(ValueError):
        ArmStats(1, 1, 1, 1, 0, 10)


@settings(max_examples=100, deadline=None)
@given(
    mr=st.floats(-1e3, 1e3), ml=st.floats(-1e3, 1e3),
    vr=st.floats(0, 1e3), vl=st.floats(0, 1e3),
    ne=st.floats(1, 1e7), n1=st.floats(1, 1e7),
)
def test_convexity_and_variance_bound(mr, ml, vr, vl, ne, n1):
    a = arm(mr, ml, vr, vl)
    sizes = PopulationSizes(ne, n1)
    m = combined_mean(a, sizes)
    tol = 1e-12 * max(1.0, abs(mr), abs(ml))
    assert min(mr, ml) - tol <= m <= max(mr, ml) + tol
    assert combined_var(a, sizes) <= max(vr, vl) * (1 + 1e-12)


# -- lift, variance, p-value ----------------------------------------------------

def test_null_lift():
    r = lift_and_significance(arm(), arm(), PopulationSizes(10, 10))
    assert r.delta_pct == 0.0 and r.p_value == 1.0


def test_example_two_hand_evaluation():
    # var = 1/(1*1e4) + 1.05^2 * 1/(1*1e4)
    var = relative_lift_variance(1.05, 1.0, 1.0, 1.0, 10_000, 10_000)
    assert var == pytest.approx(2.1025e-4, rel=1e-12)
    r = plain_readout(SampleStats(1.05, 1.0, 10_000), SampleStats(1.0, 1.0, 10_000))
    assert r.delta_pct == pytest.approx(0.05, rel=1e-12)
    z = 0.05 / math.sqrt(2.1025e-4)
    assert r.p_value == pytest.approx(math.erfc(z / math.sqrt(2)), rel=1e-9)


def test_lift_variance_against_simulated_sample_means():
    # sampling distribution of (mean_T - mean_C)/mean_C from normal unit data
    rng = np.random.default_rng(0)
    reps, n = 200_000, 10_000
    mt = rng.normal(1.05, math.sqrt(1.0 / n), reps)
    mc = rng.normal(1.00, math.sqrt(1.0 / n), reps)
    sim_var = np.var((mt - mc) / mc)
    # relative SE of a variance estimate is about sqrt(2/reps) = 0.3%
    assert sim_var == pytest.approx(relative_lift_variance(1.05, 1.0, 1.0, 1.0, n, n), rel=0.02)


def test_homogeneity_under_mean_doubling_and_variance_quadrupling():
    a = lift_and_significance(arm(1.1, 0.9, 2.0, 1.0), arm(1.0, 0.8, 1.5, 0.7), PopulationSizes(3, 7))
    b = lift_and_significance(arm(2.2, 1.8, 8.0, 4.0), arm(2.0, 1.6, 6.0, 2.8), PopulationSizes(3, 7))
    assert b.delta_pct == pytest.approx(a.delta_pct, rel=1e-12)
    assert b.var_delta_pct == pytest.approx(a.var_delta_pct, rel=1e-12)


def test_zero_control_mean_is_an_error():
    with pytest.raises(EgoClusterError):
        lift_and_significance(arm(), arm(mr=0.0, ml=0.0), PopulationSizes(1, 1))


def test_zero_variance_nonzero_lift_warns():
    with pytest.warns(EgoClusterWarning):
        r = lift_and_significance(arm(2, 2, 0, 0), arm(1, 1, 0, 0), PopulationSizes(1, 1))
    assert r.p_value == 0.0


def test_arm_sizes_default_to_sample_counts():
    t, c = arm(1.1, 1.0, nr=30, nl=70), arm(nr=20, nl=60)
    r = lift_and_significance(t, c, PopulationSizes(1, 1))
    assert (r.n_t, r.n_c) == (100, 80)
    r2 = lift_and_significance(t, c, PopulationSizes(1, 1, n_T=1000, n_C=1000))
    assert r2.var_delta_pct < r.var_delta_pct


@settings(max_examples=60, deadline=None)
@given(d1=st.floats(0, 0.5), d2=st.floats(0, 0.5), var=st.floats(1e-8, 1.0))
def test_p_value_monotone_in_abs_lift(d1, d2, var):
    lo, hi = sorted((d1, d2))
    p_lo, p_hi = two_sided_p(lo, var), two_sided_p(-hi, var)
    assert 0.0 <= p_hi <= p_lo <= 1.0


# -- MDE --------------------------------------------------------------------------

def test_mde_values():
    assert mde(0.0) == 0.0
    assert mde(1.0) == pytest.approx(1.959964 + 0.841621, abs=1e-5)
    assert round(mde(1.0), 4) == 2.8016
    assert mde(4.0 * 0.37) == pytest.approx(2 * mde(0.37), rel=1e-12)
    with pytest.raises(ValueError):
        mde(-1.0)
    with pytest.raises(ValueError):
        mde(1.0, alpha=0.0)


# -- backtest ---------------------------------------------------------------------

def test_full_reserve_gives_full_population_lift():
    # n_R = n_E: the reserve is the whole ego stratum, so the recombined means are the population means
    n_e, n_1 = 300, 700
    rng = np.random.default_rng(1)
    t_e, t_1 = rng.normal(2.1, 1, n_e), rng.normal(1.05, 1, n_1)
    c_e, c_1 = rng.normal(2.0, 1, n_e), rng.normal(1.0, 1, n_1)
    sizes = PopulationSizes(n_e, n_1, n_R=n_e)
    st_t = ArmStats(t_e.mean(), t_1.mean(), t_e.var(ddof=1), t_1.var(ddof=1), n_e, n_1)
    st_c = ArmStats(c_e.mean(), c_1.mean(), c_e.var(ddof=1), c_1.var(ddof=1), n_e, n_1)
    full_t = np.concatenate([t_e, t_1])
    full_c = np.concatenate([c_e, c_1])
    rep = backtest_report(
        SampleStats(full_t.mean(), full_t.var(ddof=1), len(full_t)),
        SampleStats(full_c.mean(), full_c.var(ddof=1), len(full_c)),
        st_t, st_c, sizes,
    )
    assert rep.corrected.delta_pct == pytest.approx(rep.full.delta_pct, rel=1e-12)


def test_backtest_stratified_population():
    rng = np.random.default_rng(2)
    w_e = 0.25
    true_lift = 0.05 / (w_e * 2.0 + (1 - w_e) * 1.0)
    sizes = PopulationSizes(1, 3)
    lifts, left = [], []
    for _ in range(100):
        t_r, t_l = rng.normal(2.05, 1, 5_000), rng.normal(1.05, 1, 15_000)
        c_r, c_l = rng.normal(2.0, 1, 5_000), rng.normal(1.0, 1, 15_000)
        st_t = ArmStats(t_r.mean(), t_l.mean(), t_r.var(ddof=1), t_l.var(ddof=1), 5_000, 15_000)
        st_c = ArmStats(c_r.mean(), c_l.mean(), c_r.var(ddof=1), c_l.var(ddof=1), 5_000, 15_000)
        rep = backtest_report(SampleStats(1.3, 1.0, 80_000), SampleStats(1.25, 1.0, 80_000), st_t, st_c, sizes)
        lifts.append(rep.corrected.delta_pct)
        left.append(rep.leftover_only.delta_pct)
    se = np.std(lifts, ddof=1) / math.sqrt(len(lifts))
    assert abs(np.mean(lifts) - true_lift) < 3 * se
    assert abs(np.mean(left) - true_lift) > 3 * np.std(left, ddof=1) / math.sqrt(len(left))
    d = rep.to_dict()
    assert {"mde", "bias_corrected_mde", "relative_lift", "bias_corrected_lift"} <= set(d)
    header = rep.to_text().splitlines()[1]
    for col in ("MDE", "bias-corrected MDE", "relative lift", "bias-corrected lift"):
        assert col in header


def test_readout_serialisation():
    r = plain_readout(SampleStats(1.05, 1.0, 10_000), SampleStats(1.0, 1.0, 10_000))
    d = r.to_dict()
    assert d["config"] == {"alpha": 0.05, "power": 0.8, "n_t": 10_000, "n_c": 10_000}
    assert "p-value" in readout_table(r)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        plain_readout(SampleStats(1.0, 1.0, 10), SampleStats(1.0, 1.0, 10))
