import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from chartbench import analytic, mc
from chartbench.charts import ChangePointModel, ChartSpec, Family

EWMA = ChartSpec(Family.EWMA, lam=0.1, limit_factor=2.4098)
PM = ChartSpec(Family.PM, p=0.35, limit_factor=6.415)


def test_zero_state_is_deterministic_given_seed():
    a = mc.zero_state_arl(EWMA, 0.5, 5000, seed=99)
    b = mc.zero_state_arl(EWMA, 0.5, 5000, seed=99)
    c = mc.zero_state_arl(EWMA, 0.5, 5000, seed=100)
    assert a == b
    assert a != c


def test_results_do_not_depend_on_thread_count():
    n0 = mc.set_threads(1)
    try:
        a = mc.zero_state_table(EWMA, [0.0, 1.0], 20_000, seed=5)
        b = mc.steady_state_table(EWMA, [1.0], 3000, seed=5)
    finally:
        mc.set_threads(None)
    assert mc.zero_state_table(EWMA, [0.0, 1.0], 20_000, seed=5) == a
    assert mc.steady_state_table(EWMA, [1.0], 3000, seed=5) == b
    assert n0 >= 1


@pytest.mark.parametrize("delta", [0.0, 0.5, 2.0])
def test_ced_at_tau_one_equals_zero_state(delta):
    z = mc.zero_state_arl(EWMA, delta, 4096, seed=3)
    c = mc.ced(EWMA, ChangePointModel(1, delta), 4096, seed=3)
    assert z.mean == c.mean and z.stderr == c.stderr


def test_forked_zero_state_matches_direct_simulation():
    f = mc.forked_estimates(PM, [1], [0.75], 3000, seed=8)[0, 0]
    d = mc.zero_state_arl(PM, 0.75, 3000, seed=8)
    assert f.mean == pytest.approx(d.mean, rel=1e-12)


def test_forked_profile_matches_rejection_estimator():
    spec = ChartSpec(Family.CUSUM, k=0.5, limit_factor=4.0)
    prof = mc.ced_profile(spec, 1.0, 20, 20_000, seed=4)
    rej = mc.ced(spec, ChangePointModel(20, 1.0), 20_000, seed=4)
    assert abs(prof[19].mean - rej.mean) < 4 * math.hypot(prof[19].stderr, rej.stderr)


def test_shewhart_oracle():
    spec = ChartSpec(Family.EWMA, lam=1.0, limit_factor=3.0)
    est = mc.zero_state_arl(spec, 0.0, 100_000, seed=1)
    assert abs(est.mean - analytic.shewhart_arl(3.0)) < 4 * est.stderr


def test_in_control_ced_is_flagged():
    est = mc.ced(EWMA, ChangePointModel(5, 0.0), 2000, seed=2)
    assert any("informational" in n for n in est.notes)


def test_censored_runs_are_reported():
    spec = ChartSpec(Family.EWMA, lam=0.1, limit_factor=3.5)
    L = mc.run_lengths(spec, 0.0, 200, seed=1, cap=50)
    assert np.any(L == 0)
    est = mc._estimate_from_lengths(L)
    assert est.censored == np.count_nonzero(L == 0) and not est.valid
    with pytest.raises(mc.CensoredRunError):
        mc.sample_run_length(spec, ChangePointModel(math.inf, 0.0), mc.SeedPlan(1, 0), cap=5)


def test_unreachable_change_point():
    spec = ChartSpec(Family.EWMA, lam=1.0, limit_factor=0.3)  # signals almost at once
    with pytest.raises(mc.UnreachableChangePointError):
        mc.ced(spec, ChangePointModel(50, 1.0), 1000, seed=1)


def test_empty_shift_grid_is_rejected():
    with pytest.raises(ValueError):
        mc.forked_estimates(EWMA, [1], [], 1000)
    with pytest.raises(ValueError):
        mc.zero_state_arl(EWMA, 0.0, 10)


def test_doubling_replications_shrinks_stderr():
    a = mc.zero_state_arl(EWMA, 0.5, 50_000, seed=6)
    b = mc.zero_state_arl(EWMA, 0.5, 100_000, seed=6)
    assert a.stderr / b.stderr == pytest.approx(math.sqrt(2), rel=0.1)


@given(st.floats(0, 1e6), st.floats(0, 10), st.integers(0, 10**9), st.floats(0.001, 1))
def test_estimate_dict_roundtrip(mean, se, n, frac):
    e = mc.RunLengthEstimate(mean, se, n, frac, 0, se * 2, ("x",))
    assert mc.RunLengthEstimate.from_dict(e.to_dict()) == e


@given(st.integers(0, 2**64 - 1), st.integers(0, 10**6))
def test_seed_plan_domain(seed, idx):
    assert mc.SeedPlan(seed, idx).master_seed == seed


def test_seed_plan_rejects_negative():
    with pytest.raises(ValueError):
        mc.SeedPlan(-1)
