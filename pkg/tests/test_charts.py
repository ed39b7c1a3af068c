import math

import numpy as np
import pytest

from chartbench import mc, rng
from chartbench.charts import (ChartSpec, Family, LimitPolicy, RunsRule, SpecError, run_chart,
                               statistic_sd, weight_vector)

DESIGNS = [
    ChartSpec(Family.EWMA, lam=0.1, limit_factor=2.4),
    ChartSpec(Family.EWMA, lam=0.2, limit_factor=2.8, limit_policy=LimitPolicy.ASYMPTOTIC),
    ChartSpec(Family.CUSUM, k=0.5, limit_factor=4.0),
    ChartSpec(Family.MEC, lam=0.25, a_star=0.5, limit_factor=7.7),
    ChartSpec(Family.RRCUSUM, k=0.5, warning_factor=3.44, alarm_factor=4.6, rr_kind=RunsRule.TWO_OF_TWO),
    ChartSpec(Family.RRCUSUM, k=0.5, warning_factor=3.5, alarm_factor=math.inf, rr_kind=RunsRule.TWO_OF_THREE),
    ChartSpec(Family.RREWMA, lam=0.1, limit_factor=2.145, rr_kind=RunsRule.TWO_OF_TWO),
    ChartSpec(Family.RREWMA, lam=0.1, limit_factor=2.158, rr_kind=RunsRule.TWO_OF_THREE),
    ChartSpec(Family.RREWMA, lam=0.1, limit_factor=2.158, rr_kind=RunsRule.MODIFIED_TWO_OF_THREE),
    ChartSpec(Family.MA, w=5, limit_factor=2.8),
    ChartSpec(Family.DMA, w=4, limit_factor=2.8),
    ChartSpec(Family.DEWMA, lam=0.1, limit_factor=2.0),
    ChartSpec(Family.TEWMA, lam=0.13, limit_factor=1.91),
    ChartSpec(Family.PM, p=0.35, limit_factor=6.415),
    ChartSpec(Family.DPM, p=0.35, limit_factor=2.596),
]


@pytest.mark.parametrize("spec", DESIGNS, ids=lambda s: s.label())
@pytest.mark.parametrize("delta", [0.0, 0.75])
def test_compiled_kernel_matches_reference_machine(spec, delta):
    seed = 20
    L = mc.run_lengths(spec, delta, 40, seed, cap=5000)
    s = mc._seed(seed)
    for r in range(40):
        xs = rng.normals(s, r, 5000) + delta
        ref = run_chart(spec, xs)
        assert L[r] == (0 if ref is None else ref)


@pytest.mark.parametrize("spec", [d for d in DESIGNS if d.is_linear], ids=lambda s: s.label())
def test_statistic_sd_is_weight_norm(spec):
    for i in (1, 2, 7, 30):
        c = weight_vector(spec, i)
        assert statistic_sd(spec, i) == pytest.approx(math.sqrt(np.sum(c * c)), rel=1e-9)


@pytest.mark.parametrize("kwargs", [
    dict(family=Family.EWMA),
    dict(family=Family.EWMA, lam=0.1, k=0.5),
    dict(family=Family.CUSUM, k=0.5, rr_kind=RunsRule.TWO_OF_TWO),
    dict(family=Family.RRCUSUM, k=0.5, warning_factor=3.44),
    dict(family=Family.RRCUSUM, k=0.5, warning_factor=4.8, alarm_factor=4.6, rr_kind=RunsRule.TWO_OF_TWO),
    dict(family=Family.RRCUSUM, k=0.5, warning_factor=3.4, rr_kind=RunsRule.MODIFIED_TWO_OF_THREE),
    dict(family=Family.MA, w=0),
    dict(family=Family.EWMA, lam=1.5),
    dict(family=Family.PM, p=0.35, limit_policy=LimitPolicy.ASYMPTOTIC),
    dict(family=Family.EWMA, lam=0.1, mu0=1.0),
])
def test_invalid_specs_are_rejected(kwargs):
    with pytest.raises(SpecError):
        ChartSpec(**kwargs)


def test_with_limit_roundtrip():
    s = ChartSpec(Family.RRCUSUM, k=0.5, warning_factor=3.44, rr_kind=RunsRule.TWO_OF_TWO)
    assert s.limit is None
    assert s.with_limit(4.6).alarm_factor == 4.6
    assert ChartSpec(Family.DMA, w=3).with_limit(3.0).limit_factor == 3.0
