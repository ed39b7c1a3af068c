"""Acceptance suite: one printed PASS/FAIL line per criterion.

Monte-Carlo agreement ("MC-3sigma") means
``|estimate - reference| <= min(3 * stderr, 0.02 * |reference|) + h`` where
``h`` is half a unit in the last printed digit of the reference value.
Desk scale is 10**6 replications per zero-state cell and 2 * 10**5
conditioned replications per steady-state cell.
"""

import math

import numpy as np
import pytest

from chartbench import analytic, calibrate as cal, mc
from chartbench.bench import default_config, load_paper_values, run_experiment
from chartbench.charts import ChartSpec, Family, weight_vector

from conftest import ACCEPTANCE_LINES

pytestmark = pytest.mark.acceptance

SEED = mc.DEFAULT_SEED
REPS = mc.DEFAULT_TABLE_REPS
PROFILE_REPS = mc.DEFAULT_PROFILE_REPS
SIGMAS = 3.0
REL_CAP = 0.02


def record(n, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)


def band(se: float, ref) -> float:
    return min(SIGMAS * se, REL_CAP * abs(ref.value)) + ref.half_unit


def compare(table, ref_table: str, rows, cols=None) -> tuple[bool, list[str]]:
    """Check every listed cell of ``table`` against the reference dataset."""
    ref = load_paper_values(ref_table)
    bad = []
    for r in rows:
        for c in (cols or table.cols):
            cell = table.get(r, c)
            pv = ref[(r, c)]
            if cell.stderr is None:
                ok = abs(cell.estimate - pv.value) <= pv.half_unit
            else:
                ok = abs(cell.estimate - pv.value) <= band(cell.stderr, pv)
            if not ok:
                se = "" if cell.stderr is None else f"+-{cell.stderr:.3g}"
                bad.append(f"[{r} | {c}: {cell.estimate:.4f}{se} vs {pv.text}]")
    return not bad, bad


def run(eid, **kw):
    return run_experiment(default_config(eid, seed=SEED, **kw))[0]


# ---------------------------------------------------------------------------


def test_criterion_01_table1():
    ks = [round(cal.k_from_lambda(l, 0.5), 4) for l in (0.1, 0.25, 0.5, 0.75, 1.0)]
    k_ok = ks == [0.1147, 0.1890, 0.2887, 0.3873, 0.5]
    res = cal.calibrate_limit(ChartSpec(Family.CUSUM, k=0.5), cal.CalibrationTarget(170.0, n_reps=REPS), SEED)
    h_ok = abs(res.limit - 4.0133) <= 0.02
    record(1, k_ok and h_ok, f"k={ks}; h={res.limit:.4f} (target 4.0133+-0.02, "
                             f"verified ARL {res.achieved.mean:.2f}+-{res.achieved.stderr:.2f})")
    assert k_ok and h_ok


def test_criterion_02_rrcusum_table2():
    rows = ["2of2 WL=3.42 AL=4.8", "2of2 WL=3.53 AL=4.2"]
    t = run("table2", rows=tuple(rows), reps=REPS)
    ok, bad = compare(t, "table2", rows)
    d05 = [f"{t.get(r, '0.5').estimate:.2f}" for r in rows]
    record(2, ok, f"12 cells, delta=0.5 -> {d05} (ref 26.68, 26.51) {' '.join(bad)}")
    assert ok, bad


def test_criterion_03_cusum_table3():
    row = "CUSUM k=0.5 h=4.002"
    t = run("table3", rows=(row,), reps=REPS)
    ok, bad = compare(t, "table3", [row])
    spec = ChartSpec(Family.CUSUM, k=0.5, limit_factor=4.002)
    z = mc.zero_state_arl(spec, 0.0, REPS, SEED)
    markov = analytic.cusum_arl_markov(0.5, 4.002, 0.0).value
    ic_ok = abs(z.mean - markov) <= 0.01 * markov
    vals = [round(c.estimate, 2) for c in t.row(row)]
    record(3, ok and ic_ok, f"{vals}; in-control MC {z.mean:.2f}+-{z.stderr:.2f} vs Markov {markov:.2f} "
                            f"{' '.join(bad)}")
    assert ok and ic_ok, bad


def test_criterion_04_ewma_table4():
    std, rr = "EWMA lambda=0.1 c_E=2.2145", "2of2 EWMA lambda=0.1 L_S=2.145"
    t = run("table4", rows=(std, rr), reps=REPS)
    ok, bad = compare(t, "table4", [std])
    # companion: the same design with its limit calibrated to A=170
    c170 = cal.calibrate_ewma_numeric(0.1, 170.0)
    spec = ChartSpec(Family.EWMA, lam=0.1, limit_factor=c170)
    comp = mc.zero_state_table(spec, [float(c) for c in t.cols], REPS, SEED)
    ref = load_paper_values("table4")
    comp_bad = [f"[{c}: {e.mean:.3f}+-{e.stderr:.3f} vs {ref[(std, c)].text}]"
                for c, e in zip(t.cols, comp) if abs(e.mean - ref[(std, c)].value) > band(e.stderr, ref[(std, c)])]
    # dominance: standard EWMA detects at least as fast as the 2-of-2 EWMA for every shift
    dom = [c for c, e in zip(t.cols, comp) if c != "0"
           and e.mean > t.get(rr, c).estimate + SIGMAS * math.hypot(e.stderr, t.get(rr, c).stderr)]
    record(4, ok and not dom,
           f"c_E=2.2145 as printed: in-control ARL {t.get(std, '0').estimate:.2f} (ref 169.99) {' '.join(bad)}; "
           f"companion c_E={c170:.4f} (A=170): {'all 7 cells agree' if not comp_bad else ' '.join(comp_bad)}; "
           f"dominance {'holds' if not dom else 'violated at ' + ','.join(dom)}")
    assert not comp_bad and not dom
    assert ok, bad


def test_criterion_05_rrewma_table5():
    row, num = "2of3 EWMA lambda=0.1 L_S=2.158", "EWMA lambda=0.1 c_E=2.4098 [numeric]"
    t = run("table5", rows=(row, num), reps=REPS)
    ok, bad = compare(t, "table5", [row])
    ref = load_paper_values("table5")
    num_bad = [f"[{c}: {t.get(num, c).estimate:.3f} vs {ref[(num, c)].text}]" for c in t.cols
               if abs(t.get(num, c).estimate - ref[(num, c)].value) > 0.005 * ref[(num, c)].value]
    record(5, ok and not num_bad, f"2-of-3 row {[round(c.estimate, 2) for c in t.row(row)]}; "
                                  f"numeric EWMA within 0.5% {'yes' if not num_bad else ' '.join(num_bad)} "
                                  f"{' '.join(bad)}")
    assert ok and not num_bad, bad + num_bad


def test_criterion_06_dma_ma_table6():
    rows = ["DMA w2=2", "MA w1=3", "DMA w2=3", "MA w1=4"]
    t = run("table6", rows=tuple(rows), reps=REPS)
    ok, bad = compare(t, "table6", rows)
    pairs = {w2: cal.match_ma_from_dma(w2) for w2 in range(2, 7)}
    expected = {2: (3, 0.545), 3: (4, 0.38), 4: (6, 0.293), 5: (7, 0.239), 6: (9, 0.202)}
    pair_ok = all((m.w1, round(m.lam, 3)) == expected[w2] for w2, m in pairs.items())
    # diagnostic only: the transcribed cells carry their own simulation error of about 1%
    ref = load_paper_values("table6")
    near = sum(abs(t.get(r, c).estimate - ref[(r, c)].value) <= 0.02 * ref[(r, c)].value + ref[(r, c)].half_unit
               for r in rows for c in t.cols)
    record(6, ok and pair_ok, f"DMA(2) delta=1 {t.get('DMA w2=2', '1').estimate:.2f} (ref 17.4), "
                              f"MA(3) delta=1 {t.get('MA w1=3', '1').estimate:.2f} (ref 15.4); pairings exact: "
                              f"{pair_ok}; within 2%+rounding: {near}/{len(rows) * len(t.cols)} {' '.join(bad)}")
    assert ok and pair_ok, bad


OPTW_CASES = [  # family, delta, search range, published optimum
    (Family.MA, 0.6, range(17, 24), 20),
    (Family.DMA, 0.6, range(10, 15), 12),
    (Family.MA, 1.5, range(3, 8), 5),
    (Family.DMA, 1.5, range(2, 6), 3),
]


def test_criterion_07_optimal_windows():
    target = cal.CalibrationTarget(370.0, 0.01, n_reps=200_000)
    notes, ok = [], True
    for fam, delta, ws, w_ref in OPTW_CASES:
        prof = cal.optimize_window(fam, delta, ws, 370.0, SEED, target, PROFILE_REPS)
        b = prof.estimate(prof.best_w)
        hit = prof.best_w == w_ref
        if not hit and abs(prof.best_w - w_ref) == 1 and w_ref in prof.windows:
            r = prof.estimate(w_ref)
            hit = abs(b.mean - r.mean) < 2 * math.hypot(b.stderr, r.stderr)
        ok &= hit
        notes.append(f"{fam.value} delta={delta}: w*={prof.best_w} (ref {w_ref}, D100={b.mean:.3f}+-{b.stderr:.3f})")
    record(7, ok, "; ".join(notes))
    assert ok


def test_criterion_08_dewma_tables():
    z = run("table_dewma_zARL", rows=("DEWMA lambda=0.1",), reps=REPS)
    ok_z, bad_z = compare(z, "table_dewma_zARL", ["DEWMA lambda=0.1"])
    rows = ["DEWMA lambda=0.1", "EWMA lambda=0.05", "TEWMA lambda=0.13 L=1.91"]
    s = run("table_dewma_sARL", rows=tuple(rows), profile_reps=PROFILE_REPS)
    ok_s, bad_s = compare(s, "table_dewma_sARL", rows)
    record(8, ok_z and ok_s, f"zero-state DEWMA {[round(c.estimate, 1) for c in z.row('DEWMA lambda=0.1')]}; "
                             f"steady-state DEWMA {[round(c.estimate, 1) for c in s.row('DEWMA lambda=0.1')]} "
                             f"{' '.join(bad_z + bad_s)}")
    assert ok_z and ok_s, bad_z + bad_s


def test_criterion_09_pm_dpm():
    rows = ["PM p=0.35 L_P=6.415", "DPM p=0.35 L_D=2.596"]
    t = run("table_dpm_zARL", rows=tuple(rows), reps=REPS)
    ok, bad = compare(t, "table_dpm_zARL", rows)
    record(9, ok, f"PM delta=0.25 {t.get(rows[0], '0.25').estimate:.2f} (ref 46.80), "
                  f"DPM delta=0.25 {t.get(rows[1], '0.25').estimate:.2f} (ref 31.65) {' '.join(bad)}")
    assert ok, bad


def test_criterion_10_worst_case():
    delta = 0.5
    x1 = np.round(np.arange(-4.0, 4.0001, 0.25), 10)
    mec = cal.calibrate_limit(ChartSpec(Family.MEC, lam=0.25, a_star=0.5), cal.CalibrationTarget(170.0, n_reps=REPS),
                              SEED).spec
    cusum = ChartSpec(Family.CUSUM, k=0.189, limit_factor=7.7120)

    def profile(spec):
        z = mc.zero_state_arl(spec, delta, REPS, SEED)
        p = mc.conditional_delay_given_x1(spec, delta, x1, PROFILE_REPS, SEED)
        return z, p

    zm, pm = profile(mec)
    m, s = pm.means(), pm.stderrs()
    j = int(np.nanargmax(m))
    mec_ok = m[j] - zm.mean >= SIGMAS * math.hypot(s[j], zm.stderr)

    zc, pc = profile(cusum)
    mc_, sc = pc.means(), pc.stderrs()
    low = pc.x1 <= 0.189
    flat_dev = np.nanmax(np.abs(mc_[low] - np.nanmean(mc_[low])))
    flat_ok = flat_dev <= SIGMAS * np.nanmax(sc[low])
    jc = int(np.nanargmax(mc_))
    sup_ok = abs(mc_[jc] - zc.mean) <= SIGMAS * math.hypot(sc[jc], zc.stderr)
    ok = mec_ok and flat_ok and sup_ok
    record(10, ok, f"MEC b*={mec.limit:.4f}: sup l(x1)={m[j]:.2f}+-{s[j]:.2f} at x1={pm.x1[j]:g} vs zero-state "
                   f"{zm.mean:.2f}+-{zm.stderr:.2f}; CUSUM flat for x1<=k (max dev {flat_dev:.3f}), "
                   f"sup {mc_[jc]:.2f} vs zero-state {zc.mean:.2f}+-{zc.stderr:.2f}")
    assert ok


def test_criterion_11_deterministic_properties():
    fails = []
    for lam in (0.05, 0.1, 0.3, 0.7):
        for i in range(1, 201):
            for fam, closed in ((Family.EWMA, analytic.ewma_sd(lam, i) ** 2),
                                (Family.DEWMA, analytic.dewma_var(lam, i))):
                c = weight_vector(ChartSpec(fam, lam=lam), i)
                if abs(closed - np.sum(c * c)) > 1e-10 * closed:
                    fails.append(f"{fam.value}({lam}) i={i}")
    for w in (1, 2, 5, 12, 30):
        for i in range(1, 201):
            c = weight_vector(ChartSpec(Family.DMA, w=w), i)
            if abs(analytic.dma_var(w, i) - np.sum(c * c)) > 1e-10 * analytic.dma_var(w, i):
                fails.append(f"DMA({w}) i={i}")
    for t in range(1, 201):
        c = analytic.dpm_weights(t)
        if abs(analytic.dpm_var(t) - np.sum(c * c)) > 1e-10 * analytic.dpm_var(t):
            fails.append(f"DPM t={t}")
    for w in range(1, 101):
        if abs(analytic.dma_var_squared_weights(w) - analytic.dma_var_pairwise(w)) > 1e-12:
            fails.append(f"DMA expressions w={w}")
    for t in range(1, 1001):
        if abs(analytic.harmonic(t) - analytic.harmonic_approx(t)) > 1.0 / (120.0 * t ** 4) + 1e-13:
            fails.append(f"harmonic t={t}")
    for i in range(10, 201):
        if int(np.argmax(weight_vector(ChartSpec(Family.DEWMA, lam=0.1), i))) == i - 1:
            fails.append(f"DEWMA argmax i={i}")
    record(11, not fails, "variance identities, DMA expressions, harmonic bound, DEWMA weight argmax "
                          + (" ".join(fails[:5]) if fails else "all hold"))
    assert not fails


def test_criterion_12_engine_oracle():
    spec = ChartSpec(Family.EWMA, lam=1.0, limit_factor=3.0)
    exact = analytic.shewhart_arl(3.0)
    est = mc.zero_state_arl(spec, 0.0, REPS, SEED)
    oracle_ok = abs(est.mean - exact) <= SIGMAS * est.stderr
    covered = 0
    for s in range(50):
        e = mc.zero_state_arl(spec, 0.0, 20_000, seed=1000 + s)
        covered += abs(e.mean - exact) <= 2 * e.stderr
    ok = oracle_ok and covered >= 45
    record(12, ok, f"MC {est.mean:.2f}+-{est.stderr:.2f} vs closed form {exact:.3f}; coverage {covered}/50")
    assert ok
