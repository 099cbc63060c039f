import itertools
from collections import Counter

import numpy as np
import pytest
from scipy import stats
from statsmodels.stats.proportion import proportion_confint

from pgtsim.bounds import necessary_rate, sufficient_rate
from pgtsim.core import LOG2, RegimeParams
from pgtsim.experiments import (NoCrossover, SweepConfig, SweepRow, SweepTable, TrialSpec,
                                check_mean_disguised, check_prior_equivalence,
                                check_w_concentration, conditional_chi_square,
                                detect_crossover, error_from_outcomes, estimate_error,
                                monotone_clean, regime_for_k, run_trial, run_trials,
                                sample_combinatorial, sample_w_g, sweep_alpha,
                                violates_monotonicity, wilson_interval)


@pytest.fixture
def small_regime():
    return RegimeParams(600, 0.2)


def test_identity_alpha_one_always_succeeds(small_regime):
    spec = TrialSpec(small_regime, 1.0, design="identity", decoder="individual", prior="iid")
    outs = run_trials(spec, 50, master_seed=1)
    assert all(o.comp_ok and o.dd_ok for o in outs)


def test_trial_spec_validation(small_regime):
    with pytest.raises(ValueError):
        TrialSpec(small_regime, 0.5, design="identity")
    with pytest.raises(ValueError):
        TrialSpec(small_regime, 0.0001)
    with pytest.raises(ValueError):
        TrialSpec(small_regime, 0.5, decoder="individual")
    with pytest.raises(ValueError):
        TrialSpec(small_regime, 0.5, prior="uniform")


def test_run_trial_deterministic(small_regime):
    spec = TrialSpec(small_regime, 0.4)
    assert run_trial(spec, 12345) == run_trial(spec, 12345)


@pytest.mark.parametrize("design", ["nctpi", "bernoulli"])
@pytest.mark.parametrize("prior", ["iid", "combinatorial"])
def test_trial_outcome_invariants(small_regime, design, prior):
    spec = TrialSpec(small_regime, 0.35, design=design, prior=prior)
    for o in run_trials(spec, 40, master_seed=3):
        assert o.comp_ok == (o.g == 0)
        assert o.dd_false_pos == 0
        assert o.comp_false_neg == 0
        assert o.g <= o.d_total <= small_regime.n
        assert o.comp_false_pos == o.g
        assert o.w_k <= spec.n_tests


def test_combinatorial_prior_uniform_over_subsets():
    counts = Counter()
    for s in range(6000):
        x = sample_combinatorial(np.random.default_rng(s), 6, 2)
        counts[tuple(np.flatnonzero(x))] += 1
    assert len(counts) == 15
    obs = [counts[c] for c in itertools.combinations(range(6), 2)]
    assert stats.chisquare(obs).pvalue > 1e-3


def test_wilson_interval_against_statsmodels():
    lo, hi = wilson_interval(0, 100)
    assert lo == 0.0
    assert hi == pytest.approx(0.036995, abs=5e-6)
    for f, n in [(0, 100), (3, 17), (50, 100), (99, 100), (1000, 1000)]:
        ref = proportion_confint(f, n, alpha=0.05, method="wilson")
        assert wilson_interval(f, n) == pytest.approx(ref, abs=1e-12)
    assert wilson_interval(7, 7)[1] == 1.0


def test_wilson_width_shrinks_as_inverse_sqrt():
    widths = [np.subtract(*wilson_interval(n // 4, n)[::-1]) for n in (400, 1600, 6400)]
    assert widths[0] / widths[1] == pytest.approx(2, rel=0.02)
    assert widths[1] / widths[2] == pytest.approx(2, rel=0.02)


def test_estimate_error_all_failures(small_regime):
    spec = TrialSpec(small_regime, 0.02)
    est = estimate_error(spec, 30, master_seed=0)
    assert est.rate == 1.0 and est.ci_high == 1.0


def test_error_decomposition_comp_failures_are_g_positive(small_regime):
    spec = TrialSpec(small_regime, 0.3)
    outs = run_trials(spec, 200, master_seed=5)
    est = error_from_outcomes(outs, "comp")
    assert est.failures == sum(o.g >= 1 for o in outs)
    assert 0 < est.failures < 200


@pytest.mark.slow
def test_error_small_well_above_sufficient_rate():
    regime = RegimeParams(2000, 0.2)
    spec = TrialSpec(regime, 1.5 * sufficient_rate(0.2, 0.1))
    est = estimate_error(spec, 10_000, master_seed=11)
    assert est.rate < 0.05


def _table(errors, alphas=None, trials=100):
    alphas = alphas or [0.1 * (i + 1) for i in range(len(errors))]
    rows = []
    for a, e in zip(alphas, errors):
        lo, hi = wilson_interval(round(e * trials), trials)
        rows.append(SweepRow(a, round(a * 1000), e, lo, hi, 0.0, 0.0, 0.0))
    return SweepTable(rows, {})


def test_detect_crossover_cases():
    with pytest.raises(NoCrossover):
        detect_crossover(_table([1.0, 1.0, 1.0]), 0.1)
    assert detect_crossover(_table([0.0, 0.0, 0.0]), 0.1) == pytest.approx(0.1)
    step = _table([1.0, 1.0, 0.0, 0.0], trials=1000)
    assert detect_crossover(step, 0.1) == pytest.approx(0.3)


def test_monotone_clean():
    t = monotone_clean(_table([1.0, 0.5, 0.6, 0.0]))
    errs = [r.empirical_error for r in t.rows]
    assert errs == pytest.approx([1.0, 0.55, 0.55, 0.0])
    assert all(a >= b for a, b in zip(errs, errs[1:]))
    his = [r.ci_high for r in t.rows]
    assert all(a >= b for a, b in zip(his, his[1:]))
    assert all(r.ci_low <= r.empirical_error <= r.ci_high for r in t.rows)


def test_sweep_monotone_and_schedule_independent():
    cfg = SweepConfig(RegimeParams(800, 0.2), (0.1, 0.25, 0.4, 0.55, 0.7), trials=60,
                      master_seed=21)
    serial = sweep_alpha(cfg)
    parallel = sweep_alpha(cfg, workers=3)
    assert serial.to_csv() == parallel.to_csv()
    assert not violates_monotonicity(serial)
    for r in serial.rows:
        assert 0 <= r.empirical_error <= 1
        assert r.ci_low <= r.empirical_error <= r.ci_high
    assert serial.rows[0].empirical_error == 1.0
    assert serial.rows[-1].empirical_error < 0.1


def test_sweep_table_csv_round_trip():
    cfg = SweepConfig(RegimeParams(300, 0.2), (0.3, 0.6), trials=10, master_seed=2)
    table = sweep_alpha(cfg)
    text = table.to_csv()
    assert text.startswith("# metadata:\n")
    again = SweepTable.from_csv(text)
    assert again.rows == table.rows
    assert again.metadata["config"] == cfg.to_dict()
    assert SweepConfig.from_dict(again.metadata["config"]) == cfg
    assert '"rows"' in table.to_json()


def test_sweep_config_validation():
    r = RegimeParams(300, 0.2)
    with pytest.raises(ValueError):
        SweepConfig(r, (0.5, 0.4))
    with pytest.raises(ValueError):
        SweepConfig(r, (0.5, 1.2))
    with pytest.raises(ValueError):
        SweepConfig(r, ())
    with pytest.raises(ValueError):
        SweepConfig(r, (0.5,), trials=0)
    cfg = SweepConfig.from_dict({"regime": {"n": 300, "lambda": 0.2},
                                 "alpha_grid": {"start": 0.1, "stop": 0.5, "num": 5}})
    assert cfg.alpha_grid == (0.1, 0.2, 0.3, 0.4, 0.5)


@pytest.mark.slow
def test_sweep_brackets_at_n_1e4():
    regime = RegimeParams(10**4, 0.2)
    low = 0.9 * necessary_rate(0.2, 0.1)
    high = 1.5 * sufficient_rate(0.2, 0.1)
    table = sweep_alpha(SweepConfig(regime, (low, high), trials=200, master_seed=4))
    assert table.rows[0].empirical_error > 0.9
    assert table.rows[1].empirical_error < 0.1


def test_prior_equivalence_identity_trivial():
    regime = RegimeParams(400, 0.2)
    res = check_prior_equivalence(regime, 1.0, 30, seed=1, design="identity",
                                  decoder="individual")
    assert res.iid.rate == 0 and res.combinatorial.rate == 0
    assert res.overlap
    # identity testing is perfect for any k, so the power check cannot separate
    assert not res.power_ok and not res.passed


def test_w_concentration_small_and_degenerate():
    rep = check_w_concentration(400, 50, LOG2, 400, seed=2)
    assert rep.target_mean == pytest.approx(200.0)
    assert rep.mean_ok
    assert check_w_concentration(20, 20, LOG2, 5, seed=2).degenerate


def test_w_concentration_rounded_draws_shift_the_mean():
    # L = round(5.545) = 6 gives effective nu = 0.75 and mean W near 1055
    rep = check_w_concentration(2000, 250, LOG2, 300, seed=3, integer_draws=True)
    assert rep.draws == 6
    assert not rep.mean_ok
    assert rep.mean == pytest.approx(2000 * (1 - (1 - 1 / 2000) ** 1500), abs=5)


def test_conditional_chi_square_accepts_truth_rejects_wrong_l():
    n, T, k, L = 400, 120, 12, 7
    w, g = sample_w_g(n, T, k, L, 1500, seed=9)
    stat, dof, _ = conditional_chi_square(w, g, n, T, k, L)
    assert dof > 0 and stats.chi2.sf(stat, dof) > 1e-3
    stat, dof, _ = conditional_chi_square(w, g, n, T, k, L - 2)
    assert stats.chi2.sf(stat, dof) < 1e-6


def test_check_mean_disguised_small():
    rep = check_mean_disguised(RegimeParams(1500, 0.5), 0.5 * 0.5 / LOG2 ** 2, 60, seed=1)
    assert rep.conjecture_exact <= rep.conjecture_simplified
    assert rep.mean_d > 0


def test_regime_for_k():
    assert regime_for_k(10**4, 250).k == 250
    assert regime_for_k(2000, 50).k == 50
