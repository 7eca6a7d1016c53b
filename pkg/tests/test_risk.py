import dataclasses

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bayesext.circle import CircleData, extended_plugin_mean, mean_of
from bayesext.io import read_csv, write_csv
from bayesext.risk import (CIRCLE_PREDICTIVES, SPIKED_PREDICTIVES, RiskEstimate, TrialConfig,
                           bayes_risk_optimality_check, benchmark_eval, circle_constant_ratios,
                           circle_constants, circle_trial_losses, run_circle_risk, run_spiked_risk,
                           spiked_trial, verify_expansions)
from bayesext.spiked import SamplerConfig, SpikedParam


def small_spiked(trials=6, **kw):
    return TrialConfig("spiked", 20, trials, seed=5, truth=1.0, l=3,
                       sampler=SamplerConfig(n_draws=150, burn_in=50), y_samples=200, **kw)


# ---------------------------------------------------------------------------
# configuration and summaries


def test_zero_trials_rejected():
    with pytest.raises(ValueError):
        TrialConfig("circle", 25, 0)
    with pytest.raises(ValueError):
        TrialConfig("spiked", 1, 10)
    with pytest.raises(ValueError):
        TrialConfig("torus", 25, 10)
    with pytest.raises(ValueError):
        run_spiked_risk(TrialConfig("circle", 25, 10))


def test_config_records_seed():
    d = small_spiked().to_dict()
    assert d["seed"] == 5
    assert d["sampler"]["n_draws"] == 150
    assert TrialConfig("circle", 5, 3).to_dict()["sampler"] is None


@given(st.integers(2, 60), st.integers(1, 4), st.integers(0, 2**31))
def test_risk_estimate_invariants(trials, k, seed):
    rng = np.random.default_rng(seed)
    base = rng.exponential(size=(trials, 1))
    losses = base + 0.1 * rng.normal(size=(trials, k))
    est = RiskEstimate(tuple(f"p{j}" for j in range(k)), losses, seed)
    assert np.all(est.stderr >= 0)
    assert np.all(est.paired_stderrs <= est.stderr[0] + est.stderr + 1e-15)
    assert est.paired_diffs[0] == 0.0 and est.paired_stderrs[0] == 0.0
    m, s = est.diff("p0", f"p{k - 1}")
    assert m == pytest.approx(est.paired_diffs[-1], abs=1e-14)
    assert s == pytest.approx(est.paired_stderrs[-1], abs=1e-14)
    assert est.n_trials == trials


def test_single_trial_has_zero_stderr():
    est = RiskEstimate(("a", "b"), np.array([[1.0, 0.5]]), 0)
    np.testing.assert_array_equal(est.stderr, 0.0)
    assert est.summary()["b"]["diff"] == 0.5


# ---------------------------------------------------------------------------
# circle harness


def test_circle_constants():
    c = circle_constants(25, 1.0)
    assert c["extended-plugin"] == pytest.approx(2.0e-4)
    assert c["bayesian-predictive"] == pytest.approx(6.0e-4)
    c4 = circle_constants(25, 4.0)
    assert c4["extended-plugin"] == pytest.approx(4 / 5000)
    assert c4["bayesian-predictive"] == pytest.approx(6 / 5000)


def test_circle_trial_losses_are_exact_kls(rng):
    xbar = mean_of(0.3) + 0.2 * rng.normal(size=(50, 2))
    losses = circle_trial_losses(0.3, 25, xbar, 1.0)
    assert losses.shape == (50, 3)
    assert np.all(losses >= 0)
    mle = xbar / np.linalg.norm(xbar, axis=1, keepdims=True)
    np.testing.assert_allclose(losses[:, 0], 0.5 * np.sum((mle - mean_of(0.3)) ** 2, axis=1), atol=1e-15)
    ext = extended_plugin_mean(CircleData(25, xbar[0]))
    assert losses[0, 1] == pytest.approx(0.5 * np.sum((ext - mean_of(0.3)) ** 2), abs=1e-15)


def test_circle_run_is_deterministic_across_workers_and_prefixes():
    cfg = TrialConfig("circle", 10, 1200, seed=3)
    a = run_circle_risk(cfg)
    b = run_circle_risk(dataclasses.replace(cfg, workers=4))
    np.testing.assert_array_equal(a.losses, b.losses)
    assert a.names == CIRCLE_PREDICTIVES
    # trial k does not depend on how many trials follow it
    c = run_circle_risk(dataclasses.replace(cfg, trials=500))
    np.testing.assert_array_equal(a.losses[:500], c.losses)
    assert not np.array_equal(run_circle_risk(dataclasses.replace(cfg, seed=4)).losses, a.losses)


def test_circle_degenerate_trials_are_redrawn():
    # n = 1 with a distant truth rarely hits r = 0 exactly, but the count is always reported
    est = run_circle_risk(TrialConfig("circle", 1, 2000, seed=1))
    assert est.degenerate >= 0
    assert np.all(np.isfinite(est.losses))


def test_circle_ratios_rough():
    est = run_circle_risk(TrialConfig("circle", 25, 20000, seed=0))
    ratios = circle_constant_ratios(est)
    for name in ("extended-plugin", "bayesian-predictive"):
        r, se = ratios[name]
        assert abs(r - 1) <= 0.3 + 4 * se


@pytest.mark.slow
def test_circle_constants_tight_band_at_n100():
    est = run_circle_risk(TrialConfig("circle", 100, 10**6, seed=11, workers=4))
    for name, (r, se) in circle_constant_ratios(est).items():
        print(f"n=100 {name}: ratio {r:.4f} +- {se:.4f}")
        assert 0.9 <= r <= 1.1


# ---------------------------------------------------------------------------
# spiked harness


def test_spiked_trials_independent_of_order_and_threads():
    cfg = small_spiked()
    truth = cfg.spiked_truth()
    fwd = [spiked_trial(cfg, truth, k).losses for k in range(cfg.trials)]
    rev = [spiked_trial(cfg, truth, k).losses for k in reversed(range(cfg.trials))][::-1]
    np.testing.assert_array_equal(fwd, rev)
    a = run_spiked_risk(cfg)[0]
    b = run_spiked_risk(dataclasses.replace(cfg, workers=3))[0]
    np.testing.assert_array_equal(a.losses, b.losses)
    np.testing.assert_array_equal(a.losses, np.stack(fwd))
    assert a.names == SPIKED_PREDICTIVES


def test_spiked_grid_and_exact_branches():
    ests = run_spiked_risk(small_spiked(trials=3), [0.5, 2.0])
    assert [e.meta["lambda"] for e in ests] == [0.5, 2.0]
    for e in ests:
        assert np.all(e.losses[:, :2] >= 0)
        assert e.losses.shape == (3, 3)


def test_spiked_truth_accepts_full_param():
    p = SpikedParam(2.0, np.array([0.0, 0.6, 0.8]))
    cfg = dataclasses.replace(small_spiked(trials=2), truth=p)
    assert cfg.spiked_truth() is p
    assert run_spiked_risk(cfg)[0].meta["lambda"] == 2.0


def test_sampler_diagnostics_become_warnings():
    cfg = dataclasses.replace(small_spiked(trials=2), sampler=SamplerConfig(n_draws=100, burn_in=0,
                                                                            lambda_step=40.0))
    with pytest.warns(RuntimeWarning, match="sampler diagnostics"):
        run_spiked_risk(cfg)


# ---------------------------------------------------------------------------
# expansions, optimality, timing


def test_verify_expansions_contract():
    rows = verify_expansions()
    scaled = [r.expansion_gap_times_n for r in rows]
    assert all(a > b for a, b in zip(scaled, scaled[1:]))
    for r in rows:
        assert r.expansion_gap_times_n <= 2 / r.n
        assert r.orthogonality_residual <= 1e-6
    row100 = verify_expansions([100])[0]
    assert row100.exact_norm_gap <= 2 / 100 ** 2


def test_optimality_check():
    rep = bayes_risk_optimality_check(datasets=5, nodes=1024)
    assert rep.perturbed.shape == (5, 2, 16)
    assert np.all(rep.margins > 0)
    np.testing.assert_allclose(rep.quadratic_ratio, 4.0, rtol=0.2)


def test_benchmark_single_draw_sanity():
    rep = benchmark_eval(l=10, draws=1, points=500, repeats=5)
    assert 0.1 <= rep.time_ratio <= 10
    assert all(v > 0 for v in rep.eval_seconds.values())
    assert all(v > 0 for v in rep.nbytes.values())
    assert rep.draws == 1


def test_benchmark_rejects_bad_sizes():
    with pytest.raises(ValueError):
        benchmark_eval(l=5, draws=0)


# ---------------------------------------------------------------------------
# CSV round trip


def test_csv_round_trip(tmp_path):
    est = run_circle_risk(TrialConfig("circle", 10, 300, seed=2))
    rows = [[name, m, s, d, ds] for name, m, s, d, ds in
            zip(est.names, est.mean, est.stderr, est.paired_diffs, est.paired_stderrs)]
    header = ["predictive", "mean_risk", "stderr", "paired_diff", "diff_stderr"]
    path = write_csv(tmp_path / "r.csv", header, rows)
    h, back = read_csv(path)
    assert h == header
    for row, orig in zip(back, rows):
        assert row[0] == orig[0]
        assert row[1:] == [float(v) for v in orig[1:]]
