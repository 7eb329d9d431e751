import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_apparatus
from polalign.metrics import sigma_model
from polalign.optics import EpcSettings, aligned_settings
from polalign.optimizer import (
    GradientMode,
    OptimizerConfig,
    analytic_cost,
    analytic_report,
    estimate_gradient,
    evaluate_cost,
    maximize_analytic,
    run_alignment,
)
from polalign.quantum import BellKind, random_su2


def central_gradient(f, x, h=1e-6):
    g = np.empty(x.size)
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def fd(f):
    return lambda x, k: f(x)


def test_schedule_default_thirds():
    steps = np.rad2deg(OptimizerConfig(max_iterations=10).steps_rad())
    np.testing.assert_allclose(steps, [10] * 3 + [5] * 3 + [1] * 4)


def test_schedule_explicit_and_padding():
    steps = np.rad2deg(OptimizerConfig(max_iterations=5, step_schedule=[(4, 2), (2, 1)]).steps_rad())
    np.testing.assert_allclose(steps, [4, 4, 2, 2, 2])


@pytest.mark.parametrize(
    "kw",
    [{"max_iterations": 0}, {"window_duration": 0}, {"learning_rate": -1}, {"step_schedule": [(0, 5)]}, {"trials_per_eval": 0}],
)
def test_config_rejects(kw):
    with pytest.raises(ValueError):
        OptimizerConfig(**kw)


def test_evaluate_cost_sampled_ideal(ideal):
    config, epc = ideal
    report, trials = evaluate_cost(config, epc, OptimizerConfig(trials_per_eval=100), seed=5)
    assert trials == 100
    assert report.h_total >= 15.3


def test_evaluate_cost_analytic(ideal):
    config, epc = ideal
    report, trials = evaluate_cost(config, epc, OptimizerConfig(analytic=True), seed=0)
    assert trials == 1
    assert report.h_total == pytest.approx(16.0, abs=1e-12)


def test_evaluate_cost_deterministic(ideal):
    config, epc = ideal
    opt = OptimizerConfig(trials_per_eval=3)
    a, _ = evaluate_cost(config, epc, opt, seed=(1, 2, 3))
    b, _ = evaluate_cost(config, epc, opt, seed=(1, 2, 3))
    assert a.h_total == b.h_total
    assert a.qber == b.qber


def test_evaluate_cost_no_same_basis_fails():
    config = make_apparatus(pair_rate=0.0)
    with pytest.raises(ValueError):
        evaluate_cost(config, aligned_settings(config), OptimizerConfig(trials_per_eval=2), seed=0)


@given(st.floats(0.0, 16.0), st.integers(1, 60))
@settings(max_examples=30, deadline=None)
def test_adaptive_trials_bounded(previous_h, cap):
    config = make_apparatus()
    opt = OptimizerConfig(adaptive_trials=True, target_sem=1e-4, max_trials=cap)
    _, trials = evaluate_cost(config, aligned_settings(config), opt, seed=0, previous_h=previous_h)
    assert 1 <= trials <= cap


def second_derivatives(f, x, h=1e-4):
    out = np.empty(x.size)
    f0 = f(x)
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h
        out[i] = (f(x + e) - 2 * f0 + f(x - e)) / h**2
    return out


def test_forward_matches_central():
    config = make_apparatus(seed=3, visibility=0.98)
    f = analytic_cost(config)
    rng = np.random.default_rng(0)
    rel = []
    for _ in range(5):
        x = rng.uniform(0, 2 * np.pi, 12)
        fwd = estimate_gradient(fd(f), x, 1e-5, GradientMode.COORDINATE_FORWARD_DIFFERENCE, 0)
        ref = central_gradient(f, x)
        # the one-sided error is the curvature term step * f'' / 2, up to higher orders
        bound = 1e-5 * np.abs(second_derivatives(f, x)) / 2
        assert (np.abs(fwd - ref) <= 1.05 * bound + 1e-8).all()
        big = np.abs(ref) > 1e-6
        rel.extend(np.abs(fwd - ref)[big] / np.abs(ref)[big])
    assert np.median(rel) <= 1e-3


def test_stationary_at_maximum():
    # V < 1 keeps the maximum smooth; at V = 1 the entropy has a p log p cusp there
    config = make_apparatus(seed=4, visibility=0.98)
    f = analytic_cost(config)
    x = aligned_settings(config).vector
    assert f(x) == pytest.approx(8 * (1 - 0.0807931358959112) + 8, abs=1e-9)
    assert np.linalg.norm(central_gradient(f, x, 1e-5)) <= 1e-6
    # a one-sided difference carries an O(step) curvature term even at the maximum
    fwd = estimate_gradient(fd(f), x, 1e-5, GradientMode.COORDINATE_FORWARD_DIFFERENCE, 0)
    np.testing.assert_allclose(fwd, 1e-5 * second_derivatives(f, x) / 2, rtol=0.05, atol=1e-8)
    assert (fwd <= 1e-9).all()


def _sp_estimates(f, x, step, deltas):
    h0 = f(x)
    return np.array([(f(x + step * d) - h0) / (step * d) for d in deltas])


def test_simultaneous_perturbation_unbiased_exhaustive():
    config = make_apparatus(seed=3, visibility=0.98)
    f = analytic_cost(config)
    x = np.random.default_rng(1).uniform(0, 2 * np.pi, 12)
    # all 2^12 sign vectors: averaging cancels every off-diagonal cross term exactly
    deltas = 1.0 - 2.0 * ((np.arange(4096)[:, None] >> np.arange(12)) & 1)
    mean = _sp_estimates(f, x, 1e-4, deltas).mean(axis=0)
    ref = central_gradient(f, x)
    big = np.abs(ref) > 0.01 * np.linalg.norm(ref)
    np.testing.assert_allclose(mean[big], ref[big], rtol=0.05)


def test_simultaneous_perturbation_sampled_signs():
    config = make_apparatus(seed=3, visibility=0.98)
    f = analytic_cost(config)
    x = np.random.default_rng(1).uniform(0, 2 * np.pi, 12)
    deltas = np.random.default_rng(2).choice((-1.0, 1.0), size=(1000, 12))
    est = _sp_estimates(f, x, 1e-4, deltas)
    ref = central_gradient(f, x)
    sem = est.std(axis=0, ddof=1) / np.sqrt(len(est))
    assert (np.abs(est.mean(axis=0) - ref) <= 4 * sem + 1e-6).all()


def test_estimate_gradient_sp_single_extra_evaluation():
    calls = []

    def cost(x, k):
        calls.append(k)
        return float(np.sum(np.sin(x)))

    estimate_gradient(cost, np.zeros(12), 0.1, GradientMode.SIMULTANEOUS_PERTURBATION, 0, h0=0.0)
    assert calls == [1]
    calls.clear()
    estimate_gradient(cost, np.zeros(12), 0.1, GradientMode.COORDINATE_FORWARD_DIFFERENCE, 0, h0=0.0)
    assert calls == list(range(1, 13))


def test_estimate_gradient_rejects_step():
    with pytest.raises(ValueError):
        estimate_gradient(lambda x, k: 0.0, np.zeros(12), 0.0, GradientMode.SIMULTANEOUS_PERTURBATION, 0)


def _aligned_run(seed, step_deg, trials=5):
    config = make_apparatus()
    opt = OptimizerConfig(
        max_iterations=50,
        step_schedule=[(step_deg, 50)],
        trials_per_eval=trials,
        initial_angles=aligned_settings(config).vector,
        seed=seed,
    )
    return config, run_alignment(config, opt)


@pytest.mark.parametrize("seed", range(4))
def test_stability_no_divergence(seed):
    config, trace = _aligned_run(seed, 1.0)
    assert len(trace) == 50
    assert analytic_report(config, trace[-1].angles).h_total >= 15.0
    assert min(e.h_total for e in trace) >= 14.0


@pytest.mark.xfail(strict=True, reason="fixed-size normalized steps random-walk around the maximum; see README")
def test_stability_three_sigma_band():
    drops = []
    for seed in range(4):
        _, trace = _aligned_run(seed, 1.0)
        h = np.array([e.h_total for e in trace])
        drops.append(h[0] - h.min() <= 3 * sigma_model(h[0]))
    assert all(drops)


def test_analytic_ascent_monotone():
    config = make_apparatus(seed=2, visibility=0.98)
    trace = run_alignment(config, OptimizerConfig(max_iterations=80, analytic=True, seed=2))
    h = np.array([e.h_total for e in trace])
    assert (np.diff(h) >= -1e-12).all()
    assert h[-1] > h[0]


def test_analytic_alignment_reaches_oracle():
    config = make_apparatus(seed=4, visibility=0.98)
    _, h_max = maximize_analytic(config, starts=[aligned_settings(config).vector], random_starts=0)
    assert h_max == pytest.approx(8 * (1 - 0.0807931358959112) + 8, abs=1e-6)
    trace = run_alignment(config, OptimizerConfig(max_iterations=500, analytic=True, seed=4))
    final = trace[-1]
    assert final.h_total >= h_max - 0.05
    assert min(final.qber.values()) <= 0.015


def test_trace_fields_and_determinism():
    config = make_apparatus(seed=7)
    opt = OptimizerConfig(max_iterations=12, trials_per_eval=2, seed=11)
    a = run_alignment(config, opt)
    b = run_alignment(config, opt)
    assert len(a) == 12
    for x, y in zip(a, b):
        assert x.h_total == y.h_total
        np.testing.assert_array_equal(x.angles.vector, y.angles.vector)
        assert x.h_total == pytest.approx(x.h_a + x.h_b, abs=1e-9)
    windows = [e.wall_windows for e in a]
    assert windows[0] == 2 and all(np.diff(windows) > 0)


def test_h_target_stops_early(ideal):
    config, epc = ideal
    opt = OptimizerConfig(max_iterations=100, analytic=True, h_target=15.9, patience=3, initial_angles=epc.vector)
    assert len(run_alignment(config, opt)) == 3


@given(st.integers(0, 11), st.integers(-3, 3))
@settings(max_examples=25, deadline=None)
def test_pi_shift_invariance(index, turns):
    config = make_apparatus(seed=5, visibility=0.9)
    f = analytic_cost(config)
    x = np.random.default_rng(index).uniform(0, 2 * np.pi, 12)
    y = x.copy()
    y[index] += turns * np.pi
    assert f(y) == pytest.approx(f(x), abs=1e-9)


def test_singlet_common_prefiber_rotation():
    rng = np.random.default_rng(8)
    fibers = [random_su2(rng) for _ in range(4)]
    base = make_apparatus(source=BellKind.PSI_MINUS, fiber_unitary=fibers)
    xs = rng.uniform(0, 2 * np.pi, (5, 12))
    for _ in range(10):
        u = random_su2(rng)
        rotated = make_apparatus(source=BellKind.PSI_MINUS, fiber_unitary=fibers, pre_split_unitary=[u, u])
        for x in xs:
            assert analytic_cost(rotated)(x) == pytest.approx(analytic_cost(base)(x), abs=1e-9)


def test_callback_receives_every_entry(ideal):
    config, epc = ideal
    seen = []
    trace = run_alignment(config, OptimizerConfig(max_iterations=4, analytic=True), callback=seen.append)
    assert seen == trace
