import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from valagg.diagnostics import (
    BOUND_IDS,
    check_bounds,
    compute_S,
    compute_S_windowed,
    fit_rate,
    lower_envelope_shape,
    mean_policy_gap,
    path_length,
    step_tail_bound,
)
from valagg.instances import LinearImitationSpec, make_counterexample, make_linear_imitation
from valagg.loop import CostTransformer, LoopConfig, run
from valagg.problem import MissingConstantError, StructuralConstants


def test_compute_S_examples():
    assert compute_S([0.0, 1.0], 2) == 1.0
    assert compute_S([0.0, 1.0, 3.0], 3) == 2.5
    assert all(compute_S(np.ones((6, 2)), n) == 0 for n in range(2, 7))


def test_compute_S_windowed_examples():
    X = [0.0, 1.0, 3.0]
    assert compute_S_windowed(X, 2, 3) == 2.0
    assert compute_S_windowed(X, 1, 3) == compute_S(X, 3)
    assert compute_S_windowed([[0, 0], [3, 4]], 1, 2) == 5.0


@pytest.mark.parametrize("m,n", [(1, 1), (0, 2), (2, 2), (1, 4)])
def test_bad_windows(m, n):
    with pytest.raises(ValueError):
        compute_S_windowed([0.0, 1.0, 2.0], m, n)


@given(st.lists(st.floats(-10, 10), min_size=2, max_size=30))
def test_single_term_window_is_last_step(xs):
    n = len(xs)
    assert compute_S_windowed(xs, n - 1, n) == pytest.approx(abs(xs[-1] - xs[-2]))


@given(st.lists(st.lists(st.floats(-10, 10), min_size=2, max_size=2), min_size=2, max_size=25))
def test_mean_policy_gap_at_most_S(xs):
    X = np.array(xs)
    assert mean_policy_gap(X) <= compute_S(X, len(X)) + 1e-12


def test_step_bound_margins_match_direct_evaluation():
    theta = 0.5
    tr = run(make_counterexample(theta), LoopConfig(500, [1.0]))
    rec = check_bounds(tr, make_counterexample(theta).constants, "lemma3")[0]
    X = np.append(tr.iterates[:, 0], tr.next_iterate[0])
    direct = [theta * compute_S(X, n) / n - abs(X[n] - X[n - 1]) for n in range(2, 501)]
    np.testing.assert_allclose(rec.per_iterate_margin, direct, atol=1e-14)
    assert rec.passed and rec.per_iterate_margin.min() >= -1e-9


def test_constant_trace_passes_concentration_bound():
    tr = run(make_counterexample(1.0), LoopConfig(50, [1.0]))
    rec = check_bounds(tr, make_counterexample(1.0).constants, "prop2")[0]
    assert rec.passed
    np.testing.assert_array_equal(tr.s_values[1:], 0.0)


def test_lower_bound_on_divergent_counterexample():
    tr = run(make_counterexample(10.0), LoopConfig(60, [1.0]))
    rec = check_bounds(tr, make_counterexample(10.0).constants, "thm3_lower")[0]
    assert rec.passed and rec.detail["nondecreasing"] and rec.detail["c"] > 0


@given(st.floats(0.05, 0.99), st.integers(3, 400))
@settings(max_examples=60, deadline=None)
def test_lower_envelope_below_exact_recursion_convergent(theta, N):
    x = 1.0
    ratios = []
    for n in range(1, N):
        x *= 1 - (1 - theta) / n
        ratios.append(x)
    x2 = 1 - (1 - theta)
    # x_N^2 / x_2^2 >= ((N + theta - 2)/theta)^{2(theta - 1)}
    assert (x / x2) ** 2 >= lower_envelope_shape(theta, N) * (1 - 1e-12)


@given(st.floats(1.01, 12.0), st.integers(3, 300))
@settings(max_examples=60, deadline=None)
def test_lower_envelope_below_exact_recursion_divergent(theta, N):
    x = 1.0
    for n in range(1, N):
        x *= 1 - (1 - theta) / n
    assert (x / theta) ** 2 >= lower_envelope_shape(theta, N) * (1 - 1e-12)


def test_last_iterate_and_average_bounds_on_convergent_run():
    inst = make_counterexample(0.5)
    tr = run(inst, LoopConfig(300, [1.0]))
    recs = {r.bound_id: r for r in check_bounds(tr, inst.constants, ("thm1", "thm2", "perturbation"))}
    assert all(r.passed for r in recs.values())
    assert recs["thm1"].detail["eps_class"] >= 0


def test_last_iterate_bound_needs_complete_trace():
    tr = run(make_counterexample(10.0), LoopConfig(100, [1.0], abort_magnitude=1e4))
    with pytest.raises(ValueError):
        check_bounds(tr, make_counterexample(10.0).constants, "thm2")


def test_unknown_bound_id():
    tr = run(make_counterexample(0.5), LoopConfig(5, [1.0]))
    with pytest.raises(ValueError):
        check_bounds(tr, make_counterexample(0.5).constants, "thm9")
    assert "corollary3" in BOUND_IDS


def test_corollaries_name_missing_constants():
    inst = make_counterexample(1.5)
    tr = run(inst, LoopConfig(20, [1.0], transformer=CostTransformer.mixing(0.9)))
    with pytest.raises(MissingConstantError, match="base_constants"):
        check_bounds(tr, tr.effective_constants, "corollary2")
    no_m = StructuralConstants(alpha=2.0, beta=3.0, g2=10.0)
    with pytest.raises(MissingConstantError, match="value_bound"):
        check_bounds(tr, tr.effective_constants, "corollary2", base_constants=no_m)
    with pytest.raises(MissingConstantError, match="weighted_regularization"):
        check_bounds(tr, tr.effective_constants, "corollary3", base_constants=inst.constants)


def test_mixing_bound_on_imitation():
    im = make_linear_imitation(LinearImitationSpec(1.2, 1.0, -1.2, T=3, gain_box=(-1.5, -0.5)))
    tr = run(im, LoopConfig(50, [-0.5], transformer=CostTransformer.mixing(0.5)))
    rec = check_bounds(tr, tr.effective_constants, "corollary2", base_constants=im.constants)[0]
    assert rec.passed


def test_windowed_concentration_is_labelled_asymptotic():
    inst = make_counterexample(0.5)
    tr = run(inst, LoopConfig(2000, [1.0]))
    rec = check_bounds(tr, inst.constants, "corollary1")[0]
    assert rec.asymptotic and rec.passed and rec.detail["fitted_constant"] > 0


def test_corrupted_theta_breaks_step_bound():
    inst = make_counterexample(0.5)
    tr = run(inst, LoopConfig(100, [1.0]))
    bad = inst.constants.replace(beta=0.5 * inst.constants.beta)
    assert not check_bounds(tr, bad, "lemma3")[0].passed


def test_fit_rate_exact_power_law():
    n = np.arange(1, 5001)
    fit = fit_rate(3.0 * n ** -0.7, 0.0)
    assert fit.fitted_exponent == pytest.approx(-0.7, abs=1e-10)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert fit.fit_window == (50, 5000)


def test_fit_rate_convergent_counterexample():
    tr = run(make_counterexample(0.5), LoopConfig(10_000, [1.0]))
    fit = fit_rate(tr, 0.0, (100, 10_000))
    assert abs(fit.fitted_exponent + 1.0) <= 0.05
    assert fit.theoretical_exponent == -1.0
    assert fit.offset_used == 0.0


def test_fit_rate_divergent_counterexample():
    tr = run(make_counterexample(1.5), LoopConfig(5000, [1.0]))
    assert abs(fit_rate(tr, 0.0).fitted_exponent - 1.0) <= 0.05


def test_fit_rate_needs_positive_excess():
    with pytest.raises(ValueError):
        fit_rate(np.zeros(1000), 0.0)


def test_path_length_converges_for_convergent_theta():
    theta = 0.5
    N = 2000
    tr = run(make_counterexample(theta), LoopConfig(2 * N, [1.0]))
    s2 = tr.s_values[1]
    gap = path_length(tr, 2 * N) - path_length(tr, N)
    assert 0 <= gap <= step_tail_bound(theta, s2, N + 1, 2 * N + 1)


def test_record_summary_text():
    inst = make_counterexample(0.5)
    rec = check_bounds(run(inst, LoopConfig(10, [1.0])), inst.constants, "lemma3")[0]
    assert rec.summary().startswith("lemma3: PASS")
    assert math.isfinite(rec.worst_margin)
