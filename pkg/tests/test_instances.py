import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from valagg.instances import (
    AffineQuadraticSpec,
    ContractedMixing,
    LinearImitationSpec,
    Regularizer,
    StochasticInstance,
    StochasticWrapperSpec,
    WeightedRegularization,
    make_affine_quadratic,
    make_counterexample,
    make_linear_imitation,
    operator_norm,
    sample_cost,
)
from valagg.loop import LoopConfig, run
from valagg.problem import CapabilityError, DomainError, measure_constants


def test_counterexample_declared_constants():
    inst = make_counterexample(10.0)
    c = inst.constants
    assert (c.alpha, c.beta, c.theta, c.eps_tilde) == (2.0, 20.0, 10.0, 0.0)


def test_counterexample_theta_zero_ignores_first_argument():
    inst = make_counterexample(0.0)
    assert inst.constants.beta == 0.0
    assert inst.value([1.7], [0.5]) == inst.value([-1.0], [0.5]) == 0.25


def test_counterexample_performance():
    inst = make_counterexample(10.0)
    assert inst.J([1.0]) == 81.0
    assert inst.performance([1.0]) == 81.0


def test_counterexample_rejects_negative_theta():
    with pytest.raises(ValueError):
        make_counterexample(-0.1)


@given(st.integers(0, 1000))
@settings(max_examples=30, deadline=None)
def test_operator_norm_matches_singular_value(seed):
    M = np.random.default_rng(seed).standard_normal((4, 4))
    assert operator_norm(M) == pytest.approx(np.linalg.norm(M, 2), rel=1e-10)


def test_affine_scaled_identity_theta():
    assert make_affine_quadratic(AffineQuadraticSpec(0.8 * np.eye(3))).constants.theta == pytest.approx(0.8, abs=1e-12)


def test_affine_nilpotent_theta():
    inst = make_affine_quadratic(AffineQuadraticSpec(np.array([[0.0, 0.9], [0.0, 0.0]])))
    assert inst.constants.theta == pytest.approx(0.9, abs=1e-12)


def test_affine_minimizer_is_shifted_target():
    M = np.array([[0.2, 0.1], [0.0, 0.3]])
    b = np.array([0.5, -0.25])
    inst = make_affine_quadratic(AffineQuadraticSpec(M, b))
    y = np.array([0.4, -1.0])
    np.testing.assert_allclose(inst.quadratic(y).minimizer(), M @ y + b, atol=1e-15)
    assert inst.value(y, M @ y + b) == 0.0


def test_affine_rejects_non_square():
    with pytest.raises(ValueError):
        make_affine_quadratic(AffineQuadraticSpec(np.ones((2, 3))))


def test_affine_iterates_approach_fixed_point():
    M = 0.6 * np.array([[0.8, 0.6], [-0.6, 0.8]])
    b = np.array([0.3, -0.4])
    inst = make_affine_quadratic(AffineQuadraticSpec(M, b))
    target = np.linalg.solve(np.eye(2) - M, b)
    errs = [np.linalg.norm(run(inst, LoopConfig(N, [1.0, 1.0])).next_iterate - target) for N in (100, 1000, 10000)]
    assert errs[0] > errs[1] > errs[2]
    # distance decays like N^(theta-1) = N^-0.4
    assert errs[2] < errs[0] / 4


def test_imitation_single_step_has_no_shift():
    inst = make_linear_imitation(LinearImitationSpec(0.7, 0.4, 0.2, sigma0_sq=2.0, T=1))
    assert inst.constants.theta == 0.0
    for y in (-0.5, 0.9):
        assert inst.value([y], [0.5]) == pytest.approx(2.0 * 0.3 ** 2)


def test_imitation_two_step_closed_form():
    inst = make_linear_imitation(LinearImitationSpec(0.0, 1.0, 0.0, sigma0_sq=1.0, T=2))
    for y, x in [(0.5, 0.3), (-1.2, 0.7), (2.0, -1.0)]:
        if inst.reference_box.contains([y]):
            assert inst.value([y], [x]) == pytest.approx((1 + y * y) * x * x, rel=1e-14)


def test_imitation_expert_gain_is_optimal_everywhere():
    inst = make_linear_imitation(LinearImitationSpec(0.5, 0.3, -0.5, T=4, gain_box=(-1, 1)))
    for y in np.linspace(-1, 1, 11):
        assert inst.value([y], [-0.5]) == 0.0


def test_imitation_invalid_box():
    with pytest.raises(DomainError):
        make_linear_imitation(LinearImitationSpec(0.5, 0.3, 0.0, gain_box=(1.0, -1.0)))


@given(st.floats(-2, 2), st.floats(-1.5, 1.5), st.floats(-1, 1), st.integers(1, 6))
@settings(max_examples=80, deadline=None)
def test_imitation_moments_nonnegative_and_curvature_bounded(a, a_b, y, T):
    # moments vanish only after a deadbeat step (a + a_b y = 0)
    inst = make_linear_imitation(LinearImitationSpec(a, a_b, 0.0, sigma0_sq=1.5, T=T))
    m = inst.moments([y])
    assert m[0] == 1.5 and np.all(m >= 0)
    if abs(a + a_b * y) > 1e-3:
        assert np.all(m > 0)
    assert inst.strong_convexity_at([y]) >= 2 * 1.5 - 1e-12


@pytest.mark.parametrize("spec", [LinearImitationSpec(0.5, 0.3, -0.5, T=3, gain_box=(-0.5, 0.5)),
                                  LinearImitationSpec(1.2, 1.0, -1.2, T=3, gain_box=(-1.5, -0.5))])
def test_imitation_declared_constants_dominate_measurements(spec):
    inst = make_linear_imitation(spec)
    m = measure_constants(inst)
    c = inst.constants
    assert m.beta <= c.beta * (1 + 1e-9)
    assert m.beta >= 0.95 * c.beta
    assert m.g2 <= c.g2 * (1 + 1e-9)
    assert m.alpha >= c.alpha * (1 - 1e-9)


def test_contracted_mixing_scales_beta():
    base = make_counterexample(1.5)
    mixed = ContractedMixing(base, 0.5)
    assert mixed.constants.beta == pytest.approx((1 - 0.5 ** 2) * base.constants.beta)
    assert mixed.performance([0.3]) == base.performance([0.3])
    m = measure_constants(mixed)
    assert m.beta == pytest.approx(mixed.constants.beta, rel=1e-6)


def test_imitation_mixing_is_native_and_not_repeatable():
    inst = make_linear_imitation(LinearImitationSpec(1.2, 1.0, -1.2, T=3, gain_box=(-1.5, -0.5)))
    mixed = inst.mixed(0.5)
    assert mixed.constants.beta <= (1 - 0.5 ** 3) * inst.constants.beta
    with pytest.raises(CapabilityError):
        mixed.mixed(0.5)


def test_weighted_regularization_constants():
    base = make_counterexample(1.5)
    reg = Regularizer.squared_distance(2.0, [0.0])
    w = WeightedRegularization(base, 2.0, reg)
    assert w.constants.alpha == 6.0 and w.constants.beta == 3.0
    assert w.constants.theta == 0.5
    # sup_y min_x (x - 1.5 y)^2 + 2 x^2 over |y| <= 2: 9 * 2/3
    assert w.constants.eps_tilde == pytest.approx(6.0)
    assert Regularizer.expert_cost(base).nonnegative is False


def test_stochastic_zero_noise_equals_exact_cost():
    base = make_counterexample(0.5)
    st0 = StochasticInstance(base, StochasticWrapperSpec("uniform", 0.0))
    g, f = sample_cost(st0, [0.8], 7, seed=3), base.freeze([0.8])
    for x in (-1.0, 0.2, 1.5):
        assert g.value([x]) == pytest.approx(f.value([x]), abs=1e-15)
    assert g.sample_count == 7


def test_stochastic_requires_stochastic_instance():
    with pytest.raises(CapabilityError):
        sample_cost(make_counterexample(0.5), [0.0], 5, 0)


def test_gaussian_noise_needs_unchecked_flag():
    with pytest.raises(ValueError):
        StochasticInstance(make_counterexample(0.5), StochasticWrapperSpec("gaussian", 1.0))
    StochasticInstance(make_counterexample(0.5), StochasticWrapperSpec("gaussian", 1.0, unchecked=True))


def test_different_seeds_give_different_costs():
    inst = StochasticInstance(make_counterexample(0.5))
    assert sample_cost(inst, [0.3], 10, 1).value([0.1]) != sample_cost(inst, [0.3], 10, 2).value([0.1])


@pytest.mark.parametrize("noise", ["uniform", "scaled_bernoulli"])
def test_sampled_gradient_is_unbiased(noise):
    inst = StochasticInstance(make_counterexample(0.5), StochasticWrapperSpec(noise, 1.0))
    count = 100_000
    g = sample_cost(inst, [0.7], count, 11).gradient([0.2])
    exact = inst.grad2([0.7], [0.2])
    # gradient noise is -alpha * mean(w); sd of w is at most sigma
    assert abs(g[0] - exact[0]) <= 3 * 2.0 * 1.0 / np.sqrt(count)


def test_sampled_gradient_concentrates_over_seeds():
    inst = StochasticInstance(make_counterexample(0.5), StochasticWrapperSpec("uniform", 1.0))
    exact = inst.grad2([0.0], [0.0])
    hits = sum(abs(sample_cost(inst, [0.0], 100_000, s).gradient([0.0])[0] - exact[0]) <= 0.05 for s in range(200))
    assert hits / 200 >= 0.99


def test_stochastic_g2_accounts_for_noise():
    base = make_counterexample(0.5)
    inst = StochasticInstance(base, StochasticWrapperSpec("uniform", 0.5))
    assert inst.constants.g2 == pytest.approx(base.constants.g2 + 2.0 * 0.5)
