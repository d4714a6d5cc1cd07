import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from valagg.ftl import CLOSED_FORM, PROJECTED_GRADIENT, CostAggregate, ftl_step, regret
from valagg.instances import make_counterexample
from valagg.problem import Domain, PerRoundCost, QuadraticForm


def quad_cost(P, c):
    """0.5 (x - c)' P (x - c) as a per-round cost."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    c = np.atleast_1d(np.asarray(c, dtype=float))
    form = QuadraticForm(P, -P @ c, 0.5 * float(c @ P @ c))
    return PerRoundCost(c, float(np.linalg.eigvalsh(P)[0]), quadratic=form)


def test_empty_aggregate_rejected():
    with pytest.raises(ValueError):
        ftl_step(CostAggregate.empty(), Domain.box(-1, 1))


def test_closed_form_is_weighted_mean():
    agg = CostAggregate.from_costs([quad_cost([[1.0]], 0.0), quad_cost([[3.0]], 4.0)])
    rep = ftl_step(agg, Domain(1))
    assert rep.method == CLOSED_FORM
    assert rep.minimizer[0] == pytest.approx(3.0)


def test_projected_solution_on_box_boundary():
    agg = CostAggregate.from_costs([quad_cost(np.eye(2), [3.0, -0.5])])
    rep = ftl_step(agg, Domain.box(-1, 1, dimension=2))
    assert rep.method == PROJECTED_GRADIENT
    np.testing.assert_allclose(rep.minimizer, [1.0, -0.5], atol=1e-10)


def test_non_quadratic_cost_uses_iterations():
    c = PerRoundCost(np.zeros(1), 2.0, fn=lambda x: float(np.sum((x - 1) ** 2 + 0.1 * (x - 1) ** 4)),
                     grad=lambda x: 2 * (x - 1) + 0.4 * (x - 1) ** 3, smoothness=20.0)
    rep = ftl_step(CostAggregate.from_costs([c]), Domain.box(-2, 2))
    assert rep.minimizer[0] == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        ftl_step(CostAggregate.from_costs([c]), Domain.box(-2, 2), method=CLOSED_FORM)


def test_counterexample_recursion_matches_ftl():
    # x_{n+1} = (1 - (1 - theta)/n) x_n, computed independently of the library
    theta = 0.7
    inst = make_counterexample(theta)
    agg = CostAggregate.empty()
    x, ref = np.array([1.0]), 1.0
    for n in range(1, 60):
        agg = agg.extend(inst.freeze(x))
        x = ftl_step(agg, inst.domain).minimizer
        ref *= 1 - (1 - theta) / n
        assert x[0] == pytest.approx(ref, rel=1e-13)


mats = st.integers(0, 10_000)


@given(mats)
@settings(max_examples=40, deadline=None)
def test_closed_form_and_iterative_agree(seed):
    rng = np.random.default_rng(seed)
    costs = []
    for _ in range(5):
        A = rng.standard_normal((3, 3))
        costs.append(quad_cost(A @ A.T + np.eye(3), rng.uniform(-1, 1, 3)))
    agg = CostAggregate.from_costs(costs)
    a = ftl_step(agg, Domain(3))
    b = ftl_step(agg, Domain(3), method=PROJECTED_GRADIENT, tol_inner=1e-12)
    np.testing.assert_allclose(a.minimizer, b.minimizer, atol=1e-8)


@given(mats)
@settings(max_examples=60, deadline=None)
def test_adding_one_cost_moves_leader_by_at_most_gradient_over_modulus(seed):
    # adding f to an aggregate minimized at x moves the minimizer by <= |grad f(x)| / modulus(total)
    rng = np.random.default_rng(seed)
    costs = [quad_cost(np.diag(rng.uniform(1, 3, 2)), rng.uniform(-2, 2, 2)) for _ in range(int(rng.integers(1, 6)))]
    agg = CostAggregate.from_costs(costs)
    dom = Domain.box(-1, 1, dimension=2)
    x = ftl_step(agg, dom, tol_inner=1e-13).minimizer
    new = quad_cost(np.diag(rng.uniform(1, 3, 2)), rng.uniform(-2, 2, 2))
    agg2 = agg.extend(new)
    x2 = ftl_step(agg2, dom, tol_inner=1e-13).minimizer
    assert np.linalg.norm(x2 - x) <= np.linalg.norm(new.gradient(x)) / agg2.total_strong_convexity + 1e-9


def test_regret_of_constant_costs_is_zero_after_first_round():
    c = quad_cost([[2.0]], 1.0)
    # playing the minimizer every round incurs no regret
    assert regret([c, c, c], [[1.0], [1.0], [1.0]], Domain(1)) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        regret([c], [[1.0], [2.0]], Domain(1))
