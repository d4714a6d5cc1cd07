"""Follow-the-Leader: minimize the running sum of per-round costs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .problem import Domain, DomainError, PerRoundCost, QuadraticForm, as_point

CLOSED_FORM = "closed_form_quadratic"
PROJECTED_GRADIENT = "projected_gradient"


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class CostAggregate:
    """Immutable sum ``f_{1:n}`` of per-round costs.

    The quadratic part is summed once at construction so that extending an
    aggregate by one cost is O(d^2) rather than O(n).
    """

    costs: tuple[PerRoundCost, ...]
    total_strong_convexity: float
    total_smoothness: float
    quadratic: QuadraticForm | None

    @classmethod
    def from_costs(cls, costs: Iterable[PerRoundCost]) -> "CostAggregate":
        agg = cls.empty()
        for c in costs:
            agg = agg.extend(c)
        return agg

    @classmethod
    def empty(cls) -> "CostAggregate":
        return cls((), 0.0, 0.0, None)

    def extend(self, cost: PerRoundCost) -> "CostAggregate":
        if not cost.strong_convexity > 0:
            raise ValueError("per-round costs must be strongly convex (modulus > 0)")
        if self.costs and cost.quadratic is not None and self.quadratic is not None:
            quad = self.quadratic + cost.quadratic
        elif not self.costs:
            quad = cost.quadratic
        else:
            quad = None
        return CostAggregate(self.costs + (cost,), self.total_strong_convexity + cost.strong_convexity,
                             self.total_smoothness + cost.smoothness, quad)

    def __len__(self) -> int:
        return len(self.costs)

    @property
    def all_quadratic(self) -> bool:
        return self.quadratic is not None

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if self.quadratic is not None:
            return self.quadratic.value(x)
        return float(sum(c.value(x) for c in self.costs))

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.quadratic is not None:
            return self.quadratic.gradient(x)
        return np.sum([c.gradient(x) for c in self.costs], axis=0)


@dataclass(frozen=True)
class SolveReport:
    minimizer: np.ndarray
    value: float
    inner_iterations: int
    gradient_norm: float
    method: str


def _gradient_mapping(agg: CostAggregate, domain: Domain, x: np.ndarray, step: float) -> np.ndarray:
    g = agg.gradient(x)
    return (x - domain.project(x - step * g)) / step


def ftl_step(aggregate: CostAggregate, domain: Domain, warm_start=None, tol_inner: float = 1e-10,
             method: str | None = None, max_iter: int = 200_000) -> SolveReport:
    """Return ``argmin_{x in domain} f_{1:n}(x)``.

    All-quadratic aggregates are solved in closed form when the unconstrained
    minimizer is feasible; otherwise (or with ``method="projected_gradient"``)
    projected gradient with step ``1/L`` runs until the gradient-mapping norm
    is at most ``tol_inner`` (floored at the rounding level of ``L |x|``).
    """
    if len(aggregate) == 0:
        raise ValueError("cannot minimize an empty aggregate")
    if method not in (None, CLOSED_FORM, PROJECTED_GRADIENT):
        raise ValueError(f"unknown method {method!r}")
    if warm_start is None:
        warm_start = domain.project(aggregate.costs[-1].anchor)
    x0 = as_point(warm_start, domain.dimension)
    if not np.isfinite(aggregate.value(x0)):
        raise DomainError(f"aggregate is not finite at warm start {x0}")

    if method != PROJECTED_GRADIENT and aggregate.all_quadratic:
        x = aggregate.quadratic.minimizer()
        if domain.unconstrained or domain.contains(x):
            g = aggregate.quadratic.gradient(x)
            return SolveReport(x, aggregate.value(x), 0, float(np.linalg.norm(g)), CLOSED_FORM)
        x0 = domain.project(x)
    elif method == CLOSED_FORM:
        raise ValueError("closed-form solve requested for a non-quadratic aggregate")

    L = aggregate.total_smoothness
    step = 1.0 / L
    x = domain.project(x0)
    eps = np.finfo(float).eps
    for it in range(1, max_iter + 1):
        x_new = domain.project(x - step * aggregate.gradient(x))
        resid = float(np.linalg.norm(x - x_new)) * L
        x = x_new
        floor = 64 * eps * L * max(1.0, float(np.linalg.norm(x)))
        if resid <= max(tol_inner, floor):
            break
    else:
        raise SolverError(f"projected gradient did not reach tol {tol_inner} in {max_iter} iterations")
    gm = float(np.linalg.norm(_gradient_mapping(aggregate, domain, x, step)))
    return SolveReport(x, aggregate.value(x), it, gm, PROJECTED_GRADIENT)


def regret(trace_costs: Sequence[PerRoundCost], iterates, domain: Domain) -> float:
    """Average regret ``(1/N)[sum f_n(x_n) - min_x f_{1:N}(x)]``."""
    iterates = np.asarray(iterates, dtype=float)
    if iterates.ndim == 1:
        iterates = iterates[:, None]
    if len(trace_costs) != len(iterates):
        raise ValueError(f"{len(trace_costs)} costs but {len(iterates)} iterates")
    if len(trace_costs) == 0:
        raise ValueError("regret of an empty sequence")
    played = sum(c.value(x) for c, x in zip(trace_costs, iterates))
    agg = CostAggregate.from_costs(trace_costs)
    best = ftl_step(agg, domain, warm_start=domain.project(iterates[-1])).value
    return (played - best) / len(trace_costs)
