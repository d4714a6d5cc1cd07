"""The value-aggregation iteration: freeze the cost at the current policy,
follow the leader, record."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ftl import CostAggregate, ftl_step
from .instances import Regularizer, WeightedRegularization
from .problem import (
    CapabilityError,
    PerRoundCost,
    ProblemInstance,
    StructuralConstants,
    as_point,
)

DETERMINISTIC = "deterministic"
STOCHASTIC = "stochastic"


@dataclass(frozen=True)
class SamplingSchedule:
    """``m_n = ceil(m0 * n^r)`` samples in round ``n``."""

    m0: int
    r: float = 0.0
    noise_seed: int = 0

    def __post_init__(self):
        if self.m0 < 1:
            raise ValueError("m0 must be a positive integer")
        if self.r < 0:
            raise ValueError("r must be nonnegative")

    def count(self, n: int) -> int:
        # round before ceil so that e.g. 3 * 2.0**1 never becomes 7
        return max(1, math.ceil(round(self.m0 * float(n) ** self.r, 9)))


@dataclass(frozen=True)
class CostTransformer:
    kind: str
    mixing_q: float = 0.0
    lam: float = 0.0
    regularizer: Regularizer | None = None
    r_nonneg: bool = True

    def __post_init__(self):
        if self.kind not in ("mixing", "weighted_regularization"):
            raise ValueError(f"unknown transformer kind {self.kind!r}")
        if self.kind == "mixing" and not 0.0 <= self.mixing_q <= 1.0:
            raise ValueError("mixing rate q must lie in [0, 1]")
        if self.kind == "weighted_regularization":
            if self.lam < 0:
                raise ValueError("lambda must be nonnegative")
            if self.regularizer is None:
                raise ValueError("weighted regularization needs a regularizer")

    @classmethod
    def mixing(cls, q: float) -> "CostTransformer":
        return cls("mixing", mixing_q=q)

    @classmethod
    def weighted(cls, lam: float, regularizer: Regularizer) -> "CostTransformer":
        return cls("weighted_regularization", lam=lam, regularizer=regularizer,
                   r_nonneg=regularizer.nonnegative)

    def describe(self) -> dict:
        if self.kind == "mixing":
            return {"kind": self.kind, "q": self.mixing_q}
        return {"kind": self.kind, "lambda": self.lam, "regularizer": self.regularizer.label,
                "r_nonneg": self.r_nonneg}


@dataclass(frozen=True)
class LoopConfig:
    iterations: int
    x1: np.ndarray
    variant: str = DETERMINISTIC
    sampling: SamplingSchedule | None = None
    transformer: CostTransformer | None = None
    tol_inner: float = 1e-10
    abort_magnitude: float = 1e100

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if self.variant not in (DETERMINISTIC, STOCHASTIC):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant == STOCHASTIC and self.sampling is None:
            raise ValueError("the stochastic variant needs a sampling schedule")
        object.__setattr__(self, "x1", as_point(self.x1))


@dataclass(frozen=True, eq=False)
class RunTrace:
    """Everything a run produced.  Index ``i`` of each per-round array refers to
    round ``n = i + 1``.

    ``self_values`` is ``F(x_n, x_n)`` of the problem that was run (after any
    transformer); ``base_values`` is the untransformed ``F(x_n, x_n)``.
    ``step_norms[i] = |x_{n+1} - x_n|`` uses ``next_iterate`` for the last
    round.  ``leader_values[i] = f_{1:n}(x_{n+1})``.
    """

    iterates: np.ndarray
    per_round_values: np.ndarray
    self_values: np.ndarray
    base_values: np.ndarray
    step_norms: np.ndarray
    s_values: np.ndarray
    grad_norms: np.ndarray
    leader_values: np.ndarray
    sample_counts: np.ndarray
    next_iterate: np.ndarray | None
    best_index: int
    aborted: bool
    abort_reason: str
    effective_constants: StructuralConstants
    transformer: CostTransformer | None = None
    costs: tuple[PerRoundCost, ...] = field(default=(), repr=False)
    instance_info: dict = field(default_factory=dict)
    horizon: int = 1

    @property
    def n_rounds(self) -> int:
        return len(self.iterates)

    @property
    def final_value(self) -> float:
        return float(self.self_values[-1])


def s_sequence(iterates) -> np.ndarray:
    """``S_n`` for every ``n`` (``nan`` at ``n = 1``), computed in blocks."""
    X = np.asarray(iterates, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    N = len(X)
    out = np.full(N, np.nan)
    for i in range(1, N):
        out[i] = np.sqrt(((X[:i] - X[i]) ** 2).sum(axis=1)).sum() / i
    return out


def apply_transformer(instance: ProblemInstance, transformer: CostTransformer) -> ProblemInstance:
    if transformer.kind == "mixing":
        return instance.mixed(transformer.mixing_q)
    return WeightedRegularization(instance, transformer.lam, transformer.regularizer)


def _run(instance: ProblemInstance, config: LoopConfig, sampler) -> RunTrace:
    problem = instance
    if config.transformer is not None:
        problem = apply_transformer(instance, config.transformer)
    d = problem.dimension
    x = as_point(config.x1, d)
    domain = problem.domain
    N = config.iterations

    iterates = []
    per_round, selfv, basev, gnorm, leader, counts = [], [], [], [], [], []
    costs = []
    agg = CostAggregate.empty()
    aborted, reason = False, ""
    next_iterate = None
    for n in range(1, N + 1):
        iterates.append(x)
        cost = sampler(problem, x, n)
        costs.append(cost)
        per_round.append(cost.value(x))
        gnorm.append(float(np.linalg.norm(cost.gradient(x))))
        selfv.append(problem.value(x, x))
        basev.append(problem.performance(x))
        counts.append(cost.sample_count)
        agg = agg.extend(cost)
        rep = ftl_step(agg, domain, warm_start=x, tol_inner=config.tol_inner)
        leader.append(rep.value)
        x_new = rep.minimizer
        if not np.all(np.isfinite(x_new)) or np.max(np.abs(x_new)) > config.abort_magnitude:
            aborted = True
            reason = (f"|x_{n + 1}| exceeded {config.abort_magnitude:g} after round {n}"
                      if np.all(np.isfinite(x_new)) else f"non-finite iterate after round {n}")
            break
        x = x_new
        next_iterate = x_new

    X = np.array(iterates)
    steps = np.full(len(X), np.nan)
    if len(X) > 1:
        steps[:-1] = np.linalg.norm(np.diff(X, axis=0), axis=1)
    if next_iterate is not None and not aborted:
        steps[-1] = float(np.linalg.norm(next_iterate - X[-1]))
    else:
        next_iterate = None
    self_values = np.array(selfv)
    info = problem.describe()
    return RunTrace(
        iterates=X,
        per_round_values=np.array(per_round),
        self_values=self_values,
        base_values=np.array(basev),
        step_norms=steps,
        s_values=s_sequence(X),
        grad_norms=np.array(gnorm),
        leader_values=np.array(leader),
        sample_counts=np.array(counts, dtype=int),
        next_iterate=next_iterate,
        best_index=int(np.argmin(self_values)) + 1,
        aborted=aborted,
        abort_reason=reason,
        effective_constants=problem.constants,
        transformer=config.transformer,
        costs=tuple(costs),
        instance_info=info,
        horizon=problem.horizon,
    )


def run_deterministic(instance: ProblemInstance, config: LoopConfig) -> RunTrace:
    """FTL on exact per-round costs ``f_n = F(x_n, .)``.

    Runs that leave ``|x| <= abort_magnitude`` stop early with ``aborted`` set
    and a trace of the prefix.
    """
    if config.variant != DETERMINISTIC:
        raise ValueError("run_deterministic needs variant='deterministic'")
    return _run(instance, config, lambda problem, x, n: problem.freeze(x))


def run_stochastic(instance: ProblemInstance, config: LoopConfig) -> RunTrace:
    """FTL on finite-sample costs ``g_n`` built from ``m_n`` fresh samples.

    Round ``n`` draws from ``default_rng([noise_seed, n])`` so traces are
    reproducible and rounds are independent of each other.
    """
    if config.variant != STOCHASTIC:
        raise ValueError("run_stochastic needs variant='stochastic'")
    if not instance.stochastic:
        raise CapabilityError("sampling", instance)
    sched = config.sampling

    def sampler(problem, x, n):
        return problem.sample_cost(x, sched.count(n), [sched.noise_seed, n])

    if config.transformer is not None:
        # transformers wrap the sampled instance, so forward sampling through them
        raise CapabilityError("transformers on stochastic runs", instance)
    return _run(instance, config, sampler)


def run(instance: ProblemInstance, config: LoopConfig) -> RunTrace:
    if config.variant == STOCHASTIC:
        return run_stochastic(instance, config)
    return run_deterministic(instance, config)


def select_best(trace: RunTrace) -> tuple[int, float]:
    """1-based index of ``argmin_n F(x_n, x_n)`` (earliest on ties) and its value."""
    if trace.n_rounds == 0:
        raise ValueError("empty trace")
    i = int(np.argmin(trace.self_values))
    return i + 1, float(trace.self_values[i])


__all__ = [
    "CostTransformer",
    "LoopConfig",
    "RunTrace",
    "SamplingSchedule",
    "apply_transformer",
    "run",
    "run_deterministic",
    "run_stochastic",
    "s_sequence",
    "select_best",
]
