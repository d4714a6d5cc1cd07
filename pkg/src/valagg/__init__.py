"""Follow-the-leader value aggregation with last-iterate convergence diagnostics."""

from .diagnostics import (
    BoundCheckRecord,
    RateFit,
    check_bounds,
    compute_S,
    compute_S_windowed,
    fit_rate,
    mean_policy_gap,
)
from .ftl import CostAggregate, SolveReport, ftl_step, regret
from .instances import (
    AffineQuadraticSpec,
    CounterexampleSpec,
    LinearImitationSpec,
    Regularizer,
    StochasticInstance,
    StochasticWrapperSpec,
    make_affine_quadratic,
    make_counterexample,
    make_linear_imitation,
    operator_norm,
    sample_cost,
)
from .loop import (
    CostTransformer,
    LoopConfig,
    RunTrace,
    SamplingSchedule,
    run,
    run_deterministic,
    run_stochastic,
    select_best,
)
from .problem import (
    CapabilityError,
    DimensionError,
    Domain,
    DomainError,
    MissingConstantError,
    PerRoundCost,
    ProblemInstance,
    StructuralConstants,
    evaluate_F,
    freeze_cost,
    grad2_F,
    measure_constants,
)

__version__ = "0.1.0"
