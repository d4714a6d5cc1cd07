"""The acceptance suite: end-to-end checks of the convergence theory on
concrete runs.  Shared by ``valagg verify`` and the test suite."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .diagnostics import check_bounds, compute_S, fit_rate, mean_policy_gap
from .ftl import CLOSED_FORM, PROJECTED_GRADIENT, CostAggregate, ftl_step
from .instances import (
    AffineQuadraticSpec,
    LinearImitationSpec,
    Regularizer,
    StochasticInstance,
    StochasticWrapperSpec,
    make_affine_quadratic,
    make_counterexample,
    make_linear_imitation,
)
from .loop import CostTransformer, LoopConfig, SamplingSchedule, run
from .problem import gradient_relative_error, measure_constants
from .traceio import trace_to_csv

INEQUALITY_N = 500
RATE_N = 10_000
TOL = 1e-9


@dataclass(frozen=True)
class CheckResult:
    check_id: str
    passed: bool
    message: str
    tags: frozenset = field(default_factory=frozenset)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.check_id}: {self.message}"


# ---- run fixtures -------------------------------------------------------

def affine_matrix(norm: float, seed: int = 7) -> np.ndarray:
    A = np.random.default_rng(seed).standard_normal((3, 3))
    return norm * A / np.linalg.norm(A, 2)


IMITATION_SETTINGS = {
    "imitation(a=0.3,a_b=0.2,k*=0.1)": LinearImitationSpec(0.3, 0.2, 0.1, T=3, gain_box=(-1.0, 1.0)),
    "imitation(a=0.5,a_b=0.3,k*=-0.5)": LinearImitationSpec(0.5, 0.3, -0.5, T=3, gain_box=(-0.5, 0.5)),
}
# deadbeat expert (a + a_b k* = 0) with theta > 1 before mixing
MIXING_IMITATION = LinearImitationSpec(1.2, 1.0, -1.2, T=3, gain_box=(-1.5, -0.5))


def inequality_instances() -> dict:
    out = {f"counterexample(theta={t})": (make_counterexample(t), [1.0]) for t in (0.3, 0.5, 0.9)}
    b = np.array([0.3, -0.2, 0.1])
    for nm in (0.5, 0.9):
        inst = make_affine_quadratic(AffineQuadraticSpec(affine_matrix(nm), b))
        out[f"affine(d=3,|M|={nm})"] = (inst, np.ones(3))
    for name, spec in IMITATION_SETTINGS.items():
        out[name] = (make_linear_imitation(spec), [spec.gain_box[1]])
    return out


@functools.lru_cache(maxsize=None)
def inequality_runs() -> dict:
    return {name: (inst, run(inst, LoopConfig(INEQUALITY_N, x1)))
            for name, (inst, x1) in inequality_instances().items()}


@functools.lru_cache(maxsize=None)
def counterexample_run(theta: float, n: int, x1: float = 1.0, transformer: CostTransformer | None = None):
    return run(make_counterexample(theta), LoopConfig(n, [x1], transformer=transformer))


def _corrupt(constants, theta_scale: float):
    return constants if theta_scale == 1.0 else constants.replace(beta=constants.beta * theta_scale)


# ---- criteria -----------------------------------------------------------

def check_iterates(**_) -> Iterable[CheckResult]:
    tr = counterexample_run(10.0, 4)
    x = tr.iterates[:, 0]
    expected = np.array([1.0, 10.0, 55.0, 220.0])
    err = float(np.max(np.abs(x - expected) / expected))
    yield CheckResult("c1/iterates", err <= 1e-12, f"theta=10 iterates {x.tolist()} rel err {err:.1e}")


def check_rate(**_) -> Iterable[CheckResult]:
    for th in (0.3, 0.6, 0.9):
        fit = fit_rate(counterexample_run(th, RATE_N).self_values, 0.0, (100, RATE_N), theta=th)
        ok = abs(fit.fitted_exponent - 2 * (th - 1)) <= 0.05 and fit.r_squared >= 0.999
        yield CheckResult(f"c2/rate theta={th}", ok,
                          f"fitted {fit.fitted_exponent:.4f} vs {2 * (th - 1):.2f}, r2 {fit.r_squared:.6f}")


def check_divergence(**_) -> Iterable[CheckResult]:
    tr = counterexample_run(1.5, RATE_N)
    F = tr.self_values
    inc = bool(np.all(np.diff(F[9:]) > 0))
    fit = fit_rate(F, 0.0, (100, RATE_N), theta=1.5)
    ok = inc and abs(fit.fitted_exponent - 1.0) <= 0.05
    yield CheckResult("c3/divergence theta=1.5", ok,
                      f"strictly increasing from n=10: {inc}, fitted {fit.fitted_exponent:.4f} vs 1.00")
    rec = check_bounds(tr, make_counterexample(1.5).constants, "thm3_lower")[0]
    yield CheckResult("c3/thm3_lower theta=1.5", rec.passed, rec.summary())
    tr10 = counterexample_run(10.0, 200)
    rec = check_bounds(tr10, make_counterexample(10.0).constants, "thm3_lower")[0]
    yield CheckResult("c3/thm3_lower theta=10", rec.passed,
                      rec.summary() + (f", aborted after {tr10.n_rounds} rounds" if tr10.aborted else ""))
    x = counterexample_run(1.0, 1000).iterates[:, 0]
    dev = float(np.max(np.abs(x - x[0])))
    yield CheckResult("c3/constant theta=1", dev <= 1e-12, f"max |x_n - x_1| = {dev:.1e}")


def _bound_group(bound_ids, label, theta_scale):
    for name, (inst, tr) in inequality_runs().items():
        c = _corrupt(inst.constants, theta_scale)
        for rec in check_bounds(tr, c, bound_ids, tol=TOL):
            yield CheckResult(f"{label}/{rec.bound_id} {name}", rec.passed, rec.summary())


def check_lemma3(theta_scale: float = 1.0, **_):
    # the one-step perturbation bound is checked jointly with the S_n step bound
    yield from _bound_group(("lemma3", "perturbation"), "c4", theta_scale)


def check_prop2(theta_scale: float = 1.0, **_):
    yield from _bound_group(("prop2",), "c4", theta_scale)


def check_thm1(theta_scale: float = 1.0, **_):
    yield from _bound_group(("thm1",), "c4", theta_scale)


def check_thm2(theta_scale: float = 1.0, **_):
    for name, (inst, tr) in inequality_runs().items():
        c = _corrupt(inst.constants, theta_scale)
        if not c.theta < 1:
            continue
        N = tr.n_rounds
        rhs = c.eps_tilde + (c.theta * math.exp(1 - c.theta) * c.g2) ** 2 / (2 * c.alpha) * N ** (2 * (c.theta - 1))
        margin = rhs - tr.final_value
        yield CheckResult(f"c5/thm2 {name}", margin >= -TOL,
                          f"F(x_N,x_N)={tr.final_value:.3e} <= {rhs:.3e} (margin {margin:.3e})")


def check_weighted(**_) -> Iterable[CheckResult]:
    cx = make_counterexample(1.5)
    plain = counterexample_run(1.5, RATE_N)
    yield CheckResult("c6/unregularized diverges", plain.final_value > plain.self_values[0],
                      f"F(x_1,x_1)={plain.self_values[0]:.3g}, F(x_N,x_N)={plain.final_value:.3g}")
    lam = 2.0
    regs = {"squared_distance": Regularizer.squared_distance(cx.constants.alpha, [0.0]),
            "expert_cost": Regularizer.expert_cost(cx)}
    for label, reg in regs.items():
        t = CostTransformer.weighted(lam, reg)
        tr = counterexample_run(1.5, RATE_N, transformer=t)
        c = tr.effective_constants
        fit = fit_rate(tr.base_values, 0.0, (100, RATE_N), theta=c.theta)
        rec = check_bounds(tr, c, "corollary3", base_constants=cx.constants)[0]
        ok = c.theta < 1 and rec.passed
        msg = f"theta~={c.theta:.3f}, fitted {fit.fitted_exponent:.4f}; {rec.summary()}"
        if reg.nonnegative:
            ok = ok and abs(fit.fitted_exponent + 1.0) <= 0.1
        else:
            ok = ok and tr.base_values[-1] < tr.base_values[0]
        yield CheckResult(f"c6/corollary3 {label} lambda={lam}", ok, msg)


def check_mixing(**_) -> Iterable[CheckResult]:
    im = make_linear_imitation(MIXING_IMITATION)
    beta, T = im.constants.beta, MIXING_IMITATION.T
    for q in (0.2, 0.5, 0.9):
        measured = measure_constants(im.mixed(q)).beta
        cap = (1 - q ** T) * beta
        yield CheckResult(f"c7/mixing beta q={q}", measured <= 1.03 * cap,
                          f"measured beta^={measured:.4f} <= (1-q^T) beta={cap:.4f} (+3%)")
    q = 0.9
    mixed = im.mixed(q)
    meas = measure_constants(mixed)
    tr = run(im, LoopConfig(INEQUALITY_N, [MIXING_IMITATION.gain_box[1]], transformer=CostTransformer.mixing(q)))
    rec = check_bounds(tr, mixed.constants, "corollary2", base_constants=im.constants)[0]
    ok = im.constants.theta > 1 and meas.theta < 1 and rec.passed and tr.base_values[-1] <= 1e-12
    yield CheckResult(f"c7/corollary2 imitation q={q}", ok,
                      f"theta {im.constants.theta:.3f} -> measured {meas.theta:.3f}; {rec.summary()}")
    cx = make_counterexample(1.5)
    t = CostTransformer.mixing(q)
    tr = counterexample_run(1.5, RATE_N, transformer=t)
    th_hat = tr.effective_constants.theta
    rec = check_bounds(tr, tr.effective_constants, "corollary2", base_constants=cx.constants)[0]
    fit = fit_rate(tr.base_values, 0.0, (100, RATE_N), theta=th_hat)
    ok = th_hat < 1 and rec.passed and fit.fitted_exponent < 0
    yield CheckResult(f"c7/corollary2 counterexample theta=1.5 q={q}", ok,
                      f"theta^={th_hat:.3f}, fitted {fit.fitted_exponent:.3f}; {rec.summary()}")


def stochastic_finals(m0: int, r: float, seeds=range(20), n: int = INEQUALITY_N, x1: float = 0.0) -> np.ndarray:
    inst = StochasticInstance(make_counterexample(0.5), StochasticWrapperSpec("uniform", 1.0))
    return np.array([run(inst, LoopConfig(n, [x1], "stochastic", SamplingSchedule(m0, r, s))).final_value
                     for s in seeds])


def check_stochastic(**_) -> Iterable[CheckResult]:
    small, large, grow = (np.median(stochastic_finals(m0, r)) for m0, r in ((25, 0), (400, 0), (25, 1)))
    yield CheckResult("c8/plateau m0=400 vs 25", large <= 0.25 * small,
                      f"median {large:.3e} <= 0.25 x {small:.3e} (ratio {large / small:.3f})")
    yield CheckResult("c8/growth r=1 vs r=0", grow <= 0.5 * small,
                      f"median {grow:.3e} <= 0.5 x {small:.3e} (ratio {grow / small:.3f})")


def check_hygiene(**_) -> Iterable[CheckResult]:
    rng = np.random.default_rng(0)
    instances = {name: inst for name, (inst, _) in inequality_instances().items()}
    instances["stochastic counterexample"] = StochasticInstance(make_counterexample(0.5))
    for name, inst in instances.items():
        box = inst.reference_box
        worst = 0.0
        for _ in range(100):
            y, x = box.sample(rng, 2)
            worst = max(worst, gradient_relative_error(inst, y, x))
        yield CheckResult(f"c9/gradient {name}", worst <= 1e-6, f"worst rel err {worst:.2e} over 100 probes")
    for name, (inst, tr) in inequality_runs().items():
        agg = CostAggregate.from_costs(tr.costs[:50])
        dom = inst.domain
        a = ftl_step(agg, dom, method=CLOSED_FORM if agg.all_quadratic else None, tol_inner=1e-13)
        b = ftl_step(agg, dom, method=PROJECTED_GRADIENT, tol_inner=1e-13)
        gap = float(np.linalg.norm(a.minimizer - b.minimizer))
        yield CheckResult(f"c9/closed-form vs iterative {name}", gap <= 1e-8, f"|difference| {gap:.2e}")
    inst = StochasticInstance(make_counterexample(0.5))
    cfg = LoopConfig(200, [1.0], "stochastic", SamplingSchedule(10, 0.5, 123))
    same = trace_to_csv(run(inst, cfg)) == trace_to_csv(run(inst, cfg))
    yield CheckResult("c9/byte-identical rerun", same, "seeded stochastic trace CSV reproduced" if same
                      else "trace CSV differs between reruns")


def check_mean_policy(theta_scale: float = 1.0, **_) -> Iterable[CheckResult]:
    for name, (inst, tr) in inequality_runs().items():
        c = _corrupt(inst.constants, theta_scale)
        if not c.theta < 1:
            continue
        N = tr.n_rounds
        gap = mean_policy_gap(tr.iterates)
        s_n = compute_S(tr.iterates, N)
        cap = math.exp(1 - c.theta) * N ** (c.theta - 1) * c.g2 / c.alpha
        ok = gap <= s_n + 1e-12 and s_n <= cap + TOL
        yield CheckResult(f"c10/mean policy {name}", ok,
                          f"|x_N - mean| {gap:.3e} <= S_N {s_n:.3e} <= {cap:.3e}")


CHECKS: list[tuple[str, frozenset, Callable]] = [
    ("c1", frozenset({"iterates"}), check_iterates),
    ("c2", frozenset({"rate"}), check_rate),
    ("c3", frozenset({"divergence", "thm3_lower"}), check_divergence),
    ("c4", frozenset({"lemma3", "perturbation"}), check_lemma3),
    ("c4", frozenset({"prop2"}), check_prop2),
    ("c4", frozenset({"thm1"}), check_thm1),
    ("c5", frozenset({"thm2"}), check_thm2),
    ("c6", frozenset({"corollary3", "weighted"}), check_weighted),
    ("c7", frozenset({"corollary2", "mixing"}), check_mixing),
    ("c8", frozenset({"stochastic"}), check_stochastic),
    ("c9", frozenset({"hygiene"}), check_hygiene),
    ("c10", frozenset({"mean_policy"}), check_mean_policy),
]
CHECK_TAGS = sorted({t for cid, tags, _ in CHECKS for t in tags | {cid}})


def run_checks(only: Iterable[str] | None = None, theta_scale: float = 1.0,
               report: Callable[[CheckResult], None] | None = None) -> list[CheckResult]:
    """Run the selected checks (by criterion id like ``c4`` or tag like
    ``lemma3``); ``theta_scale`` rescales beta in the declared constants and
    exists only to prove that the harness notices wrong constants."""
    only = set(only) if only else None
    if only:
        unknown = only - set(CHECK_TAGS)
        if unknown:
            raise ValueError(f"unknown checks {sorted(unknown)}; choose from {CHECK_TAGS}")
    results = []
    for cid, tags, fn in CHECKS:
        if only and not (only & (tags | {cid})):
            continue
        for res in fn(theta_scale=theta_scale):
            res = CheckResult(res.check_id, res.passed, res.message, tags | {cid})
            results.append(res)
            if report is not None:
                report(res)
    return results
