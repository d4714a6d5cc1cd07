"""
Making a divergent problem convergent
=====================================

Two cost transformations shrink the effective theta: mixing the expert into
the state distribution contracts beta by (1 - q^T), and adding lam * R(x) to
every round raises the strong convexity.  Both are applied here to the theta
= 1.5 problem, which diverges without help.
"""

from valagg import CostTransformer, LoopConfig, Regularizer, check_bounds, fit_rate, make_counterexample, run

base = make_counterexample(1.5)
plain = run(base, LoopConfig(10_000, [1.0]))
print(f"no transform: F(x_N,x_N)={plain.final_value:.3e}")

for lam in (0.25, 1.0, 2.0):
    t = CostTransformer.weighted(lam, Regularizer.squared_distance(base.constants.alpha, [0.0]))
    trace = run(base, LoopConfig(10_000, [1.0], transformer=t))
    theta = trace.effective_constants.theta
    line = f"lambda={lam}: theta~={theta:.3f}, F(x_N,x_N)={trace.base_values[-1]:.3e}"
    if theta < 1:
        fit = fit_rate(trace.base_values, 0.0, theta=theta)
        rec = check_bounds(trace, trace.effective_constants, "corollary3", base_constants=base.constants)[0]
        line += f", exponent {fit.fitted_exponent:+.3f}, {rec.summary()}"
    print(line)

for q in (0.3, 0.9):
    trace = run(base, LoopConfig(10_000, [1.0], transformer=CostTransformer.mixing(q)))
    print(f"mixing q={q}: theta^={trace.effective_constants.theta:.3f}, F(x_N,x_N)={trace.base_values[-1]:.3e}")
