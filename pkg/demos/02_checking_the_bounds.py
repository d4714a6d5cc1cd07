"""
Checking the convergence inequalities along a run
=================================================

Every run records the iterates, the per-round losses and the concentration
statistic S_n (mean distance from x_n to earlier iterates).  ``check_bounds``
evaluates each inequality at every iterate and reports the worst margin.
"""

import numpy as np

from valagg import (
    AffineQuadraticSpec,
    LinearImitationSpec,
    LoopConfig,
    check_bounds,
    make_affine_quadratic,
    make_linear_imitation,
    measure_constants,
    run,
)

rng = np.random.default_rng(7)
A = rng.standard_normal((3, 3))
M = 0.9 * A / np.linalg.norm(A, 2)
affine = make_affine_quadratic(AffineQuadraticSpec(M, np.array([0.3, -0.2, 0.1])))
imitation = make_linear_imitation(LinearImitationSpec(a=0.5, a_b=0.3, k_star=-0.5, T=3, gain_box=(-0.5, 0.5)))

for name, inst, x1 in [("affine d=3", affine, np.ones(3)), ("imitation", imitation, [0.5])]:
    declared = inst.constants
    measured = measure_constants(inst)
    print(f"{name}: declared theta {declared.theta:.3f}, measured {measured.theta:.3f}")
    trace = run(inst, LoopConfig(500, x1))
    for rec in check_bounds(trace, declared, ("thm1", "thm2", "lemma3", "perturbation", "prop2", "corollary1")):
        print("   ", rec.summary())

# wrong constants are caught: halving beta breaks the step-size inequality
bad = affine.constants.replace(beta=0.5 * affine.constants.beta)
rec = check_bounds(run(affine, LoopConfig(500, np.ones(3))), bad, "lemma3")[0]
print("with beta halved:", rec.summary())
