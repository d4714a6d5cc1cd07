"""
Last-iterate behaviour of follow-the-leader on a two-stage control problem
==========================================================================

The scored policy x is compared to a target theta * y that depends on the
policy y generating the states.  Below theta = 1 the last iterate converges at
rate N^(2(theta-1)); above it, the iterates run away even though the average
loss keeps its usual guarantee.
"""

import numpy as np

from valagg import LoopConfig, fit_rate, make_counterexample, run

# theta = 10 from x_1 = 1: the first few iterates are integers
trace = run(make_counterexample(10.0), LoopConfig(4, [1.0]))
print("theta=10 iterates:", trace.iterates[:, 0])

# sweep theta and fit the exponent of F(x_n, x_n) over n in [100, 10^4]
for theta in (0.3, 0.6, 0.9, 1.0, 1.5):
    trace = run(make_counterexample(theta), LoopConfig(10_000, [1.0]))
    if theta == 1.0:
        print(f"theta={theta}: iterates stay at {trace.iterates[-1, 0]}")
        continue
    fit = fit_rate(trace, 0.0, (100, 10_000))
    print(f"theta={theta}: F(x_N,x_N)={trace.final_value:.3e}, "
          f"fitted exponent {fit.fitted_exponent:+.3f} (predicted {fit.theoretical_exponent:+.2f})")

# the best iterate is not the last one when the sequence diverges
trace = run(make_counterexample(1.5), LoopConfig(50, [1.0]))
print("theta=1.5: best iterate index", trace.best_index, "of", trace.n_rounds)
