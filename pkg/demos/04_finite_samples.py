"""
Finite samples per round
========================

With noisy per-round costs built from m_n = ceil(m0 n^r) samples, the last
iterate stalls at a noise floor that shrinks with m0, and growing the sample
size (r > 0) lowers the floor further.
"""

import numpy as np

from valagg import LoopConfig, SamplingSchedule, StochasticInstance, StochasticWrapperSpec, make_counterexample, run

inst = StochasticInstance(make_counterexample(0.5), StochasticWrapperSpec("uniform", sigma=1.0))


def median_final(m0, r, seeds=range(20)):
    finals = [run(inst, LoopConfig(500, [0.0], "stochastic", SamplingSchedule(m0, r, s))).final_value
              for s in seeds]
    return float(np.median(finals))


for m0, r in [(25, 0.0), (100, 0.0), (400, 0.0), (25, 1.0)]:
    print(f"m0={m0:4d} r={r}: median F(x_500, x_500) = {median_final(m0, r):.3e}")
