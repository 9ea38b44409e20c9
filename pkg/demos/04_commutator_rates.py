"""
Commutators of quantized observables and their decay rate
==========================================================

ik[Q(f), Q(g)] - Q({f, g}) for f = cos 2 pi x, g = cos 2 pi y, swept over k and
fitted on a log-log scale, with and without the half-form correction.
"""

import numpy as np

from halfform import asymptotics as asy
from halfform import torus_model as tm

tau = 0.3 + 1.1j
ks = [8, 12, 16, 24, 32, 48, 64]
f, g = tm.TrigPoly.cos_x(), tm.TrigPoly.cos_y()

for half_form in (True, False):
    defects = [tm.commutator_defect(tm.cached_space(k, tau, half_form), f, g) for k in ks]
    fit = asy.fit_rate(ks, defects)
    print(f"half_form={half_form}: slope {fit.slope:.2f} +- {fit.slope_ci_halfwidth:.2f}")
    print("   ", np.array2string(np.array(defects), precision=2))

# the same sweep through the experiment harness, with a verdict
exp = asy.Experiment("commutator", "commutator_decay", {"tau": [0.3, 1.1]})
print(asy.judge(exp, asy.run(exp, jobs=4)))
