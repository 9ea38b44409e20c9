"""
Schroedinger evolution against geometric transport
===================================================

exp(itkQ(f)) against the pulled-back squeezed basis times the tracked branch, and
the identity relating commutators of quantized quadratics to curvature.
"""

import math

from halfform import bargmann_model as bm

ho = bm.QuadraticHamiltonian.oscillator()
for k in (4, 8, 16, 32):
    print(f"k={k}: ||exp(itkQ) - V|| = {bm.schrodinger_vs_transport(k, ho, math.pi / 3, 48):.2e}")

# a squeezing Hamiltonian needs a larger cutoff; the comparison is on the first 40 modes
f = bm.QuadraticHamiltonian(1.0, 0.3, 0.6)
print("general quadratic:", bm.schrodinger_vs_transport(8, f, 0.7, 160, window=40))

# after a full period the evolution is -1 on the window, as is the branch
d, u, v, e = bm.schrodinger_vs_transport(6, ho, 2 * math.pi, 48, return_parts=True)
print("t = 2 pi: branch", e.branch, " defect", d)

res = bm.commutator_curvature_identity(16, bm.QuadraticHamiltonian(1, 0, 0), bm.QuadraticHamiltonian(0, 0, 1), 32)
print({key: res[key] for key in ("residual", "error_bar", "lhs_norm", "rhs_norm")})
