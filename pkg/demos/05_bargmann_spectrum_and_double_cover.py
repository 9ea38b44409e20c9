"""
Harmonic oscillator in the Bargmann model and the metaplectic sign
===================================================================

k Q(|z|^2/2) has spectrum n + 1/2 with the half-form correction and n + 1 without.
Rotating by 2 pi returns the flow to the identity but the half-form branch to -1.
"""

import math

import numpy as np

from halfform import bargmann_model as bm

k = 8
space = bm.fock_space(k, 0.0, 48)
ho = bm.QuadraticHamiltonian.oscillator()
print("corrected:", np.round(np.linalg.eigvalsh(k * bm.qm_op(space, ho).m)[:6], 12))
print("plain:    ", np.round(np.linalg.eigvalsh(k * bm.qm_op(space, ho, corrected=False).m)[:6], 12))

# squeezed spaces for other structures
sq = bm.fock_space(k, 0.3 + 0.2j, 48)
print("squeezed basis tail mass:", sq.tails.max())

# the double cover
for t in (math.pi, 2 * math.pi, 4 * math.pi):
    e = bm.rotation(t)
    print(f"rotation by {t / math.pi:.0f} pi: branch {e.branch:.3f}, sheet {e.sign:+d}")
half = bm.rotation(math.pi)
print("rotation(pi)^2 branch:", bm.extension_compose(half, half).branch)
