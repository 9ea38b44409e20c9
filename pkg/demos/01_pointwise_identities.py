"""
Pointwise half-form algebra on the Siegel disk
===============================================

Random complex structures mu (symmetric, ||mu|| < 1) and the scalars that relate
their canonical lines: the Psi factor and the zeta cocycle with its tracked root.
"""

import numpy as np

from halfform import pointwise_core as pc

rng = np.random.default_rng(0)
a, b, c, d = (pc.random_structure(rng, 2) for _ in range(4))

# Psi_{a,a} is the identity; Psi_{a,b} is a ratio of two determinants
print("psi(a, a) =", pc.psi_factor(a, a))
print("psi(a, b) =", pc.psi_factor(a, b))

# zeta measures how far Psi fails to compose; its square root is continued
# along the straight path from the base structure
z = pc.zeta(a, b, c)
print("zeta(a, b, c) =", z.zeta, " root =", z.sqrt_zeta, " root^2 - zeta =", abs(z.sqrt_zeta**2 - z.zeta))

# the cocycle relation over four structures
lhs = pc.zeta(b, c, d).zeta * pc.zeta(a, b, d).zeta
rhs = pc.zeta(a, c, d).zeta * pc.zeta(a, b, c).zeta
print("cocycle defect:", abs(lhs / rhs - 1))

# half-form morphisms come in pairs +-; composing with the zeta root is associative
src, dst = pc.HalfFormTriple(a), pc.HalfFormTriple(b)
plus, minus = pc.halfform_morphisms(src, dst)
print("the two morphisms a -> b:", plus.scalar, minus.scalar)
