"""
Theta-function quantum spaces on the torus
===========================================

For each tau in the upper half-plane the level-k holomorphic sections form a
k-dimensional space.  We build orthonormal bases on a grid and look at Toeplitz
operators with and without the half-form correction.
"""

import numpy as np

from halfform import torus_model as tm

k, tau = 12, 0.3 + 1.1j
space = tm.QuantumSpace(k, tau)
print(f"k={k}: dim={space.dim}, grid={space.grid}, Gram condition={space.gram_cond:.3g}")

b = space.basis
print("orthonormality defect:", np.abs(space.inner(b, b) - np.eye(k)).max())

# Pi f Pi for f = cos 2 pi x is Hermitian with norm below max |f|
f = tm.TrigPoly.cos_x()
plain = tm.toeplitz(space, f).m
print("||Pi f Pi|| =", tm.opnorm(plain), " Hermitian defect:", np.abs(plain - plain.conj().T).max())

# the corrected operator adds (1/ik)(nabla_X + D_X); the difference is O(1/k)
corr = tm.toeplitz(space, f, corrected=True).m
print("||Q(f) - Pi f Pi|| =", tm.opnorm(corr - plain))

# the Psi factor between two structures is a ratio of conjugate-linear pairings
print("Psi(i -> 2i) =", tm.torus_psi_scalar(1j, 2j))

# an FIO between two structures: multiply by the half-form morphism, project, polarize
a, c = tm.QuantumSpace(k, 1j), tm.QuantumSpace(k, 2j)
u = tm.fio_unitary(a, c, tm.torus_morphism(1j, 2j).scalar)
print("FIO unitarity defect:", u.info["unitarity_defect"])
