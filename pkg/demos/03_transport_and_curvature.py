"""
Parallel transport over the moduli of complex structures
=========================================================

Transport along paths of tau, compared with the FIO of the path's half-form
morphism, and the curvature measured as holonomy around small loops.
"""

from halfform import torus_model as tm

k = 16
path = tm.ModuliPath.polygon([1j, 0.7 + 1.3j, -0.2 + 2j])
u = tm.transport(path, k)
fio = tm.fio_unitary(tm.cached_space(k, 1j, True), tm.cached_space(k, -0.2 + 2j, True),
                     tm.path_morphism_scalar(path))
print("pre-polar unitarity defect:", u.info["unitarity_defect"])
print("||transport - FIO|| =", tm.opnorm(u.m - fio.m))

# holonomy around an eps-parallelogram at tau = i, Richardson-extrapolated in eps
for half_form in (False, True):
    r, err = tm.curvature_richardson(1j, 1.0, 1j, 0.25, k, half_form)
    print(f"half_form={half_form}: ||R(1, i)|| = {tm.opnorm(r):.3e} +- {err:.1e}")
# without half-forms the theta bundle carries curvature i/4 for every k;
# the half-form frame cancels it
