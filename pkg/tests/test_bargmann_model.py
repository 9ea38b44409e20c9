import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from halfform import bargmann_model as bm
from halfform import pointwise_core as pc
from oracles import gaussian

FIXTURE = Path(__file__).parent / "fixtures" / "bargmann_spectrum.json"
HO = bm.QuadraticHamiltonian.oscillator()
coef = st.floats(-2, 2, allow_nan=False)
disk_points = st.builds(lambda r, t: r * np.exp(1j * t), st.floats(0, 0.6), st.floats(0, 2 * np.pi))


# --- Hamiltonians ------------------------------------------------------------------

def test_hamiltonian_validation():
    with pytest.raises(ValueError):
        bm.QuadraticHamiltonian(float("nan"), 0, 1)
    assert HO(1.0, 2.0) == 2.5
    assert bm.QuadraticHamiltonian(0, 0, 0).is_zero()


def test_poisson_bracket_by_hand():
    pb = bm.poisson_bracket(bm.QuadraticHamiltonian(1, 0, 0), bm.QuadraticHamiltonian(0, 0, 1))
    assert (pb.a, pb.b, pb.c) == (0.0, 1.0, 0.0)      # {x^2/2, y^2/2} = xy
    assert bm.poisson_bracket(HO, HO).is_zero()


@settings(max_examples=30, deadline=None)
@given(st.tuples(coef, coef, coef), st.tuples(coef, coef, coef), st.floats(-1, 1), st.floats(-1, 1))
def test_poisson_bracket_matches_gradients(fa, ga, x, y):
    f, g = bm.QuadraticHamiltonian(*fa), bm.QuadraticHamiltonian(*ga)
    fx, fy = f.a * x + f.b * y, f.b * x + f.c * y
    gx, gy = g.a * x + g.b * y, g.b * x + g.c * y
    assert bm.poisson_bracket(f, g)(x, y) == pytest.approx(fx * gy - fy * gx, abs=1e-12)


def test_flow_is_symplectic_and_hamiltonian():
    f = bm.QuadraticHamiltonian(1.3, -0.4, 0.7)
    s = f.flow(0.9)
    assert np.linalg.det(s) == pytest.approx(1.0, abs=1e-12)
    # X_f = (-f_y, f_x)
    p = np.array([0.3, -0.8])
    fx, fy = f.a * p[0] + f.b * p[1], f.b * p[0] + f.c * p[1]
    assert np.allclose(f.flow_matrix @ p, [-fy, fx])


def test_alpha_beta_reconstructs_linear_map():
    s = bm.QuadraticHamiltonian(0.4, 0.9, -0.2).flow(0.7)
    al, be = bm.alpha_beta(s)
    x, y = 0.37, -1.1
    z = (x + 1j * y) / math.sqrt(2)
    sx, sy = s @ [x, y]
    assert (sx + 1j * sy) / math.sqrt(2) == pytest.approx(al * z + be * np.conj(z), abs=1e-14)
    assert abs(al) ** 2 - abs(be) ** 2 == pytest.approx(1.0, abs=1e-12)


def test_structure_velocity_matches_finite_difference():
    f = bm.QuadraticHamiltonian(0.6, 0.3, -1.1)
    mu, h = 0.2 - 0.35j, 1e-6

    def pulled(t):
        # holomorphic coordinate w = z + mu conj(z) composed with exp(tM)
        al, be = bm.alpha_beta(f.flow(t))
        return (be + mu * np.conj(al)) / (al + mu * np.conj(be))

    fd = (pulled(h) - pulled(-h)) / (2 * h)
    assert bm.structure_velocity(f.flow_matrix, mu) == pytest.approx(fd, abs=1e-8)


# --- Fock spaces ---------------------------------------------------------------

def test_mu_zero_is_standard_basis():
    sp = bm.fock_space(4, 0.0, 16)
    assert np.abs(sp.basis - np.eye(17)).max() <= 1e-12


def test_squeezed_space_k8():
    sp = bm.fock_space(8, 0.3, 48)
    assert np.all(sp.tails < 1e-10)
    assert np.abs(sp.basis.conj().T @ sp.basis - np.eye(sp.dim)).max() <= 1e-10
    assert sp.window == 37


@settings(max_examples=20, deadline=None)
@given(disk_points)
def test_squeezed_spaces_orthonormal(mu):
    sp = bm.fock_space(2, mu, 64)
    assert np.abs(sp.basis.conj().T @ sp.basis - np.eye(sp.dim)).max() <= 1e-10
    assert np.all(sp.tails < 1e-10)


def test_cutoff_error_names_required_degree():
    with pytest.raises(bm.CutoffError, match="need D >="):
        bm.fock_space(4, 0.9, 8)
    with pytest.raises(ValueError):
        bm.fock_space(4, 0.95, 64)
    with pytest.raises(ValueError):
        bm.fock_space(4, 0.0, 7)


def test_squeezed_vacuum_matches_columns():
    v = bm.squeezed_vacuum(0.4 + 0.2j, 200)
    c = bm.squeezed_columns(0.4 + 0.2j, 200, 1)[:, 0]
    assert np.abs(v[:120] - c[:120]).max() <= 1e-12


def test_recursive_columns_agree_on_low_modes():
    mu = 0.3j
    rec = bm.squeezed_columns_recursive(mu, 160, 8)
    ref = bm.squeezed_columns(mu, 160, 8)
    assert np.abs(rec[:100] - ref[:100]).max() <= 1e-10


def test_overlap_singular_values():
    a, b = bm.fock_space(8, 0.0, 48), bm.fock_space(8, 0.3, 48)
    ov = (1 - 0.3**2) ** 0.25 * a.basis.conj().T @ b.basis
    sv = np.linalg.svd(ov, compute_uv=False)
    assert sv.max() <= 1 + 1e-12 and sv.min() > 0


def test_pullback_matches_quadrature():
    k, nmax = 4, 8
    flow = bm.QuadraticHamiltonian(0.8, 0.5, -0.3).flow(0.6)
    al, be = bm.alpha_beta(flow)
    cols, tails = bm.pullback_matrix(flow, 96, nmax + 1)
    ref = gaussian.pullback_matrix(k, nmax, flow)
    # L^2 overlap with the mu = 0 space carries (1 - |mu|^2)^{1/4}
    factor = (1 - abs(be / al) ** 2) ** 0.25
    assert np.abs(factor * cols[: nmax + 1] - ref).max() <= 1e-10
    assert np.all(tails < 1e-10)


# --- quantization -------------------------------------------------------------------

def test_zero_hamiltonian():
    sp = bm.fock_space(4, 0.2, 24)
    assert np.abs(bm.qm_op(sp, bm.QuadraticHamiltonian(0, 0, 0)).m).max() == 0


@pytest.mark.parametrize("record", json.loads(FIXTURE.read_text()), ids=lambda r: f"k{r['k']}")
def test_spectrum_against_frozen_oracle(record):
    k = record["k"]
    sp = bm.fock_space(k, 0.0, 32)
    w = min(sp.window, record["nmax"] + 1)
    corr = np.linalg.eigvalsh(k * bm.qm_op(sp, HO).m)[:w]
    plain = np.linalg.eigvalsh(k * bm.qm_op(sp, HO, corrected=False).m)[:w]
    assert np.abs(corr - np.array(record["corrected"][:w])).max() <= 1e-6
    assert np.abs(plain - np.array(record["plain"][:w])).max() <= 1e-6
    assert np.abs((corr - plain) + 0.5).max() <= 1e-6


@pytest.mark.parametrize("abc", [(1.0, 0.0, 1.0), (0.7, 0.4, -0.3), (0.0, 1.0, 0.0)])
def test_operator_matrices_match_quadrature(abc):
    k, nmax = 4, 8
    f = bm.QuadraticHamiltonian(*abc)
    plain_ref, corr_ref = gaussian.operator_matrices(k, nmax, abc)
    sp = bm.fock_space(k, 0.0, 24)
    assert np.abs(bm.qm_op(sp, f).m[: nmax + 1, : nmax + 1] - corr_ref).max() <= 1e-10
    assert np.abs(bm.qm_op(sp, f, corrected=False).m[: nmax + 1, : nmax + 1] - plain_ref).max() <= 1e-10


def test_half_form_constant_matches_quadrature_oracle():
    f = bm.QuadraticHamiltonian(0.7, 0.4, -0.3)
    _, grad = gaussian.quadratic(f.a, f.b, f.c)
    assert bm.half_form_constant(f.flow_matrix, 0.0) == pytest.approx(gaussian.half_form_constant_fd(grad), abs=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.tuples(coef, coef, coef), disk_points)
def test_half_form_constant_equals_vacuum_shift(abc, mu):
    f = bm.QuadraticHamiltonian(*abc)
    sp = bm.fock_space(3, mu, 48)
    kappa = bm.toeplitz_shift(sp, f)
    assert (bm.half_form_constant(f.flow_matrix, mu) / (1j * sp.k)).real == pytest.approx(kappa, abs=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.tuples(coef, coef, coef), disk_points)
def test_qm_op_hermitian_in_window(abc, mu):
    sp = bm.fock_space(5, mu, 48)
    w = sp.window
    for corrected in (True, False):
        m = bm.qm_op(sp, bm.QuadraticHamiltonian(*abc), corrected).m[:w, :w]
        assert np.abs(m - m.conj().T).max() <= 1e-10


@settings(max_examples=20, deadline=None)
@given(st.tuples(coef, coef, coef))
def test_reality(abc):
    # complex conjugation of Fock coefficients is the reflection y -> -y
    a, b, c = abc
    sp = bm.fock_space(4, 0.0, 24)
    q = bm.qm_op(sp, bm.QuadraticHamiltonian(a, b, c)).m
    q_reflected = bm.qm_op(sp, bm.QuadraticHamiltonian(a, -b, c)).m
    assert np.abs(q.conj() - q_reflected).max() <= 1e-12


def _sl2(rng):
    return bm.QuadraticHamiltonian(*rng.normal(size=3)).flow_matrix


def test_half_form_derivative_commutator_defect():
    # frame sections: D_X acts by a constant, so [D_X, D_Y] - D_[X,Y] = -D_[X,Y]
    rng = np.random.default_rng(5)
    for _ in range(50):
        ma, mb = _sl2(rng), _sl2(rng)
        bracket = mb @ ma - ma @ mb          # Lie bracket of the linear fields x -> Ma x
        defect0 = -bm.half_form_constant(bracket, 0.0)
        eta, mu = bm.structure_velocity(ma, 0.0), bm.structure_velocity(mb, 0.0)
        assert abs(defect0 - pc.curvature_P_integrand(eta, mu)) <= 1e-10
        # the matrix commutator convention flips the sign
        assert abs(-bm.half_form_constant(ma @ mb - mb @ ma, 0.0) + pc.curvature_P_integrand(eta, mu)) <= 1e-10
        # away from the origin the disk metric factor appears
        m0 = 0.6 * rng.uniform() * np.exp(2j * np.pi * rng.uniform())
        d = -bm.half_form_constant(bracket, m0)
        r = pc.curvature_P_integrand(bm.structure_velocity(ma, m0), bm.structure_velocity(mb, m0))
        assert abs(d - r / (1 - abs(m0) ** 2) ** 2) <= 1e-10


# --- central extension ---------------------------------------------------------------

def test_identity_element():
    rng = np.random.default_rng(0)
    e = bm.random_element(rng)
    one = bm.extension_identity()
    for prod in (bm.extension_compose(one, e), bm.extension_compose(e, one)):
        assert np.abs(prod.flow - e.flow).max() <= 1e-14
        assert abs(prod.branch - e.branch) <= 1e-14


def test_rotation_pi_squared_is_minus_one():
    r = bm.rotation(math.pi)
    sq = bm.extension_compose(r, r)
    assert np.abs(sq.flow - np.eye(2)).max() <= 1e-12
    assert abs(sq.branch + 1) <= 1e-12


def test_full_rotation_branch():
    r = bm.rotation(2 * math.pi)
    assert np.abs(r.flow - np.eye(2)).max() <= 1e-12
    assert abs(r.branch + 1) <= 1e-12 and r.sign == -1
    assert abs(bm.rotation(4 * math.pi).branch - 1) <= 1e-12


def test_center():
    minus = bm.ExtensionElement(np.eye(2), -1.0)
    rng = np.random.default_rng(3)
    for _ in range(10):
        e = bm.random_element(rng)
        l, r = bm.extension_compose(minus, e), bm.extension_compose(e, minus)
        assert abs(l.branch - r.branch) <= 1e-12 and abs(l.branch + e.branch) <= 1e-12


def test_associativity_and_flow_products():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        a, b, c = (bm.random_element(rng) for _ in range(3))
        left = bm.extension_compose(bm.extension_compose(a, b), c)
        right = bm.extension_compose(a, bm.extension_compose(b, c))
        worst = max(worst, abs(left.branch - right.branch), np.abs(left.flow - right.flow).max())
        ab = bm.extension_compose(a, b)
        assert np.abs(ab.flow - a.flow @ b.flow).max() <= 1e-10
        assert bm.branch_defect(ab) <= 1e-10
    assert worst <= 1e-10


def test_composition_phase_is_zeta_root():
    rng = np.random.default_rng(2)
    for _ in range(20):
        e1, e2 = bm.random_element(rng, 0.5), bm.random_element(rng, 0.5)
        a_inv, b_inv = bm.alpha_beta(np.linalg.inv(e2.flow))
        nu = b_inv / a_inv
        if abs(nu) > 0.85 or abs(e1.mu) > 0.85:
            continue
        z = pc.zeta_value(pc.ComplexStructure(0.0), pc.ComplexStructure(nu), pc.ComplexStructure(e1.mu))
        assert bm.composition_phase(e1, e2) ** 2 == pytest.approx(z / abs(z), abs=1e-10)


def test_flow_element_tracks_branch():
    f = bm.QuadraticHamiltonian(1.2, 0.3, 0.9)
    e = bm.flow_element(f, 0.0)
    assert e.branch == 1
    e = bm.flow_element(f, 5.0)
    assert bm.branch_defect(e) <= 1e-10
    half = bm.flow_element(f, 2.5)
    assert abs(bm.extension_compose(half, half).branch - e.branch) <= 1e-10


# --- Schroedinger evolution ---------------------------------------------------------------

def test_schrodinger_at_time_zero():
    assert bm.schrodinger_vs_transport(4, HO, 0.0, 32) <= 1e-14


def test_schrodinger_oscillator():
    assert bm.schrodinger_vs_transport(8, HO, math.pi / 3, 48) <= 1e-10


def test_full_period_global_sign():
    d, u, v, e = bm.schrodinger_vs_transport(6, HO, 2 * math.pi, 48, return_parts=True)
    w = u.shape[1]
    assert abs(e.branch + 1) <= 1e-12
    assert np.abs(u[:w] + np.eye(w)).max() <= 1e-10
    assert d <= 1e-10


def test_schrodinger_general_quadratic():
    f = bm.QuadraticHamiltonian(1.0, 0.3, 0.6)
    assert bm.schrodinger_vs_transport(8, f, 0.7, 160, window=40) <= 1e-8


def test_leaking_flow_raises():
    f = bm.QuadraticHamiltonian(0.0, 1.0, 0.0)   # hyperbolic: strong squeezing
    with pytest.raises(bm.CutoffError):
        bm.schrodinger_vs_transport(4, f, 1.5, 16)


# --- connection and curvature ------------------------------------------------------------

def test_generator_coefficients_solve_bogoliubov_relation():
    mu, dmu = 0.3 - 0.2j, 0.7 + 0.1j
    x, w = bm.squeeze_generator_coeffs(mu, dmu)
    u, v, du, dv = bm._bogoliubov(mu, dmu)
    assert u * w - 2 * v * x == pytest.approx(du, abs=1e-13)
    assert -2 * u * np.conj(x) - v * w == pytest.approx(dv, abs=1e-13)


def test_transport_matches_squeezed_columns():
    # transporting the squeezed basis from 0 to mu agrees with the overlap of the two spaces
    mu = 0.25 + 0.1j
    hol, err = bm.bargmann_transport([0.0, mu], 40, half_form=False, window=20)
    _, err_fine = bm.bargmann_transport([0.0, mu], 40, half_form=False, steps_per_unit=512, window=20)
    ov = bm.fock_space(2, mu, 40).basis.conj().T @ bm.fock_space(2, 0.0, 40).basis
    # parallel transport is the unitary part of the overlap to first order only
    assert np.abs(hol[:10, :10] - ov[:10, :10]).max() <= 0.05
    assert err_fine < err / 8      # fourth-order integrator


def test_plain_bargmann_curvature_is_constant():
    # the disk metric varies across the loop, so the estimate carries an O(eps^2) term
    rich, r1, r2, ode = bm.curvature_richardson(0.0, 1.0, 1j, 0.025, 24, half_form=False, window=10)
    w = 10
    assert np.abs(rich[:w, :w] - 1j * np.eye(w)).max() <= 1e-3
    assert bm.opnorm(rich[:w, :w]) == pytest.approx(abs(-pc.curvature_P_integrand(1.0, 1j)), abs=1e-3)


def test_half_form_bargmann_curvature_vanishes():
    rich, r1, r2, ode = bm.curvature_richardson(0.0, 1.0, 1j, 0.05, 24, half_form=True, window=10)
    assert bm.opnorm(rich[:10, :10]) <= 1e-6


def test_commutator_curvature_trivial_pair():
    res = bm.commutator_curvature_identity(8, HO, HO, 24, eps=0.1)
    assert res["lhs_norm"] <= 1e-12
    assert res["rhs_norm"] <= 1e-6
