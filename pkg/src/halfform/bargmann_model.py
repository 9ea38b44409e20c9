"""Truncated Fock model of the Bargmann space on C (one degree of freedom).

Coordinates: z = (x + i y)/sqrt(2), omega = dx^dy, iota_X omega = -df so X_f = (-f_y, f_x)
and {f, g} = f_x g_y - f_y g_x.  The level-k Fock basis |n> is the standard one for the
structure mu = 0, with

    X = (a + a^dag)/sqrt(2k),   Y = (a^dag - a)/(i sqrt(2k)).

A structure mu in the unit disk has holomorphic coordinate w ~ z + mu*conj(z).  Its
sections are described by the squeezed states S(mu)|n> = b^dag^n |0_mu>/sqrt(n!), with
b^dag = (a^dag + mu a)/sqrt(1 - |mu|^2), written as coefficient columns in the fixed
Fock basis.  The L^2 overlap of the mu-space and the mu=0 space is (1-|mu|^2)^{1/4} S(mu),
so unitary half-form pairings reduce to S(mu) itself.

Quadratic Hamiltonians f = (a x^2 + 2 b xy + c y^2)/2 have flow matrix A_f = [[-b, -c], [a, b]].
A linear symplectic map S acts by z o S = alpha z + beta conj(z); it pulls mu = 0 back to
mu_S = beta/alpha.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from . import pointwise_core as pc

TAIL_TOL = 1e-10
ODE_TOL = 1e-11
WINDOW_FRACTION = 0.75


class CutoffError(ValueError):
    pass


# --- Hamiltonians -------------------------------------------------------------

@dataclass(frozen=True)
class QuadraticHamiltonian:
    a: float
    b: float
    c: float

    def __post_init__(self):
        for name in ("a", "b", "c"):
            v = getattr(self, name)
            if not np.isfinite(v) or isinstance(v, complex):
                raise ValueError(f"coefficient {name} must be a finite real number")
            object.__setattr__(self, name, float(v))

    @classmethod
    def oscillator(cls):
        return cls(1.0, 0.0, 1.0)

    @property
    def hessian(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.b, self.c]])

    @property
    def flow_matrix(self) -> np.ndarray:
        return np.array([[-self.b, -self.c], [self.a, self.b]])

    def flow(self, t: float) -> np.ndarray:
        return expm(t * self.flow_matrix)

    def __call__(self, x, y):
        return 0.5 * (self.a * x**2 + 2 * self.b * x * y + self.c * y**2)

    def is_zero(self) -> bool:
        return self.a == 0 and self.b == 0 and self.c == 0


def poisson_bracket(f: QuadraticHamiltonian, g: QuadraticHamiltonian) -> QuadraticHamiltonian:
    j = np.array([[0.0, -1.0], [1.0, 0.0]])
    h, k = f.hessian, g.hessian
    m = k @ j @ h - h @ j @ k
    return QuadraticHamiltonian(m[0, 0], m[0, 1], m[1, 1])


def alpha_beta(s: np.ndarray) -> tuple[complex, complex]:
    """z o S = alpha z + beta conj(z); the same formulas give the complex-linear and
    antilinear parts of any real 2x2 matrix."""
    s = np.asarray(s, dtype=float)
    alpha = 0.5 * ((s[0, 0] + s[1, 1]) + 1j * (s[1, 0] - s[0, 1]))
    beta = 0.5 * ((s[0, 0] - s[1, 1]) + 1j * (s[1, 0] + s[0, 1]))
    return complex(alpha), complex(beta)


def structure_velocity(m: np.ndarray, mu: complex) -> complex:
    """d/dt of the pulled-back structure exp(tM)^* mu at t = 0."""
    al, be = alpha_beta(m)
    return be + mu * (np.conj(al) - al) - mu**2 * np.conj(be)


def half_form_constant(m: np.ndarray, mu: complex) -> complex:
    """c/2 with D_X beta = (c/2) beta on the constant frame beta = (dw)^{1/2}, X = M p."""
    al, be = alpha_beta(m)
    a_x = al + mu * np.conj(be)
    b_x = be + mu * np.conj(al)
    return 0.5 * (a_x - np.conj(mu) * b_x) / (1 - abs(mu) ** 2)


# --- Fock spaces ------------------------------------------------------------------

def ladder(size: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, size, dtype=float)), 1)


def squeezed_vacuum(mu: complex, size: int) -> np.ndarray:
    mu = complex(mu)
    v = np.zeros(size, dtype=complex)
    v[0] = (1 - abs(mu) ** 2) ** 0.25
    r = -np.conj(mu)
    for n in range(2, size, 2):
        v[n] = v[n - 2] * r * math.sqrt((n - 1) / n)
    return v


def _raise(v: np.ndarray, mu: complex, scale: float) -> np.ndarray:
    out = np.zeros_like(v)
    n = np.arange(1, len(v))
    out[1:] += np.sqrt(n) * v[:-1]             # a^dag
    out[:-1] += mu * np.sqrt(n) * v[1:]        # mu a
    return out * scale


def squeezed_columns_recursive(mu: complex, size: int, ncols: int) -> np.ndarray:
    """b^dag recursion; exact algebra but unstable beyond a few dozen modes."""
    s = 1 / math.sqrt(1 - abs(mu) ** 2)
    cols = np.zeros((size, ncols), dtype=complex)
    cols[:, 0] = squeezed_vacuum(mu, size)
    for n in range(1, ncols):
        cols[:, n] = _raise(cols[:, n - 1], mu, s) / math.sqrt(n)
    return cols


def squeeze_parameter(mu: complex) -> complex:
    """xi with exp((conj(xi) a^2 - xi a^dag^2)/2) a exp(-...) = (a + conj(mu) a^dag)/sqrt(1-|mu|^2)."""
    mu = complex(mu)
    r = abs(mu)
    # atanh(r)/r first: dividing conj(mu) by a denormal r overflows
    ratio = 1.0 + r * r / 3 if r < 1e-6 else math.atanh(r) / r
    return complex(ratio * np.conj(mu))


def squeezed_columns(mu: complex, size: int, ncols: int) -> np.ndarray:
    """Columns S(mu)|n>, n < ncols, from the unitary squeeze operator on a Fock buffer.

    Buffer truncation only disturbs entries near the top of the buffer.
    """
    xi = squeeze_parameter(mu)
    a = ladder(size)
    gen = 0.5 * (np.conj(xi) * a @ a - xi * a.T @ a.T)       # anti-Hermitian
    w, v = np.linalg.eigh(1j * gen)
    return (v * np.exp(-1j * w)[None, :]) @ v[:ncols].conj().T


@dataclass(frozen=True)
class FockSpace:
    k: int
    mu: complex
    cutoff: int
    basis: np.ndarray
    tails: np.ndarray

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def dim_eff(self) -> int:
        return self.dim

    @property
    def window(self) -> int:
        """Number of leading modes inside the assertion window."""
        return int(math.floor(WINDOW_FRACTION * self.cutoff)) + 1


def _buffer(cutoff: int) -> int:
    return 2 * cutoff + 64


def required_cutoff(mu: complex, start: int = 8) -> int:
    d = max(start, 8)
    while d < 1 << 16:
        v = squeezed_vacuum(mu, _buffer(d))
        if np.sum(np.abs(v[d + 1:]) ** 2) < TAIL_TOL:
            return d
        d *= 2
    raise CutoffError("no admissible cutoff found")


def fock_space(k: int, mu: complex, cutoff: int) -> FockSpace:
    k, cutoff, mu = int(k), int(cutoff), complex(mu)
    if k < 1:
        raise ValueError("k must be positive")
    if cutoff < 8:
        raise ValueError("cutoff must be at least 8")
    if abs(mu) > 0.9:
        raise ValueError("|mu| must be at most 0.9")
    size = _buffer(cutoff)
    cols = squeezed_columns(mu, size, cutoff + 1)
    tails = np.sum(np.abs(cols[cutoff + 1:]) ** 2, axis=0)
    if tails[0] >= TAIL_TOL:
        need = required_cutoff(mu, cutoff)
        raise CutoffError(f"cutoff {cutoff} too small for mu={mu}: vacuum tail {tails[0]:.2e}; need D >= {need}")
    keep = int(np.argmax(tails >= TAIL_TOL)) if np.any(tails >= TAIL_TOL) else cutoff + 1
    q, r = np.linalg.qr(cols[: cutoff + 1, :keep])
    q = q * (np.diag(r) / np.abs(np.diag(r)))[None, :]
    q.setflags(write=False)
    return FockSpace(k, mu, cutoff, q, tails[:keep])


@dataclass(frozen=True)
class OperatorMatrix:
    source: object
    target: object
    m: np.ndarray
    info: dict | None = None


def opnorm(a: np.ndarray) -> float:
    return float(np.linalg.svd(a, compute_uv=False)[0]) if a.size else 0.0


# --- quantization ------------------------------------------------------------------

def weyl_matrix(f: QuadraticHamiltonian, k: int, cutoff: int) -> np.ndarray:
    """Weyl quantization of f on Fock modes 0..cutoff (exact entries)."""
    size = cutoff + 3
    a = ladder(size)
    ad = a.T
    xh = (a + ad) / math.sqrt(2 * k)
    yh = (ad - a) / (1j * math.sqrt(2 * k))
    w = 0.5 * (f.a * xh @ xh + f.b * (xh @ yh + yh @ xh) + f.c * yh @ yh)
    return w[: cutoff + 1, : cutoff + 1]


def toeplitz_shift(space: FockSpace, f: QuadraticHamiltonian) -> float:
    """<0_mu| Weyl(f) |0_mu>: the constant separating Pi f Pi from Weyl(f) for quadratics."""
    w = weyl_matrix(f, space.k, space.cutoff)
    v = space.basis[:, 0]
    return float(np.real(np.conj(v) @ w @ v))


def qm_op(space: FockSpace, f: QuadraticHamiltonian, corrected: bool = True) -> OperatorMatrix:
    """Pi Op_k(f) Pi (``corrected``) or Pi f Pi on the squeezed space.

    For quadratic f the Toeplitz operator is Weyl(f) + kappa, the projected prequantum
    operator is Weyl(f) - kappa (kappa = vacuum expectation of Weyl(f)), and D_X adds
    the constant (1/ik) c_X/2.
    """
    w = weyl_matrix(f, space.k, space.cutoff)
    kappa = toeplitz_shift(space, f)
    if corrected:
        shift = -kappa + (half_form_constant(f.flow_matrix, space.mu) / (1j * space.k)).real
    else:
        shift = kappa
    b = space.basis
    m = b.conj().T @ w @ b + shift * np.eye(space.dim)
    return OperatorMatrix(space, space, m, {"kappa": kappa})


# --- central extension ---------------------------------------------------------

@dataclass(frozen=True)
class ExtensionElement:
    """A linear symplectic map with a branch u of sqrt(alpha/|alpha|)."""
    flow: np.ndarray
    branch: complex

    def __post_init__(self):
        s = np.array(self.flow, dtype=float)
        if s.shape != (2, 2) or abs(np.linalg.det(s) - 1) > 1e-9:
            raise ValueError("flow must be a 2x2 matrix with determinant 1")
        s.setflags(write=False)
        object.__setattr__(self, "flow", s)
        object.__setattr__(self, "branch", complex(self.branch))
        if branch_defect(self) > 1e-9:
            raise ValueError("branch does not square to the line factor of the flow")

    @property
    def alpha(self) -> complex:
        return alpha_beta(self.flow)[0]

    @property
    def mu(self) -> complex:
        al, be = alpha_beta(self.flow)
        return be / al

    @property
    def sign(self) -> int:
        """+1 on the sheet continuous with the identity along the principal branch."""
        p = np.sqrt(self.alpha / abs(self.alpha))
        return 1 if abs(self.branch - p) <= abs(self.branch + p) else -1


def branch_defect(e: ExtensionElement) -> float:
    al = alpha_beta(e.flow)[0]
    return abs(e.branch**2 - al / abs(al))


def extension_identity() -> ExtensionElement:
    return ExtensionElement(np.eye(2), 1.0)


def composition_phase(e1: ExtensionElement, e2: ExtensionElement) -> complex:
    """Unit phase of zeta^{1/2}(0, mu_{S2^-1}, mu_{S1}).

    For n = 1 this is the principal root of w/|w| with w = 1 - mu_{S1} conj(nu),
    nu = mu_{S2^-1}; Re w > 0 so the contraction never leaves the principal sheet.
    """
    a_inv, b_inv = alpha_beta(np.linalg.inv(e2.flow))
    w = 1 - e1.mu * np.conj(b_inv / a_inv)
    return complex(np.sqrt(w / abs(w)))


def extension_compose(e1: ExtensionElement, e2: ExtensionElement) -> ExtensionElement:
    """(S1, u1)(S2, u2) = (S1 S2, u1 u2 * phase of zeta^{1/2}(0, mu_{S2^-1}, mu_{S1}))."""
    return ExtensionElement(e1.flow @ e2.flow, e1.branch * e2.branch * composition_phase(e1, e2))


def flow_element(f: QuadraticHamiltonian, t: float) -> ExtensionElement:
    """exp(t f) with the branch continued from 1 along the flow."""
    t = float(t)
    samples = max(4, int(math.ceil(256 * abs(t) / (2 * math.pi))))

    def phase(s):
        out = []
        for sv in np.atleast_1d(s):
            al = alpha_beta(f.flow(t * (1 - sv)))[0]
            out.append(al / abs(al))
        return np.array(out)

    _, root, _ = pc.track_sqrt(phase, samples=samples)
    return ExtensionElement(f.flow(t), root)


def rotation(t: float) -> ExtensionElement:
    return flow_element(QuadraticHamiltonian.oscillator(), t)


def random_element(rng: np.random.Generator, squeeze: float = 0.8) -> ExtensionElement:
    """Rotation by a random angle after a flow with |mu| <= squeeze."""
    mu = squeeze * np.sqrt(rng.uniform()) * np.exp(2j * np.pi * rng.uniform())
    # exp of the traceless symmetric generator whose flow pulls 0 back to mu
    r, th = math.atanh(abs(mu)), np.angle(mu)
    gen = r * np.array([[np.cos(th), np.sin(th)], [np.sin(th), -np.cos(th)]])
    s = expm(gen)
    al = alpha_beta(s)[0]
    squeeze_el = ExtensionElement(s, np.sqrt(al / abs(al)))
    return extension_compose(rotation(float(rng.uniform(0, 4 * np.pi))), squeeze_el)


# --- pull-back and Schroedinger evolution -----------------------------------------

def pullback_matrix(flow: np.ndarray, cutoff: int, ncols: int | None = None) -> np.ndarray:
    """Coefficients of the pulled-back basis sections e_n o S, n < ncols, in the mu=0 Fock basis.

    e_n o S spans the squeezed space of mu_S = beta/alpha with phase (alpha/|alpha|)^n.
    """
    al, be = alpha_beta(flow)
    ncols = cutoff + 1 if ncols is None else ncols
    size = _buffer(cutoff)
    cols = squeezed_columns(be / al, size, ncols)
    ph = (al / abs(al)) ** np.arange(ncols)
    full = cols * ph[None, :]
    tails = np.sum(np.abs(full[cutoff + 1:]) ** 2, axis=0)
    return full[: cutoff + 1], tails


def metaplectic_operator(e: ExtensionElement, cutoff: int, ncols: int) -> np.ndarray:
    """V = U(Psi) o Phi^*: branch times pulled-back basis, columns n < ncols."""
    cols, tails = pullback_matrix(e.flow, cutoff, ncols)
    if np.any(tails >= TAIL_TOL):
        raise CutoffError(f"flow excites modes beyond cutoff {cutoff}; enlarge the cutoff")
    return e.branch * cols


def schrodinger_vs_transport(k: int, f: QuadraticHamiltonian, t: float, cutoff: int,
                             window: int | None = None, return_parts: bool = False):
    """|| exp(i t k Q(f)) - V(Psi_t, Phi_t) || on the assertion window (mu_0 = 0).

    The window defaults to the leading 75% of modes; the flow must not push those
    modes past the cutoff.
    """
    space = fock_space(k, 0.0, cutoff)
    q = qm_op(space, f, corrected=True).m
    w = space.window if window is None else int(window)
    evals, evecs = np.linalg.eigh(q)
    u = (evecs * np.exp(1j * t * k * evals)[None, :]) @ evecs.conj().T
    e = flow_element(f, t)
    v = metaplectic_operator(e, cutoff, w)
    defect = opnorm(u[:, :w] - v)
    if return_parts:
        return defect, u[:, :w], v, e
    return defect


# --- connection, transport and curvature ----------------------------------------

def unit_frame_connection(mu: complex, dmu: complex) -> complex:
    """Connection coefficient of the unit-normalized half-form frame along dmu."""
    return (mu * np.conj(dmu) - np.conj(mu) * dmu) / (4 * (1 - abs(mu) ** 2))


def _bogoliubov(mu: complex, dmu: complex):
    """(u, v) with S^dag a S = u a + v a^dag, and their derivatives along dmu."""
    q = 1 - abs(mu) ** 2
    dre = (np.conj(mu) * dmu).real
    u, v = q**-0.5, -np.conj(mu) * q**-0.5
    du = dre * q**-1.5
    dv = -np.conj(dmu) * q**-0.5 - np.conj(mu) * dre * q**-1.5
    return u, v, du, dv


def squeeze_generator_coeffs(mu: complex, dmu: complex) -> tuple[complex, complex]:
    """(x, w) with S^dag dS = x a^2 - conj(x) a^dag^2 + w a^dag a + scalar.

    From d(S^dag a S) = [S^dag a S, S^dag dS]: u w - 2 v x = du, -2 u conj(x) - v w = dv.
    """
    u, v, du, dv = _bogoliubov(complex(mu), complex(dmu))
    # unknowns x = x1 + i x2, w = i w2
    rows, rhs = [], []
    for expr, target in (((lambda x1, x2, w2: u * 1j * w2 - 2 * v * (x1 + 1j * x2)), du),
                         ((lambda x1, x2, w2: -2 * u * (x1 - 1j * x2) - v * 1j * w2), dv)):
        cols = [expr(1, 0, 0), expr(0, 1, 0), expr(0, 0, 1)]
        rows.append([c.real for c in cols])
        rows.append([c.imag for c in cols])
        rhs.extend([target.real, target.imag])
    sol, *_ = np.linalg.lstsq(np.array(rows, dtype=float), np.array(rhs, dtype=float), rcond=None)
    return complex(sol[0], sol[1]), 1j * sol[2]


def _generator(mu, dmu, ncols, half_form):
    """Projected connection in the squeezed basis along dmu, vacuum Berry phase removed."""
    x, w = squeeze_generator_coeffs(mu, dmu)
    a = ladder(ncols + 2)
    om = x * a @ a - np.conj(x) * a.T @ a.T + w * a.T @ a
    om = om[:ncols, :ncols]
    if half_form:
        om = om + unit_frame_connection(mu, dmu) * np.eye(ncols)
    return om


def _rk4(vertices, ncols, half_form, steps_per_unit):
    c = np.eye(ncols, dtype=complex)
    for ma, mb in zip(vertices, vertices[1:]):
        d = mb - ma
        n = max(32, int(math.ceil(steps_per_unit * abs(d))))
        h = 1.0 / n
        g0 = _generator(ma, d, ncols, half_form)
        for i in range(n):
            s = i * h
            g1 = _generator(ma + (s + h / 2) * d, d, ncols, half_form)
            g2 = _generator(ma + (s + h) * d, d, ncols, half_form)
            k1 = -g0 @ c
            k2 = -g1 @ (c + h / 2 * k1)
            k3 = -g1 @ (c + h / 2 * k2)
            k4 = -g2 @ (c + h * k3)
            c = c + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            g0 = g2
    return c


def bargmann_transport(vertices, cutoff: int, half_form: bool = True, steps_per_unit: float = 256.0,
                       window: int | None = None):
    """Transport along a polygon in the disk, in the squeezed bases (first cutoff+1 modes).

    Returns (matrix, ODE error estimate from one step halving over the leading
    ``window`` modes; the top of the truncated block is not resolved).
    """
    verts = [complex(v) for v in vertices]
    for v in verts:
        if abs(v) >= 1:
            raise pc.SiegelError("path leaves the Siegel disk")
    ncols = cutoff + 1
    w = ncols if window is None else int(window)
    c1 = _rk4(verts, ncols, half_form, steps_per_unit)
    c2 = _rk4(verts, ncols, half_form, 2 * steps_per_unit)
    return c2, float(np.abs(c2 - c1)[:w, :w].max())


def loop_curvature(center: complex, eta: complex, mu_dir: complex, eps: float, cutoff: int,
                   half_form: bool = True, steps_per_unit: float = 256.0, window: int | None = None):
    """(Hol - I)/eps^2 around center -> +eps mu -> +eps(mu+eta) -> +eps eta, tending to R(eta, mu)."""
    c = complex(center)
    verts = [c, c + eps * mu_dir, c + eps * (mu_dir + eta), c + eps * eta, c]
    hol, err = bargmann_transport(verts, cutoff, half_form, steps_per_unit, window)
    return (hol - np.eye(hol.shape[0])) / eps**2, err / eps**2


def curvature_richardson(center, eta, mu_dir, eps, cutoff, half_form=True, steps_per_unit=256.0,
                         window=None):
    """2 R(eps/2) - R(eps), both estimates, and the summed ODE error estimate."""
    r1, e1 = loop_curvature(center, eta, mu_dir, eps, cutoff, half_form, steps_per_unit, window)
    r2, e2 = loop_curvature(center, eta, mu_dir, eps / 2, cutoff, half_form, steps_per_unit, window)
    return 2 * r2 - r1, r1, r2, e1 + e2


def commutator_curvature_identity(k: int, f: QuadraticHamiltonian, g: QuadraticHamiltonian,
                                  cutoff: int, eps: float = 0.1, steps_per_unit: float = 256.0) -> dict:
    """Residual of ik[Q f, Q g] - Q{f,g} = (ik)^{-1} R(eta_f, eta_g) on the window at mu = 0.

    The error bar combines the Richardson spread, the ODE estimate and a roundoff floor
    proportional to the operator scale.
    """
    space = fock_space(k, 0.0, cutoff)
    w = space.window
    qf, qg = qm_op(space, f).m, qm_op(space, g).m
    lhs = 1j * k * (qf @ qg - qg @ qf) - qm_op(space, poisson_bracket(f, g)).m
    eta = structure_velocity(f.flow_matrix, 0.0)
    mu = structure_velocity(g.flow_matrix, 0.0)
    rich, r1, r2, ode = curvature_richardson(0.0, eta, mu, eps, cutoff, True, steps_per_unit, w)
    rhs = rich / (1j * k)
    lhs_w, rhs_w = lhs[:w, :w], rhs[:w, :w]
    residual = opnorm(lhs_w - rhs_w)
    floor = 64 * np.finfo(float).eps * k * max(opnorm(qf[:w, :w]), opnorm(qg[:w, :w])) ** 2
    bar = (opnorm((r2 - r1)[:w, :w]) + ode) / k + floor
    return {"residual": float(residual), "error_bar": float(bar), "lhs_norm": opnorm(lhs_w),
            "rhs_norm": opnorm(rhs_w), "eta": complex(eta), "mu": complex(mu),
            "roundoff_floor": float(floor)}
