"""Theta-function quantization of the torus R^2/Z^2.

Conventions
-----------
* Symplectic form ``2*pi dx^dy`` (total area 1, so the level-k space has dimension k).
* Prequantum connection on L^k: ``d - 2*pi*i*k*x dy``.  Sections are functions on the
  fundamental domain with ``s(x+1, y) = exp(2*pi*i*k*y) s(x, y)`` and ``s(x, y+1) = s(x, y)``.
* Complex structure tau (Im tau > 0) with holomorphic one-form ``dz = dx + tau dy``.
  Holomorphic sections solve ``(tau d_x - d_y + 2*pi*i*k*x) s = 0``.
* Level-k basis: ``s_m(x, y) = sum_l g(x - m/k - l) exp(2*pi*i*(m + l*k)*y)`` with
  ``g(u) = exp(-pi*i*k*u**2/tau)``, m = 0..k-1.
* Hamiltonian fields: ``iota_X omega = -df``, so ``X = (-f_y, f_x)/(2*pi)`` and
  ``{f, g} = (f_x g_y - f_y g_x)/(2*pi)``.
* Half-form frame ``(dz)^{1/2}``; its norm squared is sqrt(Im tau).

Every section is a sum over l of an x-factor times a pure Fourier mode in y, so all
trapezoid inner products are evaluated in factorized form (same sums, fewer flops).
The dense N^2 x k sample matrix is materialized only on request.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import pointwise_core as pc

GRAM_COND_LIMIT = 1e8
STEPS_PER_PATH = 256
MIN_STEPS = 32
ODE_TOL = 1e-9
MAX_HALVINGS = 6


class ResolutionError(ValueError):
    pass


class IntegrationError(RuntimeError):
    pass


def grid_size(k: int) -> int:
    return max(4 * int(k), 32)


@dataclass(frozen=True)
class TorusStructure:
    tau: complex

    def __post_init__(self):
        tau = complex(self.tau)
        if not tau.imag > 0:
            raise ValueError(f"tau must lie in the upper half-plane, got {tau}")
        object.__setattr__(self, "tau", tau)

    @property
    def mu(self) -> complex:
        return pc.cayley_to_disk(self.tau)

    @property
    def triple(self) -> pc.HalfFormTriple:
        """Frame (dz)^{1/2} expressed against the canonical disk frame."""
        return pc.HalfFormTriple(pc.ComplexStructure(self.mu), pc.dz_in_canonical_frame(self.tau))

    @property
    def halfform_norm2(self) -> float:
        return float(pc.halfform_norm2(self.triple))


def _tau(t) -> complex:
    return t.tau if isinstance(t, TorusStructure) else TorusStructure(t).tau


# --- band-limited functions ---------------------------------------------------

class TrigPoly:
    """Finite Fourier series sum c[p, q] exp(2 pi i (p x + q y))."""

    def __init__(self, coeffs: dict):
        self.coeffs = {(int(p), int(q)): complex(c) for (p, q), c in coeffs.items() if c != 0}

    @classmethod
    def cos_x(cls, amp=1.0):
        return cls({(1, 0): amp / 2, (-1, 0): amp / 2})

    @classmethod
    def cos_y(cls, amp=1.0):
        return cls({(0, 1): amp / 2, (0, -1): amp / 2})

    @classmethod
    def constant(cls, c):
        return cls({(0, 0): c})

    @classmethod
    def from_samples(cls, samples: np.ndarray, tol: float = 1e-12) -> "TrigPoly":
        """Exact Fourier content of grid samples; raises if not band-limited."""
        samples = np.asarray(samples)
        n = samples.shape[0]
        hat = np.fft.fft2(samples) / n**2
        freqs = np.fft.fftfreq(n, d=1.0 / n).astype(int)
        scale = max(np.abs(hat).max(), 1e-300)
        p_idx, q_idx = np.nonzero(np.abs(hat) > tol * scale)
        band = n // 4
        if np.any(np.abs(freqs[p_idx]) >= band) or np.any(np.abs(freqs[q_idx]) >= band):
            raise ValueError("function is not band-limited on this grid (unsupported input)")
        return cls({(freqs[p], freqs[q]): hat[p, q] for p, q in zip(p_idx, q_idx)})

    def __add__(self, other):
        out = dict(self.coeffs)
        for key, c in other.coeffs.items():
            out[key] = out.get(key, 0) + c
        return TrigPoly(out)

    def __sub__(self, other):
        return self + other.scale(-1)

    def __mul__(self, other):
        out = {}
        for (p1, q1), c1 in self.coeffs.items():
            for (p2, q2), c2 in other.coeffs.items():
                key = (p1 + p2, q1 + q2)
                out[key] = out.get(key, 0) + c1 * c2
        return TrigPoly(out)

    def scale(self, s):
        return TrigPoly({key: s * c for key, c in self.coeffs.items()})

    def dx(self):
        return TrigPoly({(p, q): 2j * np.pi * p * c for (p, q), c in self.coeffs.items()})

    def dy(self):
        return TrigPoly({(p, q): 2j * np.pi * q * c for (p, q), c in self.coeffs.items()})

    def bandwidth(self) -> int:
        return max((max(abs(p), abs(q)) for p, q in self.coeffs), default=0)

    def is_real(self, tol=1e-14) -> bool:
        return all(abs(c - np.conj(self.coeffs.get((-p, -q), 0))) <= tol
                   for (p, q), c in self.coeffs.items())

    def __call__(self, x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast(x, y).shape, dtype=complex)
        for (p, q), c in self.coeffs.items():
            out += c * np.exp(2j * np.pi * (p * x + q * y))
        return out

    def samples(self, n: int) -> np.ndarray:
        g = np.arange(n) / n
        return self(g[:, None], g[None, :])


def poisson_bracket(f: TrigPoly, g: TrigPoly) -> TrigPoly:
    return (f.dx() * g.dy() - f.dy() * g.dx()).scale(1 / (2 * np.pi))


def hamiltonian_field(f: TrigPoly):
    """(X^x, X^y) of f for iota_X omega = -df."""
    return f.dy().scale(-1 / (2 * np.pi)), f.dx().scale(1 / (2 * np.pi))


def half_form_coefficient(f: TrigPoly, tau) -> TrigPoly:
    """c/2 where c is the dz-coefficient of d(dz(X_f)); D_X acts on the frame (dz)^{1/2} by c/2."""
    tau = _tau(tau)
    xx, xy = hamiltonian_field(f)
    h = xx + xy.scale(tau)
    # P dx + Q dy = c dz + c' dzbar with dz = dx + tau dy
    c = (h.dy() - h.dx().scale(np.conj(tau))).scale(1 / (tau - np.conj(tau)))
    return c.scale(0.5)


# --- theta factors ---------------------------------------------------------------

@dataclass(frozen=True)
class _Factors:
    k: int
    tau: complex
    n: int
    lvals: np.ndarray   # (nl,)
    u: np.ndarray       # (k, nl, N): x - m/k - l
    g: np.ndarray       # (k, nl, N)

    def nu(self):
        m = np.arange(self.k)[:, None]
        return m + self.lvals[None, :] * self.k


def _lattice_range(k: int, tau: complex) -> int:
    decay = math.pi * k * tau.imag / abs(tau) ** 2     # |g(u)| = exp(-decay u^2)
    return int(math.ceil(math.sqrt(40.0 / decay))) + 1


def _factors(k: int, tau: complex, n: int) -> _Factors:
    L = _lattice_range(k, tau)
    lvals = np.arange(-L, L + 1)
    x = np.arange(n) / n
    m = np.arange(k)
    u = x[None, None, :] - m[:, None, None] / k - lvals[None, :, None]
    g = np.exp(-1j * np.pi * k * u**2 / tau)
    return _Factors(k, tau, n, lvals, u, g)


def _pair(fa: _Factors, ga: np.ndarray, fb: _Factors, gb: np.ndarray, hx=None, q: int = 0) -> np.ndarray:
    """(1/N^2) sum_grid conj(A_m') h(x) e^{2 pi i q y} B_m for factorized sections.

    ``ga``/``gb`` are x-factors shaped (k, nl, N) attached to the y-modes of ``fa``/``fb``.
    The y-sum is exact: it selects frequency matches modulo N.
    """
    k, n = fa.k, fa.n
    out = np.zeros((k, k), dtype=complex)
    gbh = gb if hx is None else gb * hx[None, None, :]
    gac = np.conj(ga)
    for ia, la in enumerate(fa.lvals):
        for ib, lb in enumerate(fb.lvals):
            d = (q - (la - lb) * k) % n
            for delta in {d, d - n}:
                if -k < delta < k:
                    m = np.arange(max(0, -delta), min(k, k - delta))
                    vals = np.einsum("ij,ij->i", gac[m + delta, ia, :], gbh[m, ib, :]) / n
                    out[m + delta, m] += vals
    return out


def _pair_trig(fa, ga, fb, gb, f: TrigPoly) -> np.ndarray:
    x = np.arange(fa.n) / fa.n
    out = np.zeros((fa.k, fa.k), dtype=complex)
    for (p, q), c in f.coeffs.items():
        out += c * _pair(fa, ga, fb, gb, hx=np.exp(2j * np.pi * p * x), q=q)
    return out


def _dense(f: _Factors, gx: np.ndarray) -> np.ndarray:
    """N^2 x k samples, row index i*N + j for (x_i, y_j)."""
    y = np.arange(f.n) / f.n
    modes = np.exp(2j * np.pi * f.nu()[:, :, None] * y[None, None, :])   # (k, nl, N)
    cube = np.einsum("mli,mlj->ijm", gx, modes)
    return cube.reshape(f.n * f.n, f.k)


def theta_basis(k: int, tau, grid: int | None = None) -> np.ndarray:
    """Raw level-k theta sections sampled on the grid (N^2 x k)."""
    k = int(k)
    if k < 1:
        raise ValueError("k must be positive")
    n = grid_size(k) if grid is None else int(grid)
    if n < 4 * k:
        raise ResolutionError(f"grid {n} below the resolution rule 4k = {4 * k}")
    f = _factors(k, _tau(tau), n)
    return _dense(f, f.g)


# --- quantum spaces ----------------------------------------------------------------

class QuantumSpace:
    """Orthonormal basis of the level-k holomorphic sections for one tau.

    The orthonormal basis is ``theta @ inv(L)^H`` where ``L L^H`` is the weighted
    quadrature Gram matrix (Gram-Schmidt through a Cholesky factor).
    """

    def __init__(self, k: int, tau, half_form: bool = True, grid: int | None = None):
        self.k = int(k)
        self.structure = tau if isinstance(tau, TorusStructure) else TorusStructure(tau)
        self.tau = self.structure.tau
        self.half_form = bool(half_form)
        self.grid = grid_size(self.k) if grid is None else int(grid)
        if self.k < 1:
            raise ValueError("k must be positive")
        if self.grid < 4 * self.k:
            raise ResolutionError(f"grid {self.grid} below the resolution rule 4k = {4 * self.k}")
        self._f = _factors(self.k, self.tau, self.grid)
        raw = _pair(self._f, self._f.g, self._f, self._f.g)
        raw = 0.5 * (raw + raw.conj().T)
        ev = np.linalg.eigvalsh(raw)
        self.gram_cond = float(ev[-1] / ev[0]) if ev[0] > 0 else math.inf
        self.rank = int(np.sum(ev > 1e-10 * ev[-1]))
        if self.gram_cond >= GRAM_COND_LIMIT or self.rank != self.k:
            raise ResolutionError(f"theta Gram matrix degenerate (cond {self.gram_cond:.3g}, rank {self.rank})")
        self.weight = self.structure.halfform_norm2 if self.half_form else 1.0
        self.raw_gram = raw
        self.chol = np.linalg.cholesky(self.weight * raw)
        self._basis = None

    @property
    def dim(self) -> int:
        return self.k

    def coords(self, raw_matrix: np.ndarray) -> np.ndarray:
        """Raw-coefficient matrix -> orthonormal coordinates on the left."""
        return self.chol.conj().T @ raw_matrix

    @property
    def basis(self) -> np.ndarray:
        if self._basis is None:
            theta = _dense(self._f, self._f.g)
            b = np.linalg.solve(self.chol.conj(), theta.T).T   # theta @ inv(L)^H
            b.setflags(write=False)
            self._basis = b
        return self._basis

    def inner(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Weighted trapezoid inner products of sample columns."""
        return self.weight * (a.conj().T @ b) / self.grid**2

    def dense_derivative(self, which: str) -> np.ndarray:
        """Covariant derivative samples of the orthonormal basis: 'x' or 'y'."""
        f = self._f
        coef = -2j * np.pi * self.k * f.u
        if which == "x":
            coef = coef / self.tau
        elif which != "y":
            raise ValueError(which)
        raw = _dense(f, coef * f.g)
        return np.linalg.solve(self.chol.conj(), raw.T).T


@lru_cache(maxsize=64)
def cached_space(k: int, tau: complex, half_form: bool, grid: int | None = None) -> QuantumSpace:
    return QuantumSpace(k, tau, half_form, grid)


@dataclass(frozen=True)
class OperatorMatrix:
    source: object
    target: object
    m: np.ndarray
    info: dict | None = None

    def __post_init__(self):
        m = np.asarray(self.m)
        if m.shape != (self.target.dim, self.source.dim):
            raise ValueError("operator shape does not match its endpoints")


def opnorm(a: np.ndarray) -> float:
    return float(np.linalg.svd(a, compute_uv=False)[0]) if a.size else 0.0


def polar_unitary(t: np.ndarray) -> np.ndarray:
    w, s, vh = np.linalg.svd(t)
    if s[-1] <= 1e-12 * s[0]:
        raise ValueError("operator is rank-deficient (degenerate polar decomposition)")
    return w @ vh


# --- Psi and FIOs -------------------------------------------------------------------

def torus_psi_scalar(tau_a, tau_b) -> complex:
    """Psi(dz_a) = c dz_b from Psi(alpha) ^ conj(beta) = alpha ^ conj(beta), beta in the source line."""
    ta, tb = _tau(tau_a), _tau(tau_b)
    return (np.conj(ta) - ta) / (np.conj(ta) - tb)


def torus_zeta(tau_a, tau_b, tau_c) -> complex:
    return torus_psi_scalar(tau_a, tau_c) / (torus_psi_scalar(tau_a, tau_b) * torus_psi_scalar(tau_b, tau_c))


def torus_morphism(tau_a, tau_b) -> pc.HalfFormMorphism:
    """The morphism (dz_a)^{1/2} -> sigma (dz_b)^{1/2} continued from 1 along the segment."""
    ta, tb = _tau(tau_a), _tau(tau_b)
    ca = np.conj(ta)
    _, root, _ = pc.track_sqrt(lambda s: (ca - ta) / (ca - (ta + (1 - np.asarray(s)) * (tb - ta))))
    return pc.HalfFormMorphism(TorusStructure(ta).triple, TorusStructure(tb).triple, root)


def path_morphism_scalar(path: "ModuliPath") -> complex:
    """sigma with sigma^2 = Psi(tau_start, tau_end), continued from 1 along the path."""
    taus = np.array(path.taus())
    ta = taus[0]
    if len(taus) == 1:
        return 1.0 + 0j
    seg = np.abs(np.diff(taus))
    total = seg.sum()
    if total == 0:
        return 1.0 + 0j
    knots = np.concatenate([[0.0], np.cumsum(seg) / total])

    def fn(s):
        # s = 1 at the start of the path, s = 0 at its end
        pos = np.interp(1 - np.asarray(s), knots, taus.real) + 1j * np.interp(1 - np.asarray(s), knots, taus.imag)
        return (np.conj(ta) - ta) / (np.conj(ta) - pos)

    _, root, _ = pc.track_sqrt(fn, samples=max(64, 16 * len(taus)))
    return complex(root)


def overlap(frm: QuantumSpace, to: QuantumSpace) -> np.ndarray:
    """Projection of the unmodified sections of ``frm`` onto ``to`` in orthonormal coordinates."""
    if frm.k != to.k or frm.grid != to.grid:
        raise ValueError("spaces must share k and grid")
    raw = _pair(to._f, to._f.g, frm._f, frm._f.g)
    # <e^to, e^from> with e = theta inv(L)^H
    left = np.linalg.solve(to.chol, raw)
    return np.linalg.solve(frm.chol.conj(), left.T).T


def fio_unitary(frm: QuantumSpace, to: QuantumSpace, morphism_scalar: complex = 1.0) -> OperatorMatrix:
    """Multiply by the half-form morphism, project, and take the unitary polar factor."""
    if frm.half_form != to.half_form:
        raise ValueError("both spaces must agree on half-form inclusion")
    t = overlap(frm, to)
    if frm.half_form:
        expected = torus_psi_scalar(frm.tau, to.tau)
        if abs(morphism_scalar**2 - expected) > 1e-10 * abs(expected):
            raise ValueError("morphism scalar does not square to the Psi factor")
        # (dz_from)^{1/2} -> sigma (dz_to)^{1/2}: weights differ by |s_to|^2
        t = morphism_scalar * to.weight * t
    else:
        t = t * to.weight
    u = polar_unitary(t)
    return OperatorMatrix(frm, to, u, {"unitarity_defect": opnorm(u.conj().T @ u - np.eye(u.shape[1]))})


# --- Toeplitz operators ------------------------------------------------------------

def _as_trig(space: QuantumSpace, f) -> TrigPoly:
    if isinstance(f, TrigPoly):
        if f.bandwidth() >= space.grid // 4:
            raise ValueError("function is not band-limited on this grid (unsupported input)")
        return f
    return TrigPoly.from_samples(f)


def toeplitz(space: QuantumSpace, f, corrected: bool = False) -> OperatorMatrix:
    """Pi f Pi, or Pi Op_k(f) Pi with Op_k(f) = f + (1/ik)(nabla_X + D_X) when ``corrected``.

    ``f`` is a TrigPoly or an N x N sample grid.  The plain variant accepts any samples.
    """
    if not corrected:
        if isinstance(f, TrigPoly):
            samples = f.samples(space.grid)
        else:
            samples = np.asarray(f)
            if samples.shape != (space.grid, space.grid):
                raise ValueError("samples must match the space grid")
        b = space.basis
        m = space.inner(b, samples.reshape(-1)[:, None] * b)
        return OperatorMatrix(space, space, m)
    tp = _as_trig(space, f)
    k = space.k
    xx, xy = hamiltonian_field(tp)
    mult = tp + half_form_coefficient(tp, space.tau).scale(1 / (1j * k)) if space.half_form else tp
    sp = space._f
    raw = _pair_trig(sp, sp.g, sp, sp.g, mult)
    dgx = (-2j * np.pi * k / space.tau) * sp.u * sp.g
    dgy = (-2j * np.pi * k) * sp.u * sp.g
    raw += (_pair_trig(sp, sp.g, sp, dgx, xx) + _pair_trig(sp, sp.g, sp, dgy, xy)) / (1j * k)
    m = _sandwich(space, raw)
    return OperatorMatrix(space, space, m)


def _sandwich(space: QuantumSpace, raw: np.ndarray) -> np.ndarray:
    # weighted raw matrix -> orthonormal coordinates: inv(L) (w raw) inv(L)^H
    left = np.linalg.solve(space.chol, space.weight * raw)
    return np.linalg.solve(space.chol.conj(), left.T).T


def toeplitz_plain_factorized(space: QuantumSpace, f: TrigPoly) -> np.ndarray:
    """Pi f Pi through the factorized quadrature (same sums as the dense route)."""
    sp = space._f
    return _sandwich(space, _pair_trig(sp, sp.g, sp, sp.g, f))


def commutator_defect(space: QuantumSpace, f: TrigPoly, g: TrigPoly, corrected: bool = True) -> float:
    """|| ik [Q(f), Q(g)] - Q({f, g}) || in operator norm."""
    qf = toeplitz(space, f, corrected).m
    qg = qf if f is g else toeplitz(space, g, corrected).m
    qfg = toeplitz(space, poisson_bracket(f, g), corrected).m
    return opnorm(1j * space.k * (qf @ qg - qg @ qf) - qfg)


# --- connection and transport ----------------------------------------------------

@dataclass(frozen=True)
class ModuliPath:
    samples: tuple
    times: tuple

    def __post_init__(self):
        s = tuple(TorusStructure(t) if not isinstance(t, TorusStructure) else t for t in self.samples)
        t = tuple(float(v) for v in self.times)
        if len(s) != len(t) or len(s) < 1:
            raise ValueError("samples and times must match")
        if any(b <= a for a, b in zip(t, t[1:])) or t[0] < 0 or t[-1] > 1:
            raise ValueError("times must be strictly increasing in [0, 1]")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "times", t)

    @classmethod
    def segment(cls, tau_a, tau_b):
        return cls((tau_a, tau_b), (0.0, 1.0))

    @classmethod
    def polygon(cls, vertices):
        n = len(vertices)
        return cls(tuple(vertices), tuple(np.linspace(0.0, 1.0, n)))

    def taus(self):
        return [s.tau for s in self.samples]

    def length(self) -> float:
        t = self.taus()
        return float(sum(abs(b - a) for a, b in zip(t, t[1:])))


def _generator(k: int, n: int, tau: complex, dtau: complex, half_form: bool) -> np.ndarray:
    """A with c' = -A c for raw theta coordinates along tau' = dtau."""
    f = _factors(k, tau, n)
    gram = _pair(f, f.g, f, f.g)
    dg = (1j * np.pi * k / tau**2) * f.u**2 * f.g
    a = np.linalg.solve(gram, _pair(f, f.g, f, dg)) * dtau
    if half_form:
        # frame (dz)^{1/2}: nabla s = dtau / (2 (tau - conj tau)) s
        a = a + (dtau / (2 * (tau - np.conj(tau)))) * np.eye(k)
    return a


def _rk4_segment(k, n, ta, tb, half_form, steps, dtype=complex):
    c = np.eye(k, dtype=dtype)
    d = tb - ta
    h = 1.0 / steps
    cache = {}

    def gen(s):
        key = round(s * 2 * steps)
        if key not in cache:
            cache[key] = _generator(k, n, ta + s * d, d, half_form).astype(dtype)
        return cache[key]

    for i in range(steps):
        s = i * h
        a0, a1, a2 = gen(s), gen(s + h / 2), gen(s + h)
        k1 = -a0 @ c
        k2 = -a1 @ (c + (h / 2) * k1)
        k3 = -a1 @ (c + (h / 2) * k2)
        k4 = -a2 @ (c + h * k3)
        c = c + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        cache.pop(round(s * 2 * steps), None)
    return c


def _raw_transport(path: ModuliPath, k: int, half_form: bool, grid: int, scale: int, dtype=complex):
    taus = path.taus()
    total = path.length()
    c = np.eye(k, dtype=dtype)
    for ta, tb in zip(taus, taus[1:]):
        if ta == tb:
            continue
        steps = max(MIN_STEPS, int(math.ceil(STEPS_PER_PATH * abs(tb - ta) / total))) * scale
        c = _rk4_segment(k, grid, ta, tb, half_form, steps, dtype) @ c
    return c


def transport(path: ModuliPath, k: int, half_form: bool = True, grid: int | None = None,
              extended: bool = False) -> OperatorMatrix:
    """Parallel transport of the projected connection, in orthonormal coordinates.

    RK4 at 1/256 of the path length (at least 32 steps per segment); the step is halved
    until two successive resolutions agree to ODE_TOL.  ``extended`` integrates in
    long-double arithmetic.  The result is re-unitarized by its polar factor; the
    pre-polar matrix and its unitarity defect are kept in ``info``.
    """
    k = int(k)
    n = grid_size(k) if grid is None else int(grid)
    taus = path.taus()
    a = cached_space(k, taus[0], half_form, n)
    b = cached_space(k, taus[-1], half_form, n)
    if path.length() == 0:
        eye = np.eye(k, dtype=complex)
        return OperatorMatrix(a, b, eye, {"pre_polar": eye, "unitarity_defect": 0.0, "ode_error": 0.0, "steps_scale": 1})
    dtype = np.clongdouble if extended else complex
    scale = 1
    prev = _raw_transport(path, k, half_form, n, scale, dtype)
    for _ in range(MAX_HALVINGS):
        scale *= 2
        cur = _raw_transport(path, k, half_form, n, scale, dtype)
        err = float(np.abs(cur - prev).max())
        if err <= ODE_TOL:
            break
        prev = cur
    else:
        raise IntegrationError("step rejection overflow in transport ODE")
    raw = prev.astype(complex)
    pre = b.chol.conj().T @ raw @ np.linalg.inv(a.chol.conj().T)
    defect = opnorm(pre.conj().T @ pre - np.eye(k))
    return OperatorMatrix(a, b, polar_unitary(pre),
                          {"pre_polar": pre, "unitarity_defect": defect, "ode_error": err,
                           "steps_scale": scale // 2})


def loop_path(center, eta: complex, mu_dir: complex, eps: float) -> ModuliPath:
    """Parallelogram center -> +eps*mu -> +eps*(mu+eta) -> +eps*eta -> center.

    With this orientation (Hol - I)/eps^2 tends to R(eta, mu) for R = [nabla_eta, nabla_mu].
    """
    c = _tau(center)
    verts = [c, c + eps * mu_dir, c + eps * (mu_dir + eta), c + eps * eta, c]
    for v in verts:
        TorusStructure(v)
    return ModuliPath.polygon(verts)


def loop_curvature(center, eta: complex, mu_dir: complex, eps: float, k: int,
                   half_form: bool = True, grid: int | None = None, extended: bool = False) -> OperatorMatrix:
    """(Hol - I)/eps^2 around the eps-parallelogram spanned by eta and mu_dir."""
    path = loop_path(center, eta, mu_dir, eps)
    hol = transport(path, k, half_form, grid, extended)
    pre = hol.info["pre_polar"]
    est = (pre - np.eye(k)) / eps**2
    return OperatorMatrix(hol.source, hol.target, est,
                          {"ode_error": hol.info["ode_error"], "eps": eps,
                           "unitarity_defect": hol.info["unitarity_defect"]})


def curvature_richardson(center, eta, mu_dir, eps, k, half_form=True, grid=None, extended=False):
    """First-order Richardson 2 R(eps/2) - R(eps) and the error bar |R(eps/2) - R(eps)|.

    The error bar also carries the ODE estimate scaled by 1/eps^2.
    """
    r1 = loop_curvature(center, eta, mu_dir, eps, k, half_form, grid, extended)
    r2 = loop_curvature(center, eta, mu_dir, eps / 2, k, half_form, grid, extended)
    rich = 2 * r2.m - r1.m
    err = opnorm(r2.m - r1.m) + (r1.info["ode_error"] / eps**2 + r2.info["ode_error"] / (eps / 2) ** 2)
    return rich, err
