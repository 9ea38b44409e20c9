"""Linear algebra of compatible positive complex structures.

Structures are points ``mu`` of the Siegel disk (complex symmetric, ``I - mu mu^*``
positive definite) relative to a fixed base structure.  The canonical frame of the
``(n, 0)`` line of ``mu`` is the wedge of the forms ``theta^i + (mu theta_bar)^i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BOUNDARY_MARGIN = 1e-8
DEFAULT_PATH_SAMPLES = 64
MAX_PATH_SAMPLES = 1 << 16


class SiegelError(ValueError):
    """Invalid or numerically degenerate input."""


class CompositionError(ValueError):
    """Morphisms whose endpoints do not match."""


class BranchResolutionError(RuntimeError):
    """Square-root tracking could not resolve the branch."""


@dataclass(frozen=True)
class SymplecticSpace:
    n: int
    omega: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if int(self.n) < 1:
            raise SiegelError("dimension must be positive")
        om = self.omega
        if om is None:
            om = np.block([[np.zeros((self.n, self.n)), np.eye(self.n)],
                           [-np.eye(self.n), np.zeros((self.n, self.n))]])
        om = np.asarray(om, dtype=float)
        if om.shape != (2 * self.n, 2 * self.n):
            raise SiegelError("omega must be 2n x 2n")
        if not np.allclose(om, -om.T, atol=1e-14):
            raise SiegelError("omega must be antisymmetric")
        if abs(np.linalg.det(om)) < 1e-12:
            raise SiegelError("omega must be invertible")
        object.__setattr__(self, "omega", om)


@dataclass(frozen=True)
class ComplexStructure:
    mu: np.ndarray

    def __post_init__(self):
        mu = np.atleast_2d(np.asarray(self.mu, dtype=complex))
        if mu.shape[0] != mu.shape[1]:
            raise SiegelError("mu must be square")
        mu = 0.5 * (mu + mu.T)
        if np.linalg.norm(mu, 2) >= 1.0 - BOUNDARY_MARGIN:
            raise SiegelError("structure outside the Siegel disk (norm >= 1 - 1e-8)")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)

    @property
    def n(self) -> int:
        return self.mu.shape[0]

    @classmethod
    def base(cls, n: int) -> "ComplexStructure":
        return cls(np.zeros((n, n), dtype=complex))


@dataclass(frozen=True)
class ZetaBranch:
    zeta: complex
    sqrt_zeta: complex
    path_samples: int


@dataclass(frozen=True)
class HalfFormTriple:
    """A structure with a frame of the half-form line.

    ``frame`` is the value of the squaring map on the chosen generator, measured
    in the canonical frame of the (n, 0) line.
    """
    j: ComplexStructure
    frame: complex = 1.0

    def __post_init__(self):
        if self.frame == 0:
            raise SiegelError("frame must be nonzero")
        object.__setattr__(self, "frame", complex(self.frame))


@dataclass(frozen=True)
class HalfFormMorphism:
    source: HalfFormTriple
    target: HalfFormTriple
    scalar: complex


def _mu(s) -> np.ndarray:
    return s.mu if isinstance(s, ComplexStructure) else np.atleast_2d(np.asarray(s, dtype=complex))


def pair_det(a, b) -> complex:
    """det [[I, conj(mu_a)], [mu_b, I]] = det(I - mu_b conj(mu_a))."""
    ma, mb = _mu(a), _mu(b)
    n = ma.shape[0]
    return complex(np.linalg.det(np.eye(n) - mb @ ma.conj()))


def _pair_det_batch(ma, mb) -> np.ndarray:
    # ma, mb: (..., n, n)
    n = ma.shape[-1]
    return np.linalg.det(np.eye(n) - mb @ np.conj(ma))


def frame_norm2(a) -> float:
    """Squared norm of the canonical (n, 0) frame; equals 1 at the base."""
    return float(pair_det(a, a).real)


def psi_factor(a: ComplexStructure, b: ComplexStructure, space: SymplecticSpace | None = None) -> complex:
    """Factor by which Psi_{a,b} acts in the canonical frames."""
    if a.n != b.n:
        raise SiegelError("dimension mismatch")
    num = pair_det(a, a)
    den = pair_det(a, b)
    if abs(den) < 1e-300 or abs(den) < 1e-14 * abs(num):
        raise SiegelError("non-transverse pair")
    return num / den


def psi_adjoint_check(a: ComplexStructure, b: ComplexStructure, space: SymplecticSpace | None = None) -> float:
    """|<Psi_ab e_a, e_b>_b - <e_a, Psi_ba e_b>_a| with canonical frames e."""
    lhs = psi_factor(a, b) * frame_norm2(b)
    rhs = np.conj(psi_factor(b, a)) * frame_norm2(a)
    return float(abs(lhs - rhs))


def zeta_value(a, b, c) -> complex:
    return (pair_det(a, b) * pair_det(b, c)) / (pair_det(a, c) * pair_det(b, b))


def _zeta_batch(ma, mb, mc) -> np.ndarray:
    return (_pair_det_batch(ma, mb) * _pair_det_batch(mb, mc)) / (
        _pair_det_batch(ma, mc) * _pair_det_batch(mb, mb))


def track_sqrt(values_fn, samples: int = DEFAULT_PATH_SAMPLES):
    """Continuous square root along s in [0, 1] with value 1 at s = 1.

    ``values_fn(s_array)`` returns the nonvanishing function on the grid.
    Returns (value at s=0, its square root, samples used).
    """
    m = int(samples)
    while True:
        s = np.linspace(0.0, 1.0, m + 1)
        vals = np.asarray(values_fn(s), dtype=complex)
        if np.any(vals == 0) or not np.all(np.isfinite(vals)):
            raise BranchResolutionError("function vanishes on the contraction path")
        steps = np.angle(vals[:-1] / vals[1:])
        if np.max(np.abs(steps)) <= np.pi / 2:
            break
        m *= 2
        if m > MAX_PATH_SAMPLES:
            raise BranchResolutionError("branch resolution exceeded")
    end = vals[-1]
    if abs(end - 1.0) > 1e-9:
        raise BranchResolutionError("contraction endpoint is not normalised")
    total = float(np.sum(steps)) + float(np.angle(end))
    v0 = vals[0]
    # snap the accumulated phase onto the exact argument of v0
    phase = np.angle(v0) + 2 * np.pi * np.round((total - np.angle(v0)) / (2 * np.pi))
    root = np.sqrt(abs(v0)) * np.exp(0.5j * phase)
    return complex(v0), complex(root), m


def _contract(m0, m_target, s):
    # straight line from m0 (s=0) to m_target (s=1)
    s = s[:, None, None]
    return (1 - s) * m0[None] + s * m_target[None]


def zeta(a: ComplexStructure, b: ComplexStructure, c: ComplexStructure,
         space: SymplecticSpace | None = None, samples: int = DEFAULT_PATH_SAMPLES,
         anchor: ComplexStructure | None = None) -> ZetaBranch:
    """zeta(a, b, c) with the square root continued from the diagonal.

    The triple is contracted along a straight line to (anchor, anchor, anchor);
    the anchor defaults to ``a``.
    """
    ma, mb, mc = a.mu, b.mu, c.mu
    if not (ma.shape == mb.shape == mc.shape):
        raise SiegelError("dimension mismatch")
    mt = ma if anchor is None else anchor.mu
    z_exact = zeta_value(a, b, c)

    def fn(s):
        return _zeta_batch(_contract(ma, mt, s), _contract(mb, mt, s), _contract(mc, mt, s))

    return _finish_branch(z_exact, fn, samples)


def _finish_branch(z_exact, fn, samples) -> ZetaBranch:
    v0, root, m = track_sqrt(fn, samples)
    principal = np.sqrt(complex(z_exact))
    sign = 1.0 if abs(principal - root) <= abs(principal + root) else -1.0
    return ZetaBranch(complex(z_exact), complex(sign * principal), m)


def _span_10(mu):
    # type (1,0) vectors of mu in the base splitting: {(u, -conj(mu) u)}
    n = mu.shape[-1]
    return np.concatenate([np.broadcast_to(np.eye(n), mu.shape), -np.conj(mu)], axis=-2)


def _span_01(mu):
    # type (0,1) vectors of mu: {(-mu w, w)}
    n = mu.shape[-1]
    return np.concatenate([-mu, np.broadcast_to(np.eye(n), mu.shape)], axis=-2)


def _projector(onto, along):
    n = onto.shape[-1]
    basis = np.concatenate([onto, along], axis=-1)
    inv = np.linalg.inv(basis)
    return onto @ inv[..., :n, :]


def projections(a: ComplexStructure, b: ComplexStructure, space: SymplecticSpace | None = None):
    """(qbar_{a,b}, q_{a,b}) as 2n x 2n matrices on the base splitting.

    qbar_{a,b} projects onto the (0,1) vectors of b along the (1,0) vectors of a;
    q_{a,b} projects onto the (1,0) vectors of b along the (0,1) vectors of a.
    """
    qbar = _projector(_span_01(b.mu), _span_10(a.mu))
    q = _projector(_span_10(b.mu), _span_01(a.mu))
    return qbar, q


def _det_inv_batch(ma, mb, mc):
    qbar = _projector(_span_01(mb), _span_10(ma))
    q = _projector(_span_10(mb), _span_01(mc))
    return 1.0 / np.linalg.det(q + qbar)


def det_half_identity(a: ComplexStructure, b: ComplexStructure, c: ComplexStructure,
                      space: SymplecticSpace | None = None, samples: int = DEFAULT_PATH_SAMPLES):
    """Defects of det^-1[q_{c,b} + qbar_{a,b}] = zeta(a,b,c) and of its square root.

    Returns (squared-form defect, branch defect).  Both square roots are continued
    along the same contraction to the diagonal.
    """
    ma, mb, mc = a.mu, b.mu, c.mu
    lhs = complex(_det_inv_batch(ma[None], mb[None], mc[None])[0])
    zb = zeta(a, b, c, samples=samples)

    def fn(s):
        return _det_inv_batch(_contract(ma, ma, s), _contract(mb, ma, s), _contract(mc, ma, s))

    _, root, _ = track_sqrt(fn, samples)
    return float(abs(lhs - zb.zeta)), float(abs(root - zb.sqrt_zeta))


# half-form groupoid

def morphism_condition_defect(psi: HalfFormMorphism) -> float:
    lhs = psi.scalar ** 2 * psi.target.frame
    rhs = psi_factor(psi.source.j, psi.target.j) * psi.source.frame
    return float(abs(lhs - rhs) / max(abs(rhs), 1e-300))


def halfform_morphisms(source: HalfFormTriple, target: HalfFormTriple):
    """The two morphisms source -> target (scalars +r and -r)."""
    r = np.sqrt(psi_factor(source.j, target.j) * source.frame / target.frame)
    return HalfFormMorphism(source, target, complex(r)), HalfFormMorphism(source, target, complex(-r))


def identity_morphism(t: HalfFormTriple) -> HalfFormMorphism:
    return HalfFormMorphism(t, t, 1.0 + 0j)


def _same_triple(s: HalfFormTriple, t: HalfFormTriple, tol: float = 1e-12) -> bool:
    return (s.j.mu.shape == t.j.mu.shape and np.allclose(s.j.mu, t.j.mu, atol=tol, rtol=0)
            and abs(s.frame - t.frame) <= tol * max(1.0, abs(s.frame)))


def halfform_compose(psi2: HalfFormMorphism, psi1: HalfFormMorphism,
                     samples: int = DEFAULT_PATH_SAMPLES) -> HalfFormMorphism:
    """psi2 o_m psi1 = zeta^{1/2}(a, b, c) psi2 psi1."""
    if not _same_triple(psi1.target, psi2.source):
        raise CompositionError("psi1.target differs from psi2.source")
    z = zeta(psi1.source.j, psi1.target.j, psi2.target.j, samples=samples)
    return HalfFormMorphism(psi1.source, psi2.target, z.sqrt_zeta * psi2.scalar * psi1.scalar)


def halfform_norm2(t: HalfFormTriple) -> float:
    """Squared norm of the half-form generator: |frame| |e_j|."""
    return abs(t.frame) * np.sqrt(frame_norm2(t.j))


def halfform_adjoint(psi: HalfFormMorphism) -> HalfFormMorphism:
    s = np.conj(psi.scalar) * halfform_norm2(psi.target) / halfform_norm2(psi.source)
    return HalfFormMorphism(psi.target, psi.source, complex(s))


def curvature_P_integrand(eta, mu) -> complex:
    """1/2 tr(eta conj(mu) - mu conj(eta)) for tangent vectors at the base."""
    e = np.atleast_2d(np.asarray(eta, dtype=complex))
    m = np.atleast_2d(np.asarray(mu, dtype=complex))
    return complex(0.5 * np.trace(e @ m.conj() - m @ e.conj()))


def connection_form(mu, mu_dot) -> complex:
    """Half-form line connection in the canonical frame: -1/2 tr(mu_dot conj(mu) (I - mu conj(mu))^-1)."""
    m = np.atleast_2d(np.asarray(mu, dtype=complex))
    d = np.atleast_2d(np.asarray(mu_dot, dtype=complex))
    n = m.shape[0]
    return complex(-0.5 * np.trace(d @ m.conj() @ np.linalg.inv(np.eye(n) - m @ m.conj())))


# sampling and coordinates

def random_structure(rng: np.random.Generator, n: int, radius: float = 0.9) -> ComplexStructure:
    """Symmetric matrix with operator norm <= radius, by rejection."""
    while True:
        z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        z = 0.5 * (z + z.T) * (radius / (1.5 * np.sqrt(n)))
        if np.linalg.norm(z, 2) <= radius:
            return ComplexStructure(z)


def cayley_to_disk(tau: complex) -> complex:
    """Upper half-plane -> disk: dx + tau dy is proportional to theta + mu conj(theta)."""
    tau = complex(tau)
    return (1j - tau) / (1j + tau)


def cayley_to_halfplane(mu: complex) -> complex:
    mu = complex(mu)
    return 1j * (1 - mu) / (1 + mu)


def dz_in_canonical_frame(tau: complex) -> complex:
    """dx + tau dy = lam(tau) (theta + mu conj(theta)) with theta = dx + i dy."""
    return 0.5 * (1 - 1j * complex(tau))
