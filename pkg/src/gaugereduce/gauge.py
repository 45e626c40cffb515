"""U(1) gauge action, Coulomb gauge fixing and projection operators.

A configuration is a pair (A, f): a gauge potential with s components per
site and a two-component scalar.  The group acts sitewise,

    A  ->  A + grad(eps),        f  ->  R(g0 * eps) f,

with R(theta) the rotation [[cos, sin], [-sin, cos]] and generator
Jbar = [[0, 1], [-1, 0]].  The Coulomb condition div(A) = 0 selects one
representative per (mean-zero) gauge parameter; the pairing of the gauge
generators with the condition is the composition operator

    Phi = div o grad

("fp_matrix" on the lattice), whose pseudo-inverse is the Green function
used throughout.  Phi is singular on constants -- a constant eps does not
move A but still rotates f; that residual global U(1) is left unfixed.  On
even-N lattices the central-difference kernel also contains the staggered
doubling modes, which are then likewise residual (see :mod:`.lattice`).

The potential functional sums the field strength term, a covariant scalar
kinetic term and an optional sitewise potential.  The scalar kinetic term
uses symmetric link transport,

    E_i(x) = [R(-g0 h A_i(x)) f(x+e_i) - R(+g0 h A_i(x)) f(x-e_i)] / (2h),

which picks up only an overall rotation under a gauge transformation, so the
summed potential is exactly gauge invariant on the lattice (a sitewise
discretization of grad f - g0 Jbar f A would not be).
"""

from dataclasses import dataclass

import numpy as np

JBAR = np.array([[0.0, 1.0], [-1.0, 0.0]])


@dataclass
class FieldPair:
    """Point of the product configuration space: potential, scalar, coupling."""

    A: np.ndarray       # (s, V)
    f: np.ndarray       # (2, V)
    g0: float

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.f = np.asarray(self.f, dtype=float)
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.f))):
            raise ValueError("field entries must be finite")
        if not (self.g0 > 0):
            raise ValueError(f"coupling g0 must be positive, got {self.g0}")


@dataclass
class AdaptedCoords:
    """Bundle coordinates: transverse potential, rotated scalar, gauge parameter."""

    A_star: np.ndarray   # (s, V), div(A_star) = 0
    f_tilde: np.ndarray  # (2, V)
    a: np.ndarray        # (V,), mean zero


@dataclass
class FaddeevPopov:
    """Gauge-fixing operator with its Green function.

    ``matrix`` is the composition div o grad; ``green`` its Moore-Penrose
    pseudo-inverse (symmetric, annihilates the kernel, in particular
    green @ ones = 0).  ``kernel`` is an orthonormal basis of ker(matrix).
    """

    matrix: np.ndarray
    green: np.ndarray
    kernel: np.ndarray

    def range_projector(self):
        """Projector onto range(matrix) = (kernel)^perp; the pseudo-identity
        matrix @ green.  Equals I - J/V on odd-N lattices."""
        return np.eye(self.matrix.shape[0]) - self.kernel @ self.kernel.T


def faddeev_popov(lat):
    """Build the gauge-fixing operator and Green function for a lattice."""
    key = "fp_green"
    if key not in lat._cache:
        w, U = lat.fp_eig()
        tol = 1e-10 * max(np.abs(w).max(), 1.0)
        keep = np.abs(w) > tol
        green = (U[:, keep] / w[keep]) @ U[:, keep].T
        green = 0.5 * (green + green.T)
        kernel = U[:, ~keep]
        lat._cache[key] = FaddeevPopov(lat.fp_matrix(), green, kernel)
    return lat._cache[key]


def rotate(f, theta):
    """Sitewise rotation of a doublet by angle(s) theta."""
    c, s = np.cos(theta), np.sin(theta)
    return np.stack([c * f[0] + s * f[1], -s * f[0] + c * f[1]])


def gauge_transform(lat, p, eps):
    """Finite gauge transformation of a configuration by parameter eps."""
    eps = lat.check_scalar(eps)
    return FieldPair(p.A + lat.gradient(eps), rotate(p.f, p.g0 * eps), p.g0)


def killing_vector(lat, p, eps):
    """Generator of the gauge action: d/dt at t=0 of gauge_transform(p, t*eps).

    Returns the pair (grad(eps), g0 * eps * Jbar f).
    """
    eps = lat.check_scalar(eps)
    kf = p.g0 * eps * np.stack([p.f[1], -p.f[0]])
    return lat.gradient(eps), kf


def killing_doublet_matrix(lat, f, g0):
    """Dense (2V x V) matrix of the scalar-sector Killing components,
    K[(a,y), z] = g0 * (Jbar f)^a(y) * delta_{yz}."""
    V = lat.n_sites
    jf = np.stack([f[1], -f[0]])
    K = np.zeros((2 * V, V))
    idx = np.arange(V)
    for a in range(2):
        K[a * V + idx, idx] = g0 * jf[a]
    return K


def solve_gauge_parameter(lat, A):
    """Gauge parameter moving A onto the Coulomb surface.

    Solves Phi a = div(A) through the Green function; the result has mean
    zero and div(A - grad(a)) = 0 to machine precision.
    """
    A = lat.check_vector(A)
    fp = faddeev_popov(lat)
    a = fp.green @ lat.divergence(A)
    return a - a.mean()


def to_adapted(lat, p):
    """Split a configuration into (transverse potential, rotated scalar, a)."""
    a = solve_gauge_parameter(lat, p.A)
    A_star = p.A - lat.gradient(a)
    f_tilde = rotate(p.f, -p.g0 * a)
    return AdaptedCoords(A_star, f_tilde, a)


def from_adapted(lat, c, g0):
    """Rebuild the original configuration; exact inverse of :func:`to_adapted`."""
    return FieldPair(c.A_star + lat.gradient(c.a), rotate(c.f_tilde, g0 * c.a), g0)


def transverse_projector(lat):
    """Dense (sV x sV) projector onto divergence-free vector fields.

    P = I - grad o green o div.  Symmetric and idempotent; kills gradients
    exactly and div(P v) = 0 exactly, because grad, div and the Green
    function are built from the same central differences.
    """
    key = "transverse_projector"
    if key not in lat._cache:
        fp = faddeev_popov(lat)
        G = lat.gradient_matrix()
        P = np.eye(lat.dim * lat.n_sites) - G @ fp.green @ lat.divergence_matrix()
        lat._cache[key] = 0.5 * (P + P.T)
    return lat._cache[key]


def projector_N(lat, f_tilde, g0):
    """Projection blocks of the adapted-coordinate frame.

    Returns (N_A, N_f): N_A (sV x sV) is the component acting within the
    potential sector and coincides with the transverse projector for the
    Coulomb condition; N_f (2V x sV) = -K_f @ green @ div carries potential
    directions into scalar directions and vanishes when f_tilde = 0.
    """
    fp = faddeev_popov(lat)
    Kf = killing_doublet_matrix(lat, f_tilde, g0)
    N_f = -Kf @ fp.green @ lat.divergence_matrix()
    return transverse_projector(lat), N_f


def potential(lat, p, v0=None):
    """Potential functional: field strength + covariant scalar kinetic + V0.

    V = h^s * sum_x [ 1/4 F_ij F_ij + 1/2 |E_i|^2 + V0(A, f)(x) ]

    with F_ij = d_i A_j - d_j A_i (central differences) and E_i the
    link-transported scalar derivative (module docstring).  ``v0``, if given,
    is called as ``v0(A, f)`` with the full (s, V) and (2, V) arrays and must
    return sitewise values, shape (V,); gauge invariance of the total
    requires v0 to be built from sitewise invariants such as |f|^2.
    """
    A = lat.check_vector(p.A)
    f = lat.check_doublet(p.f)
    h = lat.spacing
    s = lat.dim
    total = 0.0
    # field-strength term; antisymmetric in (i, j), sum over all ordered pairs
    grads = [lat.gradient(A[j]) for j in range(s)]
    for i in range(s):
        for j in range(i + 1, s):
            Fij = grads[j][i] - grads[i][j]
            total += 0.5 * np.sum(Fij ** 2)
    # covariant kinetic term with midpoint link transport
    for i in range(s):
        theta = p.g0 * h * A[i]
        fp_ = f[:, lat._plus[i]]
        fm_ = f[:, lat._minus[i]]
        E = (rotate(fp_, -theta) - rotate(fm_, theta)) / (2.0 * h)
        total += 0.5 * np.sum(E ** 2)
    if v0 is not None:
        total += float(np.sum(v0(A, f)))
    return float(total * h ** s)
