"""Periodic cubic lattices with finite-difference calculus.

The spatial continuum is truncated to a periodic cubic lattice of dimension
``s`` in {1, 2, 3} with ``N`` sites per direction (``V = N**s`` sites total)
and spacing ``h``.  Fields live on sites:

* scalar fields        -- shape ``(V,)``
* vector fields        -- shape ``(s, V)``   (one component per direction)
* doublet fields       -- shape ``(2, V)``   (two internal components)

Derivatives are central differences with periodic wrap, so the gradient and
minus-divergence are exact adjoints under the site inner product
``h**s * sum(u * v)``.  Two distinct second-order operators appear:

* ``laplacian`` / ``laplacian_matrix`` -- the standard 2s-point stencil,
  symmetric negative semidefinite with kernel exactly the constants;
* ``fp_matrix`` -- the composition divergence o gradient of the central
  differences.  The two are NOT equal on the lattice.  The composition is
  the one consistent with the gauge-fixing machinery (see :mod:`.gauge`);
  on lattices with even N its kernel also contains the 2**s - 1 staggered
  (checkerboard) modes, the usual doubling artifact of central differences.

Operator matrices are stored dense; this is a desk-scale verification tool,
and assembly refuses lattices with more than ``MAX_DENSE_SITES`` sites.
"""

from dataclasses import dataclass, field

import numpy as np

# Dense operator matrices are only built below this site count.
MAX_DENSE_SITES = 512


@dataclass(frozen=True)
class LatticeSpec:
    """Shape of the truncation: dimension, sites per direction, spacing."""

    dim: int
    sites_per_dim: int
    spacing: float = 1.0

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if int(self.sites_per_dim) != self.sites_per_dim or self.sites_per_dim < 2:
            raise ValueError(f"sites_per_dim must be an integer >= 2, got {self.sites_per_dim}")
        if not (self.spacing > 0):
            raise ValueError(f"spacing must be positive, got {self.spacing}")

    @property
    def n_sites(self):
        return self.sites_per_dim ** self.dim


class Lattice:
    """Periodic lattice with site indexing, neighbour tables and calculus.

    Parameters
    ----------
    spec : LatticeSpec
        Lattice shape.  Convenience: ``Lattice(dim, N, spacing)`` also works.

    Notes
    -----
    All operations are pure functions of their inputs; the only mutable state
    is an internal cache of operator matrices, filled on first use.
    """

    def __init__(self, spec, sites_per_dim=None, spacing=1.0):
        if not isinstance(spec, LatticeSpec):
            spec = LatticeSpec(spec, sites_per_dim, spacing)
        self.spec = spec
        self.dim = spec.dim
        self.n_sites = spec.n_sites
        self.spacing = spec.spacing
        self.shape = (spec.sites_per_dim,) * spec.dim

        ids = np.arange(self.n_sites).reshape(self.shape)
        # _plus[m][x] is the site id of x + e_m (periodic), _minus[m] of x - e_m.
        self._plus = [np.roll(ids, -1, axis=m).ravel() for m in range(self.dim)]
        self._minus = [np.roll(ids, +1, axis=m).ravel() for m in range(self.dim)]
        self._cache = {}

    # ------------------------------------------------------------------
    # site bookkeeping
    # ------------------------------------------------------------------
    def site_index(self, coords):
        """Map an s-tuple of periodic coordinates to the site id."""
        coords = np.mod(np.asarray(coords, dtype=int), self.spec.sites_per_dim)
        return int(np.ravel_multi_index(tuple(coords), self.shape))

    def site_coords(self, index):
        """Inverse of :meth:`site_index`."""
        return tuple(int(c) for c in np.unravel_index(index, self.shape))

    @property
    def neighbor_table(self):
        """Array of shape (V, s, 2): forward / backward neighbour ids."""
        tab = np.empty((self.n_sites, self.dim, 2), dtype=int)
        for m in range(self.dim):
            tab[:, m, 0] = self._plus[m]
            tab[:, m, 1] = self._minus[m]
        return tab

    # ------------------------------------------------------------------
    # field validation helpers
    # ------------------------------------------------------------------
    def check_scalar(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n_sites,):
            raise ValueError(f"scalar field must have shape {(self.n_sites,)}, got {u.shape}")
        return u

    def check_vector(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim, self.n_sites):
            raise ValueError(
                f"vector field must have shape {(self.dim, self.n_sites)}, got {v.shape}")
        return v

    def check_doublet(self, f):
        f = np.asarray(f, dtype=float)
        if f.shape != (2, self.n_sites):
            raise ValueError(f"doublet field must have shape {(2, self.n_sites)}, got {f.shape}")
        return f

    # ------------------------------------------------------------------
    # calculus
    # ------------------------------------------------------------------
    def gradient(self, u):
        """Central-difference gradient of a scalar field, shape (s, V)."""
        u = self.check_scalar(u)
        inv = 0.5 / self.spacing
        return np.stack([(u[p] - u[m]) * inv for p, m in zip(self._plus, self._minus)])

    def divergence(self, v):
        """Central-difference divergence of a vector field, shape (V,).

        Exact negative adjoint of :meth:`gradient` under :meth:`inner`.
        """
        v = self.check_vector(v)
        inv = 0.5 / self.spacing
        out = np.zeros(self.n_sites)
        for m, (p, mn) in enumerate(zip(self._plus, self._minus)):
            out += (v[m][p] - v[m][mn]) * inv
        return out

    def laplacian(self, u):
        """2s-point stencil Laplacian of a scalar field."""
        u = self.check_scalar(u)
        out = -2.0 * self.dim * u.copy()
        for p, mn in zip(self._plus, self._minus):
            out += u[p] + u[mn]
        return out / self.spacing ** 2

    def inner(self, u, v):
        """Site inner product ``h**s * sum(u * v)``; kinds must match."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if u.shape != v.shape:
            raise ValueError(f"field kind mismatch: {u.shape} vs {v.shape}")
        return float(self.spacing ** self.dim * np.sum(u * v))

    # ------------------------------------------------------------------
    # dense operator matrices (flattened field layout: index = m*V + x)
    # ------------------------------------------------------------------
    def _require_dense(self):
        if self.n_sites > MAX_DENSE_SITES:
            raise ValueError(
                f"dense operator matrices refused for V={self.n_sites} > {MAX_DENSE_SITES} sites")

    def _difference_matrices(self):
        """Per-direction central difference matrices G_m, each V x V."""
        if "Gm" not in self._cache:
            self._require_dense()
            V = self.n_sites
            mats = []
            for p, mn in zip(self._plus, self._minus):
                M = np.zeros((V, V))
                M[np.arange(V), p] += 1.0
                M[np.arange(V), mn] -= 1.0
                mats.append(M / (2.0 * self.spacing))
            self._cache["Gm"] = np.stack(mats)
        return self._cache["Gm"]

    def gradient_matrix(self):
        """Dense (sV x V) matrix form of :meth:`gradient`."""
        if "grad" not in self._cache:
            self._cache["grad"] = np.vstack(self._difference_matrices())
        return self._cache["grad"]

    def divergence_matrix(self):
        """Dense (V x sV) matrix form of :meth:`divergence`."""
        if "div" not in self._cache:
            self._cache["div"] = np.hstack(self._difference_matrices())
        return self._cache["div"]

    def laplacian_matrix(self):
        """Dense (V x V) 2s-stencil Laplacian; symmetric, kernel = constants."""
        if "lap" not in self._cache:
            self._require_dense()
            V = self.n_sites
            M = -2.0 * self.dim * np.eye(V)
            for p, mn in zip(self._plus, self._minus):
                M[np.arange(V), p] += 1.0
                M[np.arange(V), mn] += 1.0
            self._cache["lap"] = M / self.spacing ** 2
        return self._cache["lap"]

    def fp_matrix(self):
        """Composition divergence o gradient (V x V), symmetric NSD.

        This is the operator paired with the Coulomb gauge condition in the
        gauge-fixing machinery.  Its kernel is the constants for odd N and
        additionally the staggered modes for even N.
        """
        if "fp" not in self._cache:
            M = self.divergence_matrix() @ self.gradient_matrix()
            self._cache["fp"] = 0.5 * (M + M.T)
        return self._cache["fp"]

    def fp_eig(self):
        """Eigendecomposition (w, U) of :meth:`fp_matrix`, cached."""
        if "fp_eig" not in self._cache:
            w, U = np.linalg.eigh(self.fp_matrix())
            self._cache["fp_eig"] = (w, U)
        return self._cache["fp_eig"]

    def zero_mode_basis(self):
        """Orthonormal basis of ker(fp_matrix): constants, plus staggered
        modes on even-N lattices.  Shape (V, k)."""
        N = self.spec.sites_per_dim
        V = self.n_sites
        coords = np.stack(np.unravel_index(np.arange(V), self.shape))
        modes = [np.full(V, 1.0 / np.sqrt(V))]
        if N % 2 == 0:
            for bits in range(1, 2 ** self.dim):
                signs = np.ones(V)
                for m in range(self.dim):
                    if (bits >> m) & 1:
                        signs *= (-1.0) ** coords[m]
                modes.append(signs / np.sqrt(V))
        return np.stack(modes, axis=1)

    def random_scalar(self, rng):
        return rng.standard_normal(self.n_sites)

    def random_vector(self, rng):
        return rng.standard_normal((self.dim, self.n_sites))

    def random_doublet(self, rng):
        return rng.standard_normal((2, self.n_sites))


def flat(field):
    """Flatten a (components, V) field to component-major 1-d layout."""
    return np.asarray(field, dtype=float).reshape(-1)


def unflat(arr, components, n_sites):
    """Inverse of :func:`flat`."""
    return np.asarray(arr, dtype=float).reshape(components, n_sites)
