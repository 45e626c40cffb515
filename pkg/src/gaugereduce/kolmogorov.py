"""Dense backward-equation oracle on tiny grids, plus exact Gaussian formulas.

Solves d(psi)/dt + L psi = 0 backwards in time, i.e. psi(0) = exp(T L) phi0,
for the generator

    L = (1/2) mu^2 kappa Laplacian + (1/(mu^2 kappa)) V(x)

on a regular grid with Dirichlet-zero exterior, for at most three degrees of
freedom.  This is the independent comparison target for the Monte Carlo
estimator: the weighted expectation E[phi0(x_T) exp((1/mu^2 kappa) int V)]
of the free diffusion with variance rate v = mu^2 kappa solves the same
equation on R^d, so grid values and Monte Carlo estimates must agree within
statistics plus the O(h^2) discretization budget (estimated by Richardson
comparison of two resolutions).

Closed forms for the two classic benchmarks are included: heat-kernel
smoothing of a Gaussian (V = 0) and the quadratic-potential (Mehler kernel)
value for V(x) = -(1/2) omega^2 |x|^2 with Gaussian or flat phi0.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse
from scipy.sparse.linalg import expm_multiply

MAX_DOF = 3


@dataclass
class GridPDE:
    """Grid discretization of the backward-equation generator."""

    dof: int
    points_per_dof: int
    halfwidth: float
    mu: float
    kappa: float
    axis: np.ndarray           # 1-d node coordinates, shared by all dofs
    nodes: np.ndarray          # (n_nodes, dof) coordinates
    generator: scipy.sparse.csr_matrix
    v_diag: np.ndarray

    @property
    def spacing(self):
        return self.axis[1] - self.axis[0]


@dataclass
class EvolveResult:
    psi: np.ndarray
    boundary_mass: float
    flagged: bool


@dataclass
class Verdict:
    passed: bool
    mc_mean: float
    mc_std_error: float
    pde_value: float
    budget: float

    @property
    def difference(self):
        return abs(self.mc_mean - self.pde_value)


def build_generator(v, dof, points_per_dof, halfwidth, mu, kappa):
    """Assemble the grid generator; refuses dof > 3 by design."""
    if dof < 1 or dof > MAX_DOF:
        raise ValueError(f"oracle is desk-scale by design: dof must be 1..{MAX_DOF}")
    if points_per_dof < 3:
        raise ValueError("need at least 3 grid points per dof")
    axis = np.linspace(-halfwidth, halfwidth, points_per_dof)
    h = axis[1] - axis[0]
    g = points_per_dof
    main = -2.0 * np.ones(g)
    off = np.ones(g - 1)
    lap1 = scipy.sparse.diags([off, main, off], [-1, 0, 1], format="csr") / h ** 2
    eye = scipy.sparse.identity(g, format="csr")
    lap = None
    for m in range(dof):
        term = None
        for k in range(dof):
            block = lap1 if k == m else eye
            term = block if term is None else scipy.sparse.kron(term, block, format="csr")
        lap = term if lap is None else lap + term
    grids = np.meshgrid(*([axis] * dof), indexing="ij")
    nodes = np.stack([g_.ravel() for g_ in grids], axis=1)
    v_diag = np.asarray(v(nodes), dtype=float)
    gen = 0.5 * mu ** 2 * kappa * lap + scipy.sparse.diags(v_diag / (mu ** 2 * kappa))
    return GridPDE(dof, points_per_dof, halfwidth, mu, kappa, axis, nodes,
                   gen.tocsr(), v_diag)


def evolve(pde, phi0_grid, T):
    """psi = exp(T * generator) phi0, with a boundary-leak diagnostic.

    boundary_mass is the |psi| share carried by the outermost node shell;
    above 1e-3 the result is flagged as boundary-limited.
    """
    if T < 0:
        raise ValueError("T must be nonnegative")
    if T == 0:
        return EvolveResult(np.array(phi0_grid, dtype=float), 0.0, False)
    psi = expm_multiply(pde.generator * T, np.asarray(phi0_grid, dtype=float))
    shell = np.zeros(pde.points_per_dof, dtype=bool)
    shell[0] = shell[-1] = True
    mask = np.zeros((pde.points_per_dof,) * pde.dof, dtype=bool)
    for m in range(pde.dof):
        idx = [slice(None)] * pde.dof
        idx[m] = shell
        mask[tuple(idx)] = True
    total = float(np.sum(np.abs(psi)))
    boundary = float(np.sum(np.abs(psi)[mask.ravel()]))
    frac = boundary / total if total > 0 else 0.0
    return EvolveResult(psi, frac, frac > 1e-3)


def value_at(pde, psi, x0):
    """Multilinear interpolation of a grid function at a point."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.size != pde.dof:
        raise ValueError(f"point must have {pde.dof} coordinates")
    axis = pde.axis
    h = pde.spacing
    grid = psi.reshape((pde.points_per_dof,) * pde.dof)
    lows, ws = [], []
    for c in x0:
        if c < axis[0] or c > axis[-1]:
            raise ValueError("point outside the grid box")
        i = min(int((c - axis[0]) / h), pde.points_per_dof - 2)
        lows.append(i)
        ws.append((c - axis[i]) / h)
    val = 0.0
    for corner in range(2 ** pde.dof):
        w = 1.0
        idx = []
        for m in range(pde.dof):
            bit = (corner >> m) & 1
            idx.append(lows[m] + bit)
            w *= ws[m] if bit else (1.0 - ws[m])
        val += w * grid[tuple(idx)]
    return float(val)


def solve_value(v, phi0, x0, T, mu, kappa, dof, points_per_dof, halfwidth):
    """Convenience: build, evolve and interpolate in one call."""
    pde = build_generator(v, dof, points_per_dof, halfwidth, mu, kappa)
    res = evolve(pde, phi0(pde.nodes), T)
    return value_at(pde, res.psi, x0), res


def discretization_budget(v, phi0, x0, T, mu, kappa, dof, points_per_dof,
                          halfwidth):
    """Richardson error budget: solve at two resolutions, bound the
    remaining O(h^2) error of the finer one by (4/3)|v_fine - v_coarse|."""
    fine, _ = solve_value(v, phi0, x0, T, mu, kappa, dof, points_per_dof, halfwidth)
    coarse_pts = points_per_dof // 2 + 1
    coarse, _ = solve_value(v, phi0, x0, T, mu, kappa, dof, coarse_pts, halfwidth)
    return fine, abs(fine - coarse) * 4.0 / 3.0


def compare(fk, pde_value, budget=0.0):
    """PASS iff |MC - PDE| <= 3 * std_error + discretization budget."""
    diff = abs(fk.mean - pde_value)
    passed = diff <= 3.0 * fk.std_error + budget and not fk.unreliable
    return Verdict(passed, fk.mean, fk.std_error, pde_value, budget)


# ----------------------------------------------------------------------
# exact Gaussian references
# ----------------------------------------------------------------------

def heat_value(x0, phi0_var, v_rate, T):
    """E[phi0(x_T)] for phi0 = exp(-|x|^2 / (2 s^2)), free diffusion with
    variance rate v_rate: Gaussian convolution in closed form."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    s2 = phi0_var + v_rate * T
    pref = (phi0_var / s2) ** (x0.size / 2.0)
    return float(pref * math.exp(-float(np.sum(x0 ** 2)) / (2.0 * s2)))


def mehler_value(x0, omega, v_rate, T, alpha=0.0):
    """Quadratic-potential benchmark in closed form.

    Value of E_x0[ phi0(x_T) exp(-(omega^2/(2 v)) int |x_u|^2 du) ] for the
    free diffusion with variance rate v = v_rate and
    phi0 = exp(-alpha |x|^2 / 2); dimensions factorize.  Derived from the
    Riccati flow of the Gaussian ansatz exp(-a(t) x^2 / 2 + b(t)):

        a(T) = (omega/v) (ahat + tanh(omega T)) / (1 + ahat tanh(omega T)),
        ahat = alpha v / omega,
        prefactor per dim = (cosh(omega T) + ahat sinh(omega T))^(-1/2).
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    v = v_rate
    th = math.tanh(omega * T)
    ahat = alpha * v / omega
    a_T = (omega / v) * (ahat + th) / (1.0 + ahat * th)
    pref = (math.cosh(omega * T) + ahat * math.sinh(omega * T)) ** (-0.5)
    out = 1.0
    for c in x0:
        out *= pref * math.exp(-0.5 * a_T * c * c)
    return float(out)
