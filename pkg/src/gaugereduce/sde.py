"""Ito integration and potential-weighted Monte Carlo expectations.

The original process is a free diffusion on the product configuration space,

    dA = mu sqrt(kappa) dw_A,      df = mu sqrt(kappa) dw_f,

with canonical Wiener increments E[dw(x) dw(y)] = dt delta_xy / h^s (field
increments are plain N(0, dt) scaled by 1/sqrt(h^s)).  Expectations of

    phi0(path end) * exp( (1/(mu^2 kappa)) * int V du )

are estimated over independent paths with trapezoidal quadrature of the
potential integral; exponents beyond +-700 are clipped and the affected
paths are counted rather than silently discarded.

The reduced process lives on the Coulomb surface:

    dA* = mu^2 kappa drift_A dt + mu sqrt(kappa) P dw_A,
    df~ = mu^2 kappa drift_f dt + mu sqrt(kappa) (N_f dw_A + dw_f),

with drifts from :mod:`.orbit` and the transverse projector re-applied after
every step.  A path whose minimum sitewise |f~|^2 falls below the
singularity floor aborts and is reported in the abort fraction.

Reproducibility contract: every path draws from its own counter-based
stream, Philox keyed by (seed, path index); per-path results land in
preallocated slots and are reduced with np.sum in path order, so estimates
are bitwise identical for a fixed (config, seed) regardless of the worker
thread count (capped by the GAUGE_REDUCE_THREADS environment variable).
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .gauge import FieldPair, AdaptedCoords, transverse_projector, projector_N
from .lattice import flat, unflat
from .orbit import SingularOrbitMetric, reduced_drift

EXPONENT_GUARD = 700.0
SINGULARITY_FLOOR = 1e-10
_CHUNK = 4096


@dataclass
class SDEConfig:
    """Integration parameters; total horizon T = dt * n_steps."""

    mu: float
    kappa: float
    dt: float
    n_steps: int
    n_paths: int
    seed: int

    def __post_init__(self):
        if not (self.mu > 0 and self.kappa > 0 and self.dt > 0):
            raise ValueError("mu, kappa, dt must be positive")
        if self.n_steps < 1 or self.n_paths < 1:
            raise ValueError("n_steps and n_paths must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative 64-bit integer")

    @property
    def horizon(self):
        return self.dt * self.n_steps


@dataclass
class SDEPath:
    """Sampled trajectory with running potential integral."""

    times: np.ndarray
    states: list
    accumulated_potential: np.ndarray
    aborted_at: int | None = None


@dataclass
class FKEstimate:
    """Monte Carlo expectation with statistical error and diagnostics."""

    mean: float
    std_error: float
    n_paths: int
    n_flagged: int = 0
    max_exponent: float = 0.0
    abort_fraction: float = 0.0
    unreliable: bool = False


def path_rng(seed, index):
    """Counter-based per-path generator: Philox keyed by (seed, path index)."""
    return np.random.Generator(np.random.Philox(key=[int(seed), int(index)]))


def wiener_increments(n, dt, rng):
    """n i.i.d. normal(0, dt) draws from the given generator."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    return rng.standard_normal(n) * math.sqrt(dt)


def worker_count():
    """Thread-pool size, capped by GAUGE_REDUCE_THREADS (default 1)."""
    try:
        n = int(os.environ.get("GAUGE_REDUCE_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


# ----------------------------------------------------------------------
# field-space single steps (spec'd granular operations)
# ----------------------------------------------------------------------

def euler_step_original(lat, p, cfg, rng):
    """One Euler step of the free diffusion on (A, f)."""
    scale = cfg.mu * math.sqrt(cfg.kappa) / lat.spacing ** (lat.dim / 2.0)
    nA = lat.dim * lat.n_sites
    dw = wiener_increments(nA + 2 * lat.n_sites, cfg.dt, rng)
    A = p.A + scale * unflat(dw[:nA], lat.dim, lat.n_sites)
    f = p.f + scale * unflat(dw[nA:], 2, lat.n_sites)
    return FieldPair(A, f, p.g0)


def euler_step_reduced(lat, c, g0, cfg, rng, flat_override=False,
                       singularity_floor=SINGULARITY_FLOOR):
    """One Euler step of the reduced dynamics on the Coulomb surface.

    With ``flat_override`` the geometric drifts are forced to zero and the
    motion is projected Brownian noise; the constraint div(A*) = 0 is
    enforced by the transverse projector after the step either way.
    """
    f2 = c.f_tilde[0] ** 2 + c.f_tilde[1] ** 2
    if float(f2.min()) < singularity_floor:
        raise SingularOrbitMetric(
            f"reduced step at degenerate orbit: min |f~|^2 = {f2.min():.3e}")
    P = transverse_projector(lat)
    _, N_f = projector_N(lat, c.f_tilde, g0)
    if flat_override:
        drift_A = np.zeros_like(c.A_star)
        drift_f = np.zeros_like(c.f_tilde)
    else:
        drift_A, drift_f = reduced_drift(lat, c, g0)
    noise = cfg.mu * math.sqrt(cfg.kappa) / lat.spacing ** (lat.dim / 2.0)
    pref = cfg.mu ** 2 * cfg.kappa * cfg.dt
    nA = lat.dim * lat.n_sites
    dw = wiener_increments(nA + 2 * lat.n_sites, cfg.dt, rng)
    dwA, dwf = dw[:nA], dw[nA:]
    A_flat = flat(c.A_star) + pref * flat(drift_A) + noise * (P @ dwA)
    f_flat = flat(c.f_tilde) + pref * flat(drift_f) + noise * (N_f @ dwA + dwf)
    A_flat = P @ A_flat
    return AdaptedCoords(unflat(A_flat, lat.dim, lat.n_sites),
                         unflat(f_flat, 2, lat.n_sites), c.a.copy())


def sample_original_path(lat, p0, cfg, rng, v0=None):
    """Integrate one path of the free field diffusion, tracking the running
    trapezoidal integral of the potential functional."""
    from .gauge import potential
    times = cfg.dt * np.arange(cfg.n_steps + 1)
    states = [p0]
    acc = np.zeros(cfg.n_steps + 1)
    vprev = potential(lat, p0, v0)
    p = p0
    for k in range(cfg.n_steps):
        p = euler_step_original(lat, p, cfg, rng)
        states.append(p)
        vcur = potential(lat, p, v0)
        acc[k + 1] = acc[k] + 0.5 * (vprev + vcur) * cfg.dt
        vprev = vcur
    return SDEPath(times, states, acc)


def sample_reduced_path(lat, c0, g0, cfg, rng, flat_override=False, v0=None):
    """Integrate one reduced path; aborts (and records where) at a
    degenerate orbit instead of raising.  The potential integral is
    accumulated for the surface representative (A*, f~)."""
    from .gauge import FieldPair, potential

    def surface_potential(c):
        return potential(lat, FieldPair(c.A_star, c.f_tilde, g0), v0)

    times = cfg.dt * np.arange(cfg.n_steps + 1)
    states = [c0]
    acc = np.zeros(cfg.n_steps + 1)
    vprev = surface_potential(c0)
    c = c0
    for k in range(cfg.n_steps):
        try:
            c = euler_step_reduced(lat, c, g0, cfg, rng, flat_override)
        except SingularOrbitMetric:
            return SDEPath(times[:k + 1], states, acc[:k + 1], aborted_at=k)
        states.append(c)
        vcur = surface_potential(c)
        acc[k + 1] = acc[k] + 0.5 * (vprev + vcur) * cfg.dt
        vprev = vcur
    return SDEPath(times, states, acc)


# ----------------------------------------------------------------------
# batch estimators on flattened states
# ----------------------------------------------------------------------

def _chunk_normals(seed, lo, hi, n_steps, dim):
    """Standard normals for paths lo..hi-1, one Philox stream per path."""
    out = np.empty((hi - lo, n_steps, dim))
    for i in range(lo, hi):
        out[i - lo] = path_rng(seed, i).standard_normal((n_steps, dim))
    return out


def _integrate_chunk(cfg, initial, z, drift, v, phi0, noise_scale,
                     girsanov_drift=None):
    """Euler-integrate one chunk; returns per-path phi0 values, exponents and
    (optionally) the change-of-measure log-density for girsanov_drift."""
    m = z.shape[0]
    sigma = cfg.mu * math.sqrt(cfg.kappa) * noise_scale
    sqdt = math.sqrt(cfg.dt)
    x = np.tile(np.asarray(initial, dtype=float), (m, 1))
    acc = np.zeros(m)
    vprev = v(x) if v is not None else None
    logdens = np.zeros(m) if girsanov_drift is not None else None
    for k in range(cfg.n_steps):
        dw = z[:, k, :] * sqdt
        if girsanov_drift is not None:
            b = girsanov_drift(x)
            logdens += (b * dw).sum(axis=1) / (cfg.mu * math.sqrt(cfg.kappa)) \
                - (b * b).sum(axis=1) * cfg.dt / (2.0 * cfg.mu ** 2 * cfg.kappa)
        if drift is not None:
            x = x + drift(x) * cfg.dt + sigma * dw
        else:
            x = x + sigma * dw
        if v is not None:
            vcur = v(x)
            acc += 0.5 * (vprev + vcur) * cfg.dt
            vprev = vcur
    exponent = acc / (cfg.mu ** 2 * cfg.kappa)
    return phi0(x), exponent, logdens


def _reduce_estimate(values, n_flagged, max_exponent):
    n = values.shape[0]
    mean = float(np.sum(values) / n)
    if n > 1:
        var = float(np.sum((values - mean) ** 2) / (n - 1))
        se = math.sqrt(var / n)
    else:
        se = 0.0
    return FKEstimate(mean, se, n, n_flagged, max_exponent,
                      unreliable=n_flagged > 0)


def feynman_kac(phi0, v, cfg, initial, drift=None, noise_scale=1.0):
    """Estimate E[phi0(x_T) exp((1/mu^2 kappa) int V du)] over cfg.n_paths.

    ``phi0`` and ``v`` take a (batch, d) state array and return (batch,)
    values; ``v=None`` means no weight.  ``drift``, if given, adds
    drift(x) dt to the Euler step.  Deterministic for fixed (cfg, initial)
    regardless of thread count.
    """
    initial = np.asarray(initial, dtype=float).reshape(-1)
    d = initial.size
    values = np.empty(cfg.n_paths)
    exponents = np.zeros(cfg.n_paths)

    def run(lo, hi):
        z = _chunk_normals(cfg.seed, lo, hi, cfg.n_steps, d)
        p, e, _ = _integrate_chunk(cfg, initial, z, drift, v, phi0, noise_scale)
        values[lo:hi] = p
        exponents[lo:hi] = e

    _run_chunks(run, cfg.n_paths)
    n_flagged = int(np.sum(np.abs(exponents) > EXPONENT_GUARD))
    if v is not None:
        weights = np.exp(np.clip(exponents, -EXPONENT_GUARD, EXPONENT_GUARD))
        values = values * weights
    max_exp = float(np.max(np.abs(exponents))) if v is not None else 0.0
    return _reduce_estimate(values, n_flagged, max_exp)


def girsanov_check(cfg, initial, drift_field, phi0, noise_scale=1.0):
    """Drifted expectation vs reweighted driftless expectation.

    Returns (drifted, reweighted) estimates of E[phi0(x_T)].  Both legs use
    the same per-path noise streams, so with drift_field == 0 they coincide
    path by path; the change of measure uses the exact discrete density
    exp{ (1/(mu sqrt(kappa))) sum b . dw - (1/(2 mu^2 kappa)) sum |b|^2 dt }.
    """
    initial = np.asarray(initial, dtype=float).reshape(-1)
    d = initial.size
    v1 = np.empty(cfg.n_paths)
    v2 = np.empty(cfg.n_paths)
    logd = np.empty(cfg.n_paths)

    def run(lo, hi):
        z = _chunk_normals(cfg.seed, lo, hi, cfg.n_steps, d)
        p1, _, _ = _integrate_chunk(cfg, initial, z, drift_field, None, phi0,
                                    noise_scale)
        p2, _, ld = _integrate_chunk(cfg, initial, z, None, None, phi0,
                                     noise_scale, girsanov_drift=drift_field)
        v1[lo:hi] = p1
        v2[lo:hi] = p2
        logd[lo:hi] = ld

    _run_chunks(run, cfg.n_paths)
    n_flagged = int(np.sum(np.abs(logd) > EXPONENT_GUARD))
    weights = np.exp(np.clip(logd, -EXPONENT_GUARD, EXPONENT_GUARD))
    est1 = _reduce_estimate(v1, 0, 0.0)
    est2 = _reduce_estimate(v2 * weights, n_flagged, float(np.max(np.abs(logd))))
    return est1, est2


def weak_convergence_estimates(phi0, drift, initial, mu, kappa, seed, n_paths,
                               dt_values, horizon, noise_scale=1.0):
    """E[phi0(x_T)] at several step sizes with common random numbers.

    dt_values must be integer multiples of the smallest; coarse increments
    are sums of the finest per-path increments, so successive differences of
    the returned estimates isolate the O(dt) Euler drift bias.
    Returns {dt: FKEstimate}.
    """
    initial = np.asarray(initial, dtype=float).reshape(-1)
    d = initial.size
    dts = sorted(dt_values)
    dt_min = dts[0]
    factors = []
    for dt in dts:
        q = dt / dt_min
        if abs(q - round(q)) > 1e-12:
            raise ValueError("dt_values must be integer multiples of the smallest")
        factors.append(int(round(q)))
    n_fine = int(round(horizon / dt_min))
    values = {dt: np.empty(n_paths) for dt in dts}

    def run(lo, hi):
        z = _chunk_normals(seed, lo, hi, n_fine, d)
        for dt, fac in zip(dts, factors):
            n_steps = n_fine // fac
            # coarse standard normals: sum fine ones, rescale to unit variance
            zc = z[:, :n_steps * fac, :].reshape(z.shape[0], n_steps, fac, d)
            zc = zc.sum(axis=2) / math.sqrt(fac)
            cfg = SDEConfig(mu, kappa, dt, n_steps, n_paths, seed)
            p, _, _ = _integrate_chunk(cfg, initial, zc, drift, None, phi0,
                                       noise_scale)
            values[dt][lo:hi] = p

    _run_chunks(run, n_paths)
    return {dt: _reduce_estimate(values[dt], 0, 0.0) for dt in dts}


def reduced_batch_diagnostics(lat, c0, g0, cfg, flat_override=False):
    """Run cfg.n_paths reduced paths; returns (abort_fraction, endpoints).

    Endpoints of aborted paths are excluded; per-path generators keyed by
    (seed, path index) as everywhere else.
    """
    endpoints = []
    aborted = 0
    for i in range(cfg.n_paths):
        path = sample_reduced_path(lat, c0, g0, cfg, path_rng(cfg.seed, i),
                                   flat_override)
        if path.aborted_at is not None:
            aborted += 1
        else:
            endpoints.append(path.states[-1])
    return aborted / cfg.n_paths, endpoints


def _run_chunks(run, n_paths):
    spans = [(lo, min(lo + _CHUNK, n_paths)) for lo in range(0, n_paths, _CHUNK)]
    workers = worker_count()
    if workers == 1 or len(spans) == 1:
        for lo, hi in spans:
            run(lo, hi)
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            list(ex.map(lambda span: run(*span), spans))
