"""Batch front end: config parsing, invariant checks, simulations, CSV output.

Config files are flat ``key = value`` text with dotted section keys::

    lattice.dim = 2
    lattice.sites_per_dim = 4
    fields.g0 = 0.8
    sde.n_paths = 10000
    output_dir = out

Unknown keys are rejected.  Each command writes one RFC-4180 CSV file into
``output_dir``; the first line is a ``#`` provenance comment carrying the
package version, the SHA-256 of the canonicalized config and the seed, so
identical (config, seed, version) runs produce byte-identical files.  The
environment variable GAUGE_REDUCE_THREADS caps the worker count used by the
path estimators.  Exit codes: 0 success, 1 check/estimate failure,
2 config error.
"""

import argparse
import csv
import hashlib
import io
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .gauge import (AdaptedCoords, FieldPair, faddeev_popov, from_adapted,
                    gauge_transform, potential, projector_N, to_adapted,
                    transverse_projector)
from .kolmogorov import compare, discretization_budget
from .lattice import Lattice, LatticeSpec, flat
from .orbit import (SingularOrbitMetric, horizontal_metric,
                    mechanical_connection, orbit_metric, reduction_jacobian,
                    sigma_derivatives)
from .sde import (SDEConfig, feynman_kac, girsanov_check, path_rng,
                  reduced_batch_diagnostics)


class ConfigError(Exception):
    """Invalid or unparsable experiment configuration."""


# key -> (type, default); None default means required
_SCHEMA = {
    "lattice.dim": (int, 2),
    "lattice.sites_per_dim": (int, 4),
    "lattice.spacing": (float, 1.0),
    "fields.g0": (float, 1.0),
    "fields.mu": (float, 1.0),
    "fields.kappa": (float, 1.0),
    "fields.m": (float, 1.0),
    "sde.dt": (float, 1e-3),
    "sde.n_steps": (int, 100),
    "sde.n_paths": (int, 1000),
    "sde.seed": (int, 1),
    "sde.process": (str, "original"),
    "jacobian.source": (str, "uniform"),
    "jacobian.uniform_f1": (float, 1.0),
    "jacobian.uniform_f2": (float, 0.0),
    "jacobian.random_scale": (float, 1.0),
    "simulate.phi0": (str, "one"),
    "simulate.potential": (str, "zero"),
    "simulate.omega": (float, 1.0),
    "oracle.kind": (str, "mehler"),
    "oracle.dof": (int, 1),
    "oracle.grid_points": (int, 201),
    "oracle.halfwidth": (float, 5.0),
    "oracle.omega": (float, 1.0),
    "oracle.x0": (float, 0.0),
    "output_dir": (str, "out"),
}

_POSITIVE = {
    "lattice.spacing", "fields.g0", "fields.mu", "fields.kappa", "fields.m",
    "sde.dt", "simulate.omega", "oracle.omega", "oracle.halfwidth",
}

_CHOICES = {
    "sde.process": {"original", "reduced"},
    "jacobian.source": {"uniform", "random"},
    "simulate.phi0": {"one", "sum_squares"},
    "simulate.potential": {"zero", "quadratic"},
    "oracle.kind": {"mehler", "girsanov"},
}


class ExperimentConfig:
    """Validated flat configuration; values accessible by dotted key."""

    def __init__(self, values, text):
        self.values = values
        self.text = text

    def __getitem__(self, key):
        return self.values[key]

    @property
    def config_hash(self):
        canon = "\n".join(f"{k}={self.values[k]}" for k in sorted(self.values))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def lattice(self):
        return Lattice(LatticeSpec(self["lattice.dim"],
                                   self["lattice.sites_per_dim"],
                                   self["lattice.spacing"]))

    def sde(self):
        return SDEConfig(self["fields.mu"], self["fields.kappa"],
                         self["sde.dt"], self["sde.n_steps"],
                         self["sde.n_paths"], self["sde.seed"])


def parse_config(text):
    """Parse and validate a flat key/value config; strict on unknown keys."""
    values = {k: d for k, (_, d) in _SCHEMA.items()}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        typ, _ = _SCHEMA[key]
        try:
            values[key] = typ(val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
    for key in _POSITIVE:
        if not values[key] > 0:
            raise ConfigError(f"{key} must be positive, got {values[key]}")
    for key, allowed in _CHOICES.items():
        if values[key] not in allowed:
            raise ConfigError(f"{key} must be one of {sorted(allowed)}")
    for key in ("sde.n_steps", "sde.n_paths"):
        if values[key] < 1:
            raise ConfigError(f"{key} must be >= 1")
    if values["sde.seed"] < 0:
        raise ConfigError("sde.seed must be nonnegative")
    try:
        LatticeSpec(values["lattice.dim"], values["lattice.sites_per_dim"],
                    values["lattice.spacing"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return ExperimentConfig(values, text)


def load_config(path):
    return parse_config(Path(path).read_text())


def read_field_file(path):
    """Field file: header line ``dim N kind``, then one line per site."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    dim, n, kind = lines[0].split()
    dim, n = int(dim), int(n)
    if kind not in ("scalar", "vector", "doublet"):
        raise ConfigError(f"unknown field kind {kind!r}")
    comps = {"scalar": 1, "vector": dim, "doublet": 2}[kind]
    data = np.array([[float(tok) for tok in ln.split()] for ln in lines[1:]])
    if data.shape != (n ** dim, comps):
        raise ConfigError(
            f"field file shape {data.shape} != ({n ** dim}, {comps}) for {kind}")
    return dim, n, kind, data.T.copy()


def write_field_file(path, dim, n, kind, field):
    comps = field.reshape(-1, n ** dim)
    with open(path, "w") as fh:
        fh.write(f"{dim} {n} {kind}\n")
        for x in range(n ** dim):
            fh.write(" ".join(repr(float(c[x])) for c in comps) + "\n")


def _write_csv(config, name, header, rows):
    out = Path(config["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    buf.write(f"# gaugereduce-{__version__} config_sha256={config.config_hash} "
              f"seed={config['sde.seed']}\r\n")
    writer = csv.writer(buf)
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    path = out / f"{name}.csv"
    path.write_bytes(buf.getvalue().encode())
    return path


def _field_from_source(config, lat):
    src = config["jacobian.source"]
    if src == "uniform":
        f = np.stack([np.full(lat.n_sites, config["jacobian.uniform_f1"]),
                      np.full(lat.n_sites, config["jacobian.uniform_f2"])])
    else:
        rng = path_rng(config["sde.seed"], 0)
        f = config["jacobian.random_scale"] * rng.standard_normal((2, lat.n_sites))
    return f


# ----------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------

def cmd_check(config, corrupt=False):
    """Run the invariant suite; one CSV row per check.  ``corrupt`` is a
    test hook that deliberately damages the transverse projector."""
    lat = config.lattice()
    g0 = config["fields.g0"]
    rng = path_rng(config["sde.seed"], 0)
    fp = faddeev_popov(lat)
    P = transverse_projector(lat)
    if corrupt:
        P = P + 1e-3
    G = lat.gradient_matrix()
    V = lat.n_sites
    rows = []

    def add(name, residual, tol):
        rows.append((name, f"{residual:.6e}", f"{tol:.1e}",
                     "pass" if residual <= tol else "fail"))

    eps = lat.random_scalar(rng)
    A = lat.random_vector(rng)
    f = lat.random_doublet(rng)
    p = FieldPair(A, f, g0)

    add("projector_idempotent", float(np.abs(P @ P - P).max()), 1e-10)
    add("projector_kills_gradients", float(np.abs(P @ G).max()), 1e-10)
    add("divergence_of_projection", float(np.abs(lat.divergence_matrix() @ P).max()), 1e-10)
    N_A, N_f = projector_N(lat, f, g0)
    if corrupt:
        N_A = N_A + 1e-3
    add("projector_N_equals_transverse", float(np.abs(N_A - P).max()), 1e-12)
    R = fp.range_projector()
    add("fp_pseudo_identity", float(np.abs(fp.matrix @ fp.green - R).max()), 1e-10)
    add("fp_green_symmetric", float(np.abs(fp.green - fp.green.T).max()), 1e-12)
    add("fp_green_kills_constants", float(np.abs(fp.green @ np.ones(V)).max()), 1e-12)

    c = to_adapted(lat, p)
    add("coulomb_constraint", float(np.abs(lat.divergence(c.A_star)).max()), 1e-10)
    add("gauge_parameter_mean_zero", abs(float(c.a.mean())), 1e-14)
    back = from_adapted(lat, c, g0)
    add("adapted_round_trip",
        max(float(np.abs(back.A - p.A).max()), float(np.abs(back.f - p.f).max())), 1e-10)

    v1 = potential(lat, p)
    v2 = potential(lat, gauge_transform(lat, p, eps))
    add("potential_gauge_invariance", abs(v2 - v1) / (1.0 + abs(v1)), 1e-9)

    om = orbit_metric(lat, f, g0)
    sig = sigma_derivatives(lat, f, g0, om)
    d = 1e-5
    idx = [(0, 0), (1, V // 2)]
    worst = 0.0
    for a, x in idx:
        fp_ = f.copy(); fp_[a, x] += d
        fm_ = f.copy(); fm_[a, x] -= d
        fd = (orbit_metric(lat, fp_, g0).logdet - orbit_metric(lat, fm_, g0).logdet) / (2 * d)
        worst = max(worst, abs(fd - sig.grad_f[a, x]) / max(abs(fd), 1e-12))
    add("sigma_gradient_fd", worst, 1e-6)

    hm = horizontal_metric(lat, c, g0)
    add("pseudoinverse_identity", hm.pseudoinverse_residual(), 1e-9)

    conn = mechanical_connection(lat, f, g0, om)
    kA = lat.gradient(eps)
    kf = g0 * eps * np.stack([f[1], -f[0]])
    add("connection_reproduction", float(np.abs(conn.contract(kA, kf) - eps).max()), 1e-9)

    ok = all(r[3] == "pass" for r in rows)
    _write_csv(config, "check", ("check_name", "residual", "tolerance", "status"), rows)
    return 0 if ok else 1


def cmd_jacobian(config, field_path=None):
    """Reduction Jacobian for a generated or file-loaded scalar field."""
    lat = config.lattice()
    g0 = config["fields.g0"]
    if field_path is not None:
        dim, n, kind, data = read_field_file(field_path)
        if (dim, n, kind) != (lat.dim, lat.spec.sites_per_dim, "doublet"):
            raise ConfigError("field file does not match configured lattice/kind")
        f = data
    else:
        f = _field_from_source(config, lat)
    c = AdaptedCoords(np.zeros((lat.dim, lat.n_sites)), f, np.zeros(lat.n_sites))
    header = ("f_mean_sq", "f_min_sq", "f_max_sq", "logdet", "laplace_term",
              "grad_term", "J", "V_correction", "status")
    f2 = f[0] ** 2 + f[1] ** 2
    try:
        rep = reduction_jacobian(lat, c, g0, config["fields.mu"],
                                 config["fields.kappa"], config["fields.m"])
    except SingularOrbitMetric as exc:
        _write_csv(config, "jacobian", header,
                   [(f"{f2.mean():.12g}", f"{f2.min():.12g}", f"{f2.max():.12g}",
                     "", "", "", "", "", f"singular: {exc}")])
        return 1
    _write_csv(config, "jacobian", header,
               [(f"{f2.mean():.12g}", f"{f2.min():.12g}", f"{f2.max():.12g}",
                 f"{rep.logdet:.12g}", f"{rep.laplace_term:.12g}",
                 f"{rep.grad_term:.12g}", f"{rep.J:.12g}",
                 f"{rep.V_correction:.12g}", "ok")])
    return 0


def _phi0_fn(config, lat):
    kind = config["simulate.phi0"]
    hs = lat.spacing ** lat.dim
    if kind == "one":
        return lambda x: np.ones(x.shape[0])
    return lambda x: hs * np.sum(x ** 2, axis=1)


def _v_fn(config, lat):
    if config["simulate.potential"] == "zero":
        return None
    om = config["simulate.omega"]
    hs = lat.spacing ** lat.dim
    return lambda x: -0.5 * om ** 2 * hs * np.sum(x ** 2, axis=1)


def cmd_simulate(config):
    """Feynman-Kac estimate over the configured process; CSV with diagnostics."""
    lat = config.lattice()
    cfg = config.sde()
    g0 = config["fields.g0"]
    header = ("process", "mean", "std_error", "n_paths", "n_flagged",
              "max_exponent", "abort_fraction", "status")
    if config["sde.process"] == "original":
        d = (lat.dim + 2) * lat.n_sites
        initial = np.zeros(d)
        initial[lat.dim * lat.n_sites:(lat.dim + 1) * lat.n_sites] = 1.0  # f1 = 1
        est = feynman_kac(_phi0_fn(config, lat), _v_fn(config, lat), cfg, initial,
                          noise_scale=lat.spacing ** (-lat.dim / 2.0))
        abort = 0.0
    else:
        f0 = np.stack([np.ones(lat.n_sites), np.zeros(lat.n_sites)])
        c0 = AdaptedCoords(np.zeros((lat.dim, lat.n_sites)), f0, np.zeros(lat.n_sites))
        abort, endpoints = reduced_batch_diagnostics(lat, c0, g0, cfg)
        phi0 = _phi0_fn(config, lat)
        if endpoints:
            vals = phi0(np.stack([flat(c.f_tilde) for c in endpoints]))
            n = len(vals)
            mean = float(np.sum(vals) / n)
            se = float(np.std(vals, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        else:
            mean, se, n = float("nan"), float("nan"), 0
        from .sde import FKEstimate
        est = FKEstimate(mean, se, n, 0, 0.0, abort, unreliable=abort >= 0.01)
    status = "unreliable" if est.unreliable else "ok"
    _write_csv(config, "simulate", header,
               [(config["sde.process"], f"{est.mean:.12g}", f"{est.std_error:.12g}",
                 est.n_paths, est.n_flagged, f"{est.max_exponent:.6g}",
                 f"{abort:.6g}", status)])
    return 1 if est.unreliable else 0


def cmd_compare_oracle(config):
    """Monte Carlo vs oracle on the configured toy; writes the verdict."""
    cfg = config.sde()
    mu, kappa = config["fields.mu"], config["fields.kappa"]
    header = ("kind", "mc_mean", "mc_std_error", "reference", "budget",
              "difference", "verdict")
    if config["oracle.kind"] == "mehler":
        omega = config["oracle.omega"]
        dof = config["oracle.dof"]
        x0 = np.full(dof, config["oracle.x0"])
        v = lambda x: -0.5 * omega ** 2 * np.sum(x ** 2, axis=1)
        phi0 = lambda x: np.ones(x.shape[0])
        est = feynman_kac(phi0, v, cfg, x0)
        pde_val, budget = discretization_budget(
            v, phi0, x0, cfg.horizon, mu, kappa, dof,
            config["oracle.grid_points"], config["oracle.halfwidth"])
        verdict = compare(est, pde_val, budget)
        _write_csv(config, "compare_oracle", header,
                   [("mehler", f"{verdict.mc_mean:.12g}", f"{verdict.mc_std_error:.12g}",
                     f"{verdict.pde_value:.12g}", f"{verdict.budget:.6g}",
                     f"{verdict.difference:.6g}", "PASS" if verdict.passed else "FAIL")])
        return 0 if verdict.passed else 1
    # girsanov: drifted vs reweighted driftless, drift = orbit mean curvature
    # on the two-site chain (vectorized closed form f/(2|f|^2) per site).
    lat = Lattice(1, 2)
    g0 = config["fields.g0"]
    f0 = np.stack([np.ones(2), np.zeros(2)])
    pref = mu ** 2 * kappa

    def drift(x):
        v1, v2 = x[:, :2], x[:, 2:]
        r2 = v1 ** 2 + v2 ** 2
        return pref * np.concatenate([v1, v2], axis=1) / np.concatenate([2 * r2, 2 * r2], axis=1)

    phi0 = lambda x: np.sum(x ** 2, axis=1)
    e1, e2 = girsanov_check(cfg, flat(f0), drift, phi0)
    band = 3.0 * float(np.hypot(e1.std_error, e2.std_error))
    diff = abs(e1.mean - e2.mean)
    passed = diff <= band and not e2.unreliable
    _write_csv(config, "compare_oracle", header,
               [("girsanov", f"{e1.mean:.12g}", f"{e1.std_error:.12g}",
                 f"{e2.mean:.12g}", f"{band:.6g}", f"{diff:.6g}",
                 "PASS" if passed else "FAIL")])
    return 0 if passed else 1


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="gauge-reduce",
        description="Batch runner: invariant checks, Jacobians, simulations, oracle comparisons.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("check", "jacobian", "simulate", "compare-oracle"):
        sp = sub.add_parser(name)
        sp.add_argument("config", help="path to flat key=value config file")
        if name == "jacobian":
            sp.add_argument("--field-file", default=None,
                            help="load f~ from a field file instead of a generator")
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "check":
            return cmd_check(config)
        if args.command == "jacobian":
            return cmd_jacobian(config, args.field_file)
        if args.command == "simulate":
            return cmd_simulate(config)
        return cmd_compare_oracle(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
