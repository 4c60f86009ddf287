"""Configuration-driven experiment runner and command line front end.

Usage::

    kinetic-rbn <kind> --config cfg.json --out dir [--seed N] [--workers K]
    kinetic-rbn report <results-dir> [--out dir]

where ``<kind>`` is one of ``simulate``, ``pea-check``,
``uniqueness-probe``, ``density-check``, ``transport-check``, ``yw-check``
or ``zvonkin-check``.  Each run writes into ``--out``:

* ``summary.csv`` with columns ``experiment,item,value,stderr,status``
  (status is ``pass``, ``fail``, ``inconclusive`` or ``info``),
* per-datum CSV files specific to the kind (column orders are documented
  on the runner functions below),
* ``manifest.json`` recording the configuration echo, resolved seed and
  worker count, package version, ``git describe`` output when available,
  and the wall time.

Configs are JSON documents validated against the schema shipped at
``kinetic_rbn/schema/config.schema.json``; unknown keys are rejected by
name before any computation starts.  Seed and worker count resolve in
the order: command line flag, then the ``KRBN_SEED`` / ``KRBN_WORKERS``
environment variables, then the config file, then the defaults (0, 1).

For a fixed (config, seed) the numeric CSV outputs are byte-identical
across reruns and across worker counts: work is split by substream chunk
and reassembled in chunk order, never reduced in a worker-dependent
order.  ``manifest.json`` is provenance, not data; it contains the wall
time and is exempt from that guarantee.  Exit status: 0 when every
checked row passed (info and inconclusive rows do not fail a run), 1
when a check failed or a computation raised, 2 for configuration or
argument errors.
"""

import argparse
import json
import math
import os
import subprocess
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import __version__
from ._util import write_csv
from .drift_library import (Accumulating, LipschitzTest, MultiSingularity,
                            PeanoPower, ZeroDrift)
from .errors import (CheckFailure, ConfigError, ModelError, NumericError,
                     StatisticalError, UnsupportedError)
from .kinetic_sim import SystemSpec, peano_branching, simulate_ensemble, \
    uniqueness_gap
from .stable_noise import StableNoiseSpec
from . import density_probe, pea_verifier, transport_flow, yw_functions, \
    zvonkin_resolvent

KINDS = ("simulate", "pea-check", "uniqueness-probe", "density-check",
         "transport-check", "yw-check", "zvonkin-check")

_RUN_ERRORS = (CheckFailure, ModelError, NumericError, StatisticalError,
               UnsupportedError, ValueError)


# ---------------------------------------------------------------------------
# Configuration loading and validation
# ---------------------------------------------------------------------------

def load_schema():
    """The JSON schema the package validates experiment configs against."""
    path = resources.files("kinetic_rbn") / "schema" / "config.schema.json"
    return json.loads(path.read_text())


def validate_config(raw, kind=None):
    """Validate a raw config dict; raise ConfigError naming the offender.

    When `kind` is given it must agree with the config's own `kind` field
    if that is present (the command line subcommand wins only by being
    checked against, never by silent override).
    """
    import jsonschema

    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    validator = jsonschema.Draft7Validator(load_schema())
    errors = sorted(validator.iter_errors(raw),
                    key=lambda e: (len(e.absolute_path), str(e.absolute_path)))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        where = ".".join(str(p) for p in err.absolute_path) or "top level"
        raise ConfigError(f"{where}: {err.message}")
    if kind is not None and "kind" in raw and raw["kind"] != kind:
        raise ConfigError(
            f"config declares kind {raw['kind']!r} but the command line "
            f"requested {kind!r}")
    return raw


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment: kind, raw config, resolved seed/workers."""

    kind: str
    raw: dict
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @classmethod
    def from_file(cls, path, kind, seed=None, workers=None):
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") \
                from None
        validate_config(raw, kind)
        if seed is None:
            seed = raw.get("seed", 0)
        if workers is None:
            workers = raw.get("workers", 1)
        return cls(kind=kind, raw=raw, seed=seed, workers=workers)

    @property
    def plots(self):
        return bool(self.raw.get("plots", False))

    def section(self):
        """The kind-specific parameter block (dashes as underscores)."""
        return self.raw.get(self.kind.replace("-", "_"), {})


# ---------------------------------------------------------------------------
# Model and system construction
# ---------------------------------------------------------------------------

_MODEL_FIELDS = {
    "peano-power": {"beta", "amplitude", "center", "direction", "dim"},
    "multi-singularity": {"terms", "direction", "dim"},
    "accumulating": {"beta", "n_terms", "first", "anchors"},
    "lipschitz": {"matrix", "offset"},
    "zero": {"dim"},
}


def build_model(cfg):
    """Construct a drift model from its config block.

    The schema admits the union of all model fields; which ones apply
    depends on `type`, and a field for the wrong type is rejected here
    by name rather than silently ignored.
    """
    cfg = dict(cfg) if cfg else {"type": "peano-power", "beta": 0.5}
    mtype = cfg.pop("type")
    extra = sorted(set(cfg) - _MODEL_FIELDS[mtype])
    if extra:
        raise ConfigError(
            f"model field(s) {', '.join(map(repr, extra))} do not apply "
            f"to model type {mtype!r}")
    try:
        if mtype == "peano-power":
            return PeanoPower(beta=cfg.get("beta", 0.5),
                              a=cfg.get("amplitude", 1.0),
                              center=cfg.get("center", 0.0),
                              dim=cfg.get("dim", 1),
                              direction=cfg.get("direction"))
        if mtype == "multi-singularity":
            if "terms" not in cfg:
                raise ConfigError("multi-singularity model requires 'terms'")
            terms = [(a, c, b) for (a, c, b) in cfg["terms"]]
            return MultiSingularity(terms=terms, dim=cfg.get("dim", 1),
                                    direction=cfg.get("direction"))
        if mtype == "accumulating":
            if "anchors" in cfg:
                if "n_terms" in cfg or "first" in cfg:
                    raise ConfigError("accumulating model takes either "
                                      "'anchors' or 'n_terms'/'first'")
                return Accumulating(beta=cfg.get("beta", 0.5),
                                    anchors=cfg["anchors"])
            return Accumulating.with_power_gaps(
                beta=cfg.get("beta", 0.5),
                n_terms=cfg.get("n_terms", 10_000),
                first=cfg.get("first", 1.0))
        if mtype == "lipschitz":
            if "matrix" not in cfg:
                raise ConfigError("lipschitz model requires 'matrix'")
            return LipschitzTest(matrix=cfg["matrix"],
                                 offset=cfg.get("offset", 0.0))
        return ZeroDrift(dim=cfg.get("dim", 1))
    except ConfigError:
        raise
    except (ValueError, ModelError) as exc:
        raise ConfigError(f"model: {exc}") from None


def build_spec(raw):
    """SystemSpec from the top-level `model` and `noise` blocks."""
    model = build_model(raw.get("model"))
    ncfg = raw.get("noise", {})
    try:
        noise = StableNoiseSpec(alpha=ncfg.get("alpha", 2.0),
                                dim=ncfg.get("dim", model.dim))
        return SystemSpec(drift=model, noise=noise)
    except (ValueError, ModelError) as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# Runners.  Each returns summary rows (item, value, stderr, status) and
# writes its per-datum CSVs into out_dir.
# ---------------------------------------------------------------------------

def _status(ok):
    return "pass" if ok else "fail"


def _simulate_params(spec, sec):
    d = spec.dim
    state0 = np.asarray(sec.get("state0", [0.0] * (2 * d)), dtype=float)
    horizon = sec.get("horizon", 1.0)
    n_steps = sec.get("n_steps", 1000)
    grid = np.linspace(0.0, horizon, n_steps + 1)
    times = sec.get("times", "terminal")
    if times == "terminal":
        times = None
    elif times != "all":
        times = [float(s) for s in times]
    return state0, grid, times, sec.get("n_paths", 10_000), \
        sec.get("eps", 0.0), sec.get("chunk_size", 4096)


def _simulate_slice(raw, seed, chunk_range):
    """Worker entry point: rebuild everything from the JSON config.

    Rebuilding in the child instead of pickling the spec keeps drift
    models free to hold closures (time-dependent coefficients).
    """
    spec = build_spec(raw)
    sec = raw.get("simulate", {})
    state0, grid, times, n_paths, eps, chunk = _simulate_params(spec, sec)
    res = simulate_ensemble(spec, state0, grid, n_paths, seed, eps=eps,
                            times=times, chunk_size=chunk,
                            chunk_range=chunk_range)
    return res.times, res.V, res.X, res.truncated


def run_simulate(config, out_dir):
    """Ensemble simulation; no hypothesis is tested, all rows are info.

    Writes ``terminal.csv`` (path, v_0..v_{d-1}, x_0..x_{d-1}, truncated)
    with the state at the last stored node, and ``moments.csv`` (time,
    then per-coordinate mean_v, mean_x, var_v, var_x) over stored nodes.
    """
    spec = build_spec(config.raw)
    sec = config.section()
    state0, grid, times, n_paths, eps, chunk = _simulate_params(spec, sec)
    try:
        n_chunks = max(1, math.ceil(n_paths / chunk))
        workers = min(config.workers, n_chunks)
        if workers <= 1:
            t_nodes, V, X, trunc = _simulate_slice(config.raw, config.seed,
                                                   None)
        else:
            bounds = np.linspace(0, n_chunks, workers + 1).astype(int)
            ranges = [(int(a), int(b)) for a, b in zip(bounds, bounds[1:])
                      if b > a]
            with ProcessPoolExecutor(max_workers=len(ranges)) as pool:
                parts = list(pool.map(_simulate_slice,
                                      [config.raw] * len(ranges),
                                      [config.seed] * len(ranges),
                                      ranges))
            t_nodes = parts[0][0]
            V = np.concatenate([p[1] for p in parts], axis=0)
            X = np.concatenate([p[2] for p in parts], axis=0)
            trunc = np.concatenate([p[3] for p in parts], axis=0)
    except ValueError as exc:
        raise ConfigError(f"simulate: {exc}") from None

    d = spec.dim
    head = ["path"] + [f"v{i}" for i in range(d)] + \
        [f"x{i}" for i in range(d)] + ["truncated"]
    rows = [[p, *V[p, -1], *X[p, -1], int(trunc[p])]
            for p in range(V.shape[0])]
    write_csv(os.path.join(out_dir, "terminal.csv"), head, rows)

    mhead = ["time"] + [f"mean_v{i}" for i in range(d)] + \
        [f"mean_x{i}" for i in range(d)] + [f"var_v{i}" for i in range(d)] + \
        [f"var_x{i}" for i in range(d)]
    mrows = [[t_nodes[k], *V[:, k].mean(axis=0), *X[:, k].mean(axis=0),
              *V[:, k].var(axis=0), *X[:, k].var(axis=0)]
             for k in range(len(t_nodes))]
    write_csv(os.path.join(out_dir, "moments.csv"), mhead, mrows)

    out = [("n_paths", V.shape[0], "", "info"),
           ("truncated_paths", int(trunc.sum()), "", "info")]
    for i in range(d):
        out.append((f"terminal_mean_v{i}", float(V[:, -1, i].mean()),
                    float(V[:, -1, i].std() / math.sqrt(V.shape[0])), "info"))
        out.append((f"terminal_mean_x{i}", float(X[:, -1, i].mean()),
                    float(X[:, -1, i].std() / math.sqrt(V.shape[0])), "info"))
    return out


def run_pea_check(config, out_dir):
    """Decay-exponent fit of the Gaussian-weighted gradient integral.

    Writes ``pea.csv`` with columns (model, eps, lambda, t, s, theta,
    integral, stderr); theta is recorded in the probe's own units (kernel
    units by default).  eps = 0 rows integrate against the raw drift
    gradient.  The fitted log-log slope is compared with 3(beta - 1)/2
    when the model is a single power drift, and the spread of the
    integral across the mollification list is checked for
    eps-uniformity.
    """
    model = build_model(config.raw.get("model"))
    sec = config.section()
    probe = pea_verifier.PeaProbe(
        model=model,
        lam=sec.get("lam", 1.0),
        eps_list=tuple(sec.get("eps_list", (0.1, 0.05, 0.025))),
        time_pairs=tuple(tuple(p) for p in sec["time_pairs"])
        if "time_pairs" in sec else pea_verifier._default_pairs(),
        theta_grid=tuple(sec.get("theta_grid", (0.0, 0.5, 1.0))),
        kernel_units=sec.get("kernel_units", True),
        quad_limit=sec.get("quad_limit", 400),
        mc_budget=sec.get("mc_budget", 200_000),
        seed=config.seed)
    fit_eps = sec.get("fit_eps", 0.0)
    slope_tol = sec.get("slope_tol", 0.05)
    uniformity_tol = sec.get("uniformity_tol", 0.10)

    mtype = config.raw.get("model", {}).get("type", "peano-power")
    rows = []
    eps_all = [fit_eps] + [e for e in probe.eps_list if e != fit_eps]
    for eps in eps_all:
        for (t, s) in probe.time_pairs:
            for theta in probe.theta_grid:
                th = probe.theta_abs(theta, t, s)
                res = pea_verifier.pea_integral(probe, eps, t, s, th)
                rows.append([mtype, eps, probe.lam, t, s, theta,
                             res.value, res.stderr])
    write_csv(os.path.join(out_dir, "pea.csv"),
              ["model", "eps", "lambda", "t", "s", "theta", "integral",
               "stderr"], rows)

    fit = pea_verifier.fit_decay_exponent(probe, eps=fit_eps)
    out = [("decay_slope", fit.slope, fit.stderr, "info")]
    if isinstance(model, PeanoPower):
        target = 1.5 * (model.beta - 1.0)
        out.append(("slope_minus_target", fit.slope - target, fit.stderr,
                    _status(abs(fit.slope - target) <= slope_tol)))
    if sec.get("check_uniformity", True):
        rep = pea_verifier.epsilon_uniformity(probe)
        out.append(("eps_uniformity_spread", rep.spread, "",
                    _status(rep.spread < uniformity_tol)))

    if config.plots:
        vals = np.asarray(fit.values, dtype=float)
        worst = vals.max(axis=0) if vals.ndim == 2 else vals
        _plot_decay(os.path.join(out_dir, "decay_loglog.svg"),
                    fit.taus, worst, fit.slope)
    return out


def run_uniqueness_probe(config, out_dir):
    """Shared-noise coupling gap plus the noiseless branching contrast.

    Writes ``gap.csv`` (eps_a, eps_b, n_paths, mean_gap, max_gap, stderr)
    and ``branch.csv`` (beta, horizon, residual_zero, residual_branch,
    branch_terminal).  The probe passes when the coupled regularizations
    stay within ``gap_tol`` on average while the zero-noise equation
    genuinely branches (two exact solutions, both with residual ~ 0).
    """
    spec = build_spec(config.raw)
    sec = config.section()
    d = spec.dim
    state0 = np.asarray(sec.get("state0", [0.0] * (2 * d)), dtype=float)
    horizon = sec.get("horizon", 1.0)
    grid = np.linspace(0.0, horizon, sec.get("n_steps", 1000) + 1)
    eps_pair = tuple(sec.get("eps_pair", (0.05, 0.025)))
    gap_tol = sec.get("gap_tol", 0.05)
    rep = uniqueness_gap(spec, state0, eps_pair, sec.get("n_paths", 4096),
                         config.seed, grid)
    write_csv(os.path.join(out_dir, "gap.csv"),
              ["eps_a", "eps_b", "n_paths", "mean_gap", "max_gap", "stderr"],
              [[eps_pair[0], eps_pair[1], rep.n_paths, rep.mean_gap,
                rep.max_gap, rep.stderr]])

    beta = sec.get("branch_beta", getattr(spec.drift, "beta", 0.5))
    br = peano_branching(beta, horizon=horizon)
    write_csv(os.path.join(out_dir, "branch.csv"),
              ["beta", "horizon", "residual_zero", "residual_branch",
               "branch_terminal"],
              [[br.beta, br.horizon, br.residual_zero, br.residual_branch,
                br.branch_terminal]])

    return [
        ("mean_gap", rep.mean_gap, rep.stderr,
         _status(rep.mean_gap <= gap_tol)),
        ("max_gap", rep.max_gap, "", "info"),
        ("branch_residual_zero", br.residual_zero, "",
         _status(br.residual_zero <= 1e-8)),
        ("branch_residual_branch", br.residual_branch, "",
         _status(br.residual_branch <= 1e-8)),
        ("branch_terminal", br.branch_terminal, "", _status(br.distinct)),
    ]


def run_density_check(config, out_dir):
    """Gaussian envelope fit over the KDE of X_s, per mollification level.

    Writes ``envelope.csv`` (eps, c_fit, lambda_star, center, bandwidth,
    half_bw_violation) and ``kde.csv`` (eps, xi, kde, envelope, ratio).
    Passes when the fitted constants across the eps list stay within a
    factor ``ratio_tol`` of each other, i.e. the envelope constant does
    not blow up as the regularization is removed.
    """
    spec = build_spec(config.raw)
    sec = config.section()
    d = spec.dim
    state0 = np.asarray(sec.get("state0", [0.0] * (2 * d)), dtype=float)
    t, s = sec.get("t", 0.0), sec.get("s", 1.0)
    if not s > t:
        raise ConfigError("density_check needs s > t")
    grid = np.linspace(t, s, sec.get("n_steps", 1000) + 1)
    eps_list = sec.get("eps_list", (0.1, 0.05, 0.025))
    n_paths = sec.get("n_paths", 20_000)
    ratio_tol = sec.get("ratio_tol", 2.0)

    out, env_rows, kde_rows, cs = [], [], [], []
    for eps in eps_list:
        ens = simulate_ensemble(spec, state0, grid, n_paths, config.seed,
                                eps=eps, times=[s])
        rep = density_probe.envelope_check(
            ens, spec, eps, t, s, state0,
            grid_points=sec.get("grid_points", 401))
        cs.append(rep.c_fit)
        env_rows.append([eps, rep.c_fit, rep.lambda_star, rep.center,
                         rep.bandwidth, rep.half_bw_violation])
        kde_rows.extend([eps, *r] for r in rep.rows)
        out.append((f"c_fit[eps={eps:g}]", rep.c_fit, "", "info"))
        out.append((f"lambda_star[eps={eps:g}]", rep.lambda_star, "",
                    "info"))
    write_csv(os.path.join(out_dir, "envelope.csv"),
              ["eps", "c_fit", "lambda_star", "center", "bandwidth",
               "half_bw_violation"], env_rows)
    write_csv(os.path.join(out_dir, "kde.csv"),
              ["eps", "xi", "kde", "envelope", "ratio"], kde_rows)

    ratio = max(cs) / min(cs)
    out.append(("c_fit_ratio", ratio, "", _status(ratio <= ratio_tol)))
    if config.plots:
        first = [r for r in kde_rows if r[0] == eps_list[0]]
        _plot_envelope(os.path.join(out_dir, "kde_envelope.svg"),
                       first, cs[0], eps_list[0])
    return out


def run_transport_check(config, out_dir):
    """Characteristic-transport consistency checks (Brownian noise only).

    Writes ``transport.csv`` with columns (eps, q, moment, stderr,
    khasminskii_delta): the empirical q-th moments of |grad u_eps| along
    simulated kinetic paths and the induced integrability window sizes.
    Summary rows check the gradient identity grad u = I - J at a probe
    point, the PDE residual of the transport solution, the Gronwall
    majorant at ``n_gronwall`` starting points, and the eps-flatness of
    the moment table.

    The pointwise probes default to a position 0.3 away from the initial
    x (configurable via ``probe_x``): finite differences at the exact
    singular center sit on the measure-zero set where the almost-
    everywhere drift gradient disagrees with the limit of difference
    quotients, which the moment table handles statistically but a single
    difference quotient does not.
    """
    spec = build_spec(config.raw)
    if not spec.noise.is_brownian:
        raise ConfigError("transport-check requires alpha = 2 "
                          "(Brownian velocity noise)")
    sec = config.section()
    d = spec.dim
    state0 = np.asarray(sec.get("state0", [1.0, 0.0] if d == 1 else
                                [1.0] * d + [0.0] * d), dtype=float)
    t0, tau = sec.get("t", 0.25), sec.get("tau", 1.0)
    if not tau > t0:
        raise ConfigError("transport_check needs tau > t")
    eps_list = sec.get("eps_list", (0.1, 0.05, 0.025))
    q = sec.get("q", 2.0)
    model = spec.drift
    eps0 = eps_list[0]
    x_probe = np.asarray(sec.get("probe_x", state0[d:] + 0.3 *
                                 np.eye(d)[0]), dtype=float)

    # a single frozen velocity trajectory drives the pointwise probes
    grid = np.linspace(0.0, tau, 257)
    ens = simulate_ensemble(spec, state0, grid, 1, config.seed, times="all")
    traj = transport_flow.FrozenTrajectory(grid, ens.V[0])

    out = []
    tol = sec.get("identity_tol", 1e-4)
    try:
        rep = transport_flow.grad_identity_check(
            eps0, traj, t0, x_probe, tau, model=model, tol=tol)
        out.append(("grad_identity_gap", rep.max_gap, "",
                    _status(rep.max_gap <= tol)))
    except CheckFailure as exc:
        out.append(("grad_identity_gap", str(exc), "", "fail"))

    rtol = sec.get("residual_tol", 1e-4)
    # inside a segment of the 256-node grid, away from interpolation kinks
    t_res = t0 + sec.get("probe_t_frac", 0.52) * (tau - t0)
    res = transport_flow.transport_residual(
        eps0, traj, t_res, x_probe, tau, model=model,
        dt=sec.get("residual_dt", 5e-4),
        n_steps=sec.get("residual_steps", 2048))
    res_norm = float(np.max(np.abs(res)))
    out.append(("transport_residual", res_norm, "",
                _status(res_norm <= rtol)))

    n_gron = sec.get("n_gronwall", 1000)
    xs = np.zeros((n_gron, d))
    xs[:, 0] = np.linspace(-2.0, 2.0, n_gron)
    path = transport_flow.characteristic_batch(eps0, traj, t0, xs, tau,
                                               model=model)
    if d == 1:
        norms = np.abs(path.jacobians[..., 0, 0])
    else:
        norms = np.linalg.norm(path.jacobians, ord=2, axis=(-2, -1))
    viol = int(np.sum(norms > np.exp(path.budget) * (1.0 + 1e-9)))
    out.append(("gronwall_violations", viol, "", _status(viol == 0)))

    table = transport_flow.grad_moments(
        spec, eps_list, q, t0, tau, sec.get("n_paths", 2000), config.seed,
        n_rk=sec.get("n_rk", 128), n_sim=sec.get("n_sim", 128),
        state0=state0)
    write_csv(os.path.join(out_dir, "transport.csv"),
              ["eps", "q", "moment", "stderr", "khasminskii_delta"],
              [[r.eps, r.q, r.moment, r.stderr, r.khasminskii_delta]
               for r in table.rows])
    n_se = sec.get("flat_n_se", 2.0)
    flat = all(
        abs(b.moment - a.moment) <= n_se * math.hypot(a.stderr, b.stderr)
        for a, b in zip(table.rows, table.rows[1:]))
    out.append(("moment_uniformity", int(flat), "", _status(flat)))
    for r in table.rows:
        out.append((f"moment[eps={r.eps:g}]", r.moment, r.stderr, "info"))
        out.append((f"khasminskii_delta[eps={r.eps:g}]",
                    r.khasminskii_delta, "", "info"))
    return out


def run_yw_check(config, out_dir):
    """Defining properties of the approximation sequence phi_n.

    Writes ``phi.csv`` (x, phi_1 .. phi_{n_max}) on the check grid.
    Summary rows: the pointwise properties for each n, the unit mass of
    each density psi_n within ``mass_tol``, and the closed-form CDF
    reaching exactly 1 at the right endpoint of the support annulus.
    """
    sec = config.section()
    n_max = sec.get("n_max", 8)
    grid = yw_functions.default_check_grid(
        n_max=n_max, total=sec.get("grid_points", 2001))
    mass_tol = sec.get("mass_tol", 1e-10)
    qpts = sec.get("quadrature_points", 20_001)

    n_list = list(range(1, n_max + 1))
    rep = yw_functions.check_yw_properties(n_list, grid)
    out = [("properties_all", int(rep.ok), "", _status(rep.ok))]
    for prop, n, x, detail in rep.failures:
        out.append((f"violation[{prop},n={n}]", x, "", "fail"))

    cdf_gap = 0.0
    for n in n_list:
        mass = yw_functions.element(n).mass(quadrature_points=qpts)
        out.append((f"mass_defect[n={n}]", abs(mass - 1.0), "",
                    _status(abs(mass - 1.0) <= mass_tol)))
        cdf_gap = max(cdf_gap,
                      abs(yw_functions.psi_cdf(n, yw_functions.a_seq(n - 1))
                          - 1.0))
    out.append(("cdf_endpoint_gap", cdf_gap, "", _status(cdf_gap <= 1e-12)))

    xs = np.linspace(-1.0, 1.0, sec.get("grid_points", 2001))
    cols = [yw_functions.phi_n(n, xs) for n in n_list]
    write_csv(os.path.join(out_dir, "phi.csv"),
              ["x"] + [f"phi_{n}" for n in n_list],
              np.column_stack([xs] + cols))
    if config.plots:
        _plot_phi(os.path.join(out_dir, "phi_curves.svg"), xs, cols, n_list)
    return out


def run_zvonkin_check(config, out_dir):
    """Feynman-Kac resolvent probe: smallness, regularity, and the
    telescoping second-difference bound.

    Writes ``u.csv`` (t, v, x, u, stderr), ``gradient.csv`` (lambda,
    sup_dv, sup_dx, total, stderr), ``holder.csv`` (separation,
    difference, stderr) and ``phih.csv`` (t, v, w, x, x_prime, phi,
    phi_stderr, h, h_stderr, phi_slack, phi_h_slack, conclusive,
    passed).  All Monte Carlo estimates share common random numbers
    within a check, and the entire lambda schedule is priced on one path
    family.
    """
    spec = build_spec(config.raw)
    if spec.dim != 1:
        raise ConfigError("zvonkin-check requires a one-dimensional model")
    sec = config.section()
    lam = sec.get("lam", 1.0)
    kw = dict(horizon=sec.get("horizon", 1.0),
              n_paths=sec.get("n_paths", 20_000),
              n_steps=sec.get("n_steps", 128),
              seed=config.seed, m=sec.get("m_cutoff", 10.0))
    probe = zvonkin_resolvent.ResolventProbe(spec, lam=lam, **kw)
    out = []

    if sec.get("check_constant_source", True):
        unit = zvonkin_resolvent.ResolventProbe(
            spec, lam=lam, f=lambda s, v, x: np.ones(x.shape[:-1]), **kw)
        est = zvonkin_resolvent.estimate_u(unit, 0.0, 0.3, -0.2)
        exact = (1.0 - math.exp(-lam * kw["horizon"])) / lam
        gap = abs(est.value - exact)
        out.append(("constant_source_gap", gap, est.stderr,
                    _status(gap <= 1e-12 + 3.0 * est.stderr)))

    pts = [(t, v, x) for t in (0.0, 0.25) for v in (-0.5, 0.5)
           for x in (-0.5, 0.0, 0.5)]
    write_csv(os.path.join(out_dir, "u.csv"),
              ["t", "v", "x", "u", "stderr"],
              zvonkin_resolvent.u_table(probe, pts))

    threshold = sec.get("threshold", 0.5)
    n_se = sec.get("n_se", 3.0)
    schedule = [lam * 2.0 ** j
                for j in range(sec.get("lambda_doublings", 6))]
    lam_star = None
    try:
        rep = zvonkin_resolvent.check_gradient_bounds(
            probe, lambda_schedule=schedule, threshold=threshold, n_se=n_se)
        lam_star = rep.lambda_star
        write_csv(os.path.join(out_dir, "gradient.csv"),
                  ["lambda", "sup_dv", "sup_dx", "total", "stderr"],
                  rep.csv_rows())
        out.append(("lambda_star", lam_star, "", "pass"))
    except CheckFailure as exc:
        write_csv(os.path.join(out_dir, "gradient.csv"),
                  ["lambda", "sup_dv", "sup_dx", "total", "stderr"], [])
        out.append(("lambda_star", str(exc), "", "fail"))

    if sec.get("check_holder", True):
        hp = zvonkin_resolvent.ResolventProbe(
            spec, lam=sec.get("holder_lam", 1.0), **kw)
        hrep = zvonkin_resolvent.check_holder_gradient(hp)
        write_csv(os.path.join(out_dir, "holder.csv"),
                  ["separation", "difference", "stderr"],
                  list(zip(hrep.separations, hrep.differences,
                           hrep.diff_stderr)))
        if hrep.inconclusive:
            out.append(("holder_exponent", hrep.reason, "", "inconclusive"))
        else:
            ok = hrep.exponent >= sec.get("min_exponent", 0.4)
            out.append(("holder_exponent", hrep.exponent, hrep.stderr,
                        _status(ok)))

    if sec.get("check_phi_h", True):
        sp = zvonkin_resolvent.ResolventProbe(
            spec, lam=lam_star if lam_star is not None else lam, **kw)
        prep = zvonkin_resolvent.check_phi_h_lemma(sp)
        write_csv(os.path.join(out_dir, "phih.csv"),
                  ["t", "v", "w", "x", "x_prime", "phi", "phi_stderr", "h",
                   "h_stderr", "phi_slack", "phi_h_slack", "conclusive",
                   "passed"], prep.csv_rows())
        out.append(("phi_h_all_passed", int(prep.all_passed), "",
                    _status(prep.all_passed)))
        out.append(("phi_h_inconclusive_rows", prep.n_inconclusive, "",
                    "info"))
        out.append(("phi_h_kappa", prep.kappa_fit, "", "info"))
    return out


_RUNNERS = {
    "simulate": run_simulate,
    "pea-check": run_pea_check,
    "uniqueness-probe": run_uniqueness_probe,
    "density-check": run_density_check,
    "transport-check": run_transport_check,
    "yw-check": run_yw_check,
    "zvonkin-check": run_zvonkin_check,
}


# ---------------------------------------------------------------------------
# Plot helpers (SVG, only on request, deterministic metadata)
# ---------------------------------------------------------------------------

def _pyplot():
    try:
        import matplotlib
    except ImportError:
        raise ConfigError(
            "plots requested but matplotlib is not installed; "
            "pip install 'kinetic-rbn[plots]'") from None
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "kinetic-rbn"
    import matplotlib.pyplot as plt
    return plt


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})


def _plot_decay(path, taus, values, slope):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(taus, values, "o", label="worst-case integral")
    anchor = values[0] * (taus / taus[0]) ** slope
    ax.loglog(taus, anchor, "-", label=f"slope {slope:.3f}")
    ax.set_xlabel("s - t")
    ax.set_ylabel("I(s - t)")
    ax.legend()
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def _plot_envelope(path, rows, c_fit, eps):
    plt = _pyplot()
    xi = [r[1] for r in rows]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(xi, [r[2] for r in rows], label="KDE")
    ax.plot(xi, [c_fit * r[3] for r in rows], "--",
            label=f"C * envelope (C = {c_fit:.3g})")
    ax.set_xlabel("x")
    ax.set_ylabel("density")
    ax.set_title(f"eps = {eps:g}")
    ax.legend()
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def _plot_phi(path, xs, cols, n_list):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(xs, np.abs(xs), "k--", linewidth=0.8, label="|x|")
    for n, col in zip(n_list, cols):
        ax.plot(xs, col, label=f"n = {n}")
    ax.set_xlabel("x")
    ax.set_ylabel("phi_n(x)")
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


# ---------------------------------------------------------------------------
# Orchestration, manifest, report
# ---------------------------------------------------------------------------

@dataclass
class ExperimentResult:
    kind: str
    out_dir: str
    rows: list
    n_fail: int
    wall_time_s: float

    @property
    def passed(self):
        return self.n_fail == 0


def _git_describe():
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty",
                              "--tags"], cwd=here, capture_output=True,
                             text=True, timeout=10)
    except OSError:
        return None
    return out.stdout.strip() if out.returncode == 0 else None


def run_experiment(config, out_dir):
    """Run one experiment and write summary.csv plus manifest.json.

    `config` is an ExperimentConfig; per-datum artifacts land next to the
    summary.  Returns an ExperimentResult; does not raise on failed
    checks (they are rows with status fail), only on config errors and
    broken computations.
    """
    if config.plots:
        _pyplot()
    os.makedirs(out_dir, exist_ok=True)
    started = time.perf_counter()
    rows = _RUNNERS[config.kind](config, out_dir)
    wall = time.perf_counter() - started
    write_csv(os.path.join(out_dir, "summary.csv"),
              ["experiment", "item", "value", "stderr", "status"],
              [[config.kind, *r] for r in rows])
    manifest = {
        "kind": config.kind,
        "seed": config.seed,
        "workers": config.workers,
        "config": config.raw,
        "package_version": __version__,
        "git_describe": _git_describe(),
        "wall_time_s": round(wall, 3),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    n_fail = sum(1 for r in rows if r[3] == "fail")
    return ExperimentResult(kind=config.kind, out_dir=out_dir, rows=rows,
                            n_fail=n_fail, wall_time_s=wall)


def emit_report(results_dir, out_dir=None):
    """Consolidate every summary.csv under results_dir into one report.

    Writes ``report.csv`` (run, experiment, item, value, stderr, status)
    and ``report.md`` with a verdict per run and overall.  A directory
    with no summaries is an argument error.  Returns (n_fail,
    n_inconclusive, csv_path, md_path).
    """
    import csv as _csv

    if not os.path.isdir(results_dir):
        raise ConfigError(f"{results_dir} is not a directory")
    out_dir = results_dir if out_dir is None else out_dir
    found = []
    for root, dirs, files in os.walk(results_dir):
        dirs.sort()
        if "summary.csv" in files:
            rel = os.path.relpath(root, results_dir)
            found.append((("." if rel == os.curdir else rel),
                          os.path.join(root, "summary.csv")))
    if not found:
        raise ConfigError(f"no summary.csv found under {results_dir}")

    all_rows, verdicts = [], []
    for run, path in sorted(found):
        with open(path, newline="") as fh:
            body = list(_csv.reader(fh))[1:]
        counts = {"pass": 0, "fail": 0, "inconclusive": 0, "info": 0}
        for row in body:
            all_rows.append([run] + row)
            counts[row[4]] = counts.get(row[4], 0) + 1
        verdict = ("FAIL" if counts["fail"] else
                   "INCONCLUSIVE" if counts["inconclusive"] else "PASS")
        verdicts.append((run, body[0][0] if body else "", counts, verdict))

    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "report.csv")
    write_csv(csv_path,
              ["run", "experiment", "item", "value", "stderr", "status"],
              all_rows)

    n_fail = sum(v[2]["fail"] for v in verdicts)
    n_inc = sum(v[2]["inconclusive"] for v in verdicts)
    overall = "FAIL" if n_fail else "PASS"
    lines = ["# kinetic-rbn consolidated report", "",
             "| run | experiment | pass | fail | inconclusive | info | "
             "verdict |",
             "|---|---|--:|--:|--:|--:|---|"]
    for run, exp, c, verdict in verdicts:
        lines.append(f"| {run} | {exp} | {c['pass']} | {c['fail']} | "
                     f"{c['inconclusive']} | {c['info']} | {verdict} |")
    attention = [r for r in all_rows if r[5] in ("fail", "inconclusive")]
    if attention:
        lines += ["", "## Rows needing attention", "",
                  "| run | item | value | stderr | status |",
                  "|---|---|---|---|---|"]
        lines += [f"| {r[0]} | {r[2]} | {r[3]} | {r[4]} | {r[5]} |"
                  for r in attention]
    lines += ["", f"Overall verdict: **{overall}** "
              f"({len(verdicts)} run(s), {len(all_rows)} row(s), "
              f"{n_fail} failed, {n_inc} inconclusive)", ""]
    md_path = os.path.join(out_dir, "report.md")
    with open(md_path, "w") as fh:
        fh.write("\n".join(lines))
    return n_fail, n_inc, csv_path, md_path


# ---------------------------------------------------------------------------
# Command line
# ---------------------------------------------------------------------------

def _resolve(flag, env_name, cfg_value, default):
    if flag is not None:
        return flag
    env = os.environ.get(env_name)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(
                f"{env_name} must be an integer, got {env!r}") from None
    return cfg_value if cfg_value is not None else default


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="kinetic-rbn",
        description="Numerical experiments for kinetic SDEs with singular "
                    "drift and alpha-stable velocity noise.")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="command")
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run the {kind} experiment")
        p.add_argument("--config", required=True,
                       help="JSON experiment configuration")
        p.add_argument("--out", default=None,
                       help="output directory (default: ./<kind>-out)")
        p.add_argument("--seed", type=int, default=None,
                       help="master seed; overrides KRBN_SEED and config")
        p.add_argument("--workers", type=int, default=None,
                       help="worker processes; overrides KRBN_WORKERS "
                            "and config")
    rp = sub.add_parser("report",
                        help="consolidate summary files into report.csv "
                             "and report.md")
    rp.add_argument("results_dir", help="directory holding experiment runs")
    rp.add_argument("--out", default=None,
                    help="where to write the report (default: results_dir)")
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "report":
            n_fail, n_inc, csv_path, md_path = emit_report(
                args.results_dir, out_dir=args.out)
            print(f"report: {csv_path}")
            print(f"report: {md_path}")
            if n_fail:
                print(f"{n_fail} failing row(s)", file=sys.stderr)
                return 1
            return 0

        with open(args.config) as fh:
            raw = json.load(fh)
        validate_config(raw, args.command)
        seed = _resolve(args.seed, "KRBN_SEED", raw.get("seed"), 0)
        workers = _resolve(args.workers, "KRBN_WORKERS",
                           raw.get("workers"), 1)
        config = ExperimentConfig(kind=args.command, raw=raw, seed=seed,
                                  workers=workers)
        out_dir = args.out if args.out else f"{args.command}-out"
        result = run_experiment(config, out_dir)
        for item, value, stderr, status in result.rows:
            print(f"[{status:>12}] {item} = {value}"
                  + (f" +- {stderr}" if stderr != "" else ""))
        print(f"wrote {out_dir} in {result.wall_time_s:.2f}s")
        return 0 if result.passed else 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"config error: not valid JSON: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except _RUN_ERRORS as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
