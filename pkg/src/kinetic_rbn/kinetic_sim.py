"""Time stepping for the degenerate kinetic system.

The state is a velocity/position pair (V, X) in R^d x R^d.  V follows an
SDE driven by the stable noise (explicit Euler: drift and diffusion
coefficient frozen at the left endpoint, noise increment exact in law);
X integrates V by the trapezoidal rule plus a left-endpoint drift term

    V_{k+1} = V_k + mu(t_k, V_k) dt + sigma(t_k, V_k) dL_k
    X_{k+1} = X_k + (V_k + V_{k+1})/2 dt + F(t_k, X_k) dt

so X is continuous piecewise-linear by construction.  The drift F may be
used raw (eps = 0) or mollified at scale eps > 0.

Ensembles are chunked: chunk c of a run with master seed s draws all its
noise from `substream(s, c)`, so results are reproducible bit for bit for
a fixed chunk size no matter how the chunks are scheduled.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._util import substream
from .drift_library import DriftModel, MollifierSpec, ZeroDrift, mollify
from .errors import ModelError, NumericError
from .stable_noise import NoiseIncrementStream, StableNoiseSpec, \
    sample_increments, sample_stream

__all__ = ["SystemSpec", "KineticPath", "EnsembleResult", "simulate",
           "simulate_ensemble", "flow_theta", "uniqueness_gap", "GapReport",
           "peano_branching", "PeanoBranchReport", "exact_kinetic_covariance"]


@dataclass(frozen=True)
class SystemSpec:
    """Coefficients of the kinetic system.

    mu : callable (t, v) -> array like v, or None for zero drift in V.
    sigma : callable (t, v) -> (d, d) matrix (or a batch (..., d, d) for
        batched v), or None for the identity.  When a callable is given,
        its square sigma sigma* is spot-checked against the two-sided
        coercivity bound Lambda^-1 |eta|^2 <= <sigma sigma* eta, eta> <=
        Lambda |eta|^2 on pseudo-random (t, v, eta) triples.
    coercivity : the constant Lambda >= 1 of that bound, or None to skip
        the check (deliberately degenerate controls such as sigma = 0).
    """

    drift: DriftModel
    noise: StableNoiseSpec
    mu: Optional[Callable] = None
    sigma: Optional[Callable] = None
    coercivity: Optional[float] = 2.0

    def __post_init__(self):
        if self.drift.dim != self.noise.dim:
            raise ModelError(
                f"drift dim {self.drift.dim} != noise dim {self.noise.dim}")
        if self.coercivity is not None and not self.coercivity >= 1:
            raise ModelError("coercivity constant must be >= 1")

    @property
    def dim(self):
        return self.noise.dim

    def eval_mu(self, t, v):
        if self.mu is None:
            return np.zeros_like(v)
        return np.asarray(self.mu(t, v), dtype=float)


def _spot_check_coercivity(spec, trials=16):
    """Check Lambda^-1 |eta|^2 <= <sigma sigma* eta, eta> <= Lambda |eta|^2
    on pseudo-random (t, v, eta) triples; raises ModelError on failure."""
    if spec.sigma is None or spec.coercivity is None:
        return
    lam = spec.coercivity
    rng = substream(0xC0E, 0)
    d = spec.dim
    for _ in range(trials):
        t = rng.uniform(0.0, 2.0)
        v = rng.standard_normal(d)
        eta = rng.standard_normal(d)
        sig = np.asarray(spec.sigma(t, v), dtype=float).reshape(d, d)
        quad = float(eta @ (sig @ sig.T) @ eta)
        n2 = float(eta @ eta)
        if not (n2 / lam - 1e-12 <= quad <= lam * n2 + 1e-12):
            raise ModelError(
                "coercivity spot-check failed at "
                f"t={t:.3f}: <ss*eta,eta>={quad:.4g} vs |eta|^2={n2:.4g} "
                f"with Lambda={lam}")


def _drift_fn(spec, eps):
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if eps == 0:
        return spec.drift.evaluate
    moll = MollifierSpec(eps=eps)
    return lambda t, x: mollify(spec.drift, moll, t, x)


def _apply_sigma(spec, t, v, incr):
    if spec.sigma is None:
        return incr
    sig = np.asarray(spec.sigma(t, v), dtype=float)
    return np.einsum("...ij,...j->...i", sig, incr)


@dataclass
class KineticPath:
    """One simulated trajectory: arrays V, X of shape (n_nodes, d)."""

    grid: np.ndarray
    V: np.ndarray
    X: np.ndarray
    noise_ref: NoiseIncrementStream
    truncated: bool = False

    @property
    def terminal(self):
        return self.V[-1], self.X[-1]


def simulate(spec, state0, stream, eps=0.0, overflow_guard=1e8):
    """Run one path of the kinetic system along the stream's grid.

    Parameters
    ----------
    spec : SystemSpec
    state0 : array of shape (2d,), the stacked initial (v0, x0)
    stream : NoiseIncrementStream whose noise spec matches spec.noise
    eps : float, >= 0; 0 evaluates the raw drift pointwise, > 0 the
        mollified drift at that scale
    overflow_guard : abort threshold on |X|; when hit the path is frozen
        at its last finite state and flagged truncated

    Returns
    -------
    KineticPath.  Deterministic: the same spec and stream give bitwise
    identical paths.
    """
    if stream.spec != spec.noise:
        raise ModelError("stream was sampled for a different noise spec")
    _spot_check_coercivity(spec)
    d = spec.dim
    state0 = np.asarray(state0, dtype=float).reshape(-1)
    if state0.shape != (2 * d,):
        raise ValueError(f"state0 must have shape ({2 * d},)")
    drift = _drift_fn(spec, eps)
    grid = stream.grid
    dts = stream.dts
    n = len(dts)
    V = np.empty((n + 1, d))
    X = np.empty((n + 1, d))
    v = state0[:d].copy()
    x = state0[d:].copy()
    V[0], X[0] = v, x
    truncated = False
    for k in range(n):
        t, dt = grid[k], dts[k]
        v_new = v + spec.eval_mu(t, v) * dt \
            + _apply_sigma(spec, t, v, stream.increments[k])
        x_new = x + 0.5 * (v + v_new) * dt + drift(t, x) * dt
        if not np.all(np.abs(x_new) < overflow_guard):
            V[k + 1:] = v
            X[k + 1:] = x
            truncated = True
            break
        v, x = v_new, x_new
        V[k + 1], X[k + 1] = v, x
    return KineticPath(grid=grid, V=V, X=X, noise_ref=stream,
                       truncated=truncated)


@dataclass
class EnsembleResult:
    """Marginals of an ensemble run at the requested time nodes.

    V, X have shape (n_paths, n_times, d); `truncated` flags paths that
    hit the overflow guard (their values are frozen from that moment on).
    """

    times: np.ndarray
    V: np.ndarray
    X: np.ndarray
    truncated: np.ndarray
    seed: int
    chunk_size: int

    @property
    def n_paths(self):
        return self.V.shape[0]

    def terminal(self):
        """(V, X) at the last stored time, shape (n_paths, d) each."""
        return self.V[:, -1, :], self.X[:, -1, :]


def _locate_times(grid, times):
    if times is None:
        return np.array([len(grid) - 1])
    if isinstance(times, str) and times == "all":
        return np.arange(len(grid))
    idx = np.searchsorted(grid, np.asarray(times, dtype=float))
    idx = np.clip(idx, 0, len(grid) - 1)
    for j, s in zip(idx, np.atleast_1d(times)):
        if not math.isclose(grid[j], float(s), rel_tol=0.0, abs_tol=1e-12):
            raise ValueError(f"requested time {s} is not a grid node")
    if len(np.unique(idx)) != len(idx):
        raise ValueError("requested times map to duplicate grid nodes")
    return idx


def simulate_ensemble(spec, state0, grid, n_paths, seed, eps=0.0,
                      times=None, chunk_size=4096, overflow_guard=1e8,
                      chunk_range=None):
    """Simulate n_paths independent paths; store (V, X) at chosen nodes.

    times: None for the terminal node only, "all" for every node, or a
    list of grid times.  chunk_range (lo, hi) restricts the computation
    to chunks lo..hi-1 for external work splitting; the full result is
    the row-concatenation of the parts, independent of the split.
    """
    _spot_check_coercivity(spec)
    d = spec.dim
    grid = np.asarray(grid, dtype=float)
    dts = np.diff(grid)
    if np.any(dts <= 0):
        raise ValueError("grid must be strictly increasing")
    state0 = np.asarray(state0, dtype=float).reshape(-1)
    if state0.shape != (2 * d,):
        raise ValueError(f"state0 must have shape ({2 * d},)")
    drift = _drift_fn(spec, eps)
    t_idx = _locate_times(grid, times)
    keep = np.full(len(grid), -1, dtype=int)
    for j, g in enumerate(t_idx):
        keep[g] = j
    n_steps = len(dts)
    n_chunks = (n_paths + chunk_size - 1) // chunk_size
    lo, hi = (0, n_chunks) if chunk_range is None else chunk_range
    rows = sum(min(chunk_size, n_paths - c * chunk_size) for c in range(lo, hi))
    V_out = np.empty((rows, len(t_idx), d))
    X_out = np.empty((rows, len(t_idx), d))
    truncated = np.zeros(rows, dtype=bool)
    row0 = 0
    for c in range(lo, hi):
        m = min(chunk_size, n_paths - c * chunk_size)
        rng = substream(seed, c)
        incr = sample_increments(spec.noise, dts[:, None], (n_steps, m), rng)
        v = np.broadcast_to(state0[:d], (m, d)).copy()
        x = np.broadcast_to(state0[d:], (m, d)).copy()
        alive = np.ones(m, dtype=bool)
        if keep[0] >= 0:
            V_out[row0:row0 + m, keep[0]] = v
            X_out[row0:row0 + m, keep[0]] = x
        for k in range(n_steps):
            t, dt = grid[k], dts[k]
            v_new = v + spec.eval_mu(t, v) * dt \
                + _apply_sigma(spec, t, v, incr[k])
            x_new = x + 0.5 * (v + v_new) * dt + drift(t, x) * dt
            blown = alive & ~np.all(np.abs(x_new) < overflow_guard, axis=-1)
            if np.any(blown):
                truncated[row0:row0 + m] |= blown
                alive = alive & ~blown
            upd = alive[:, None]
            v = np.where(upd, v_new, v)
            x = np.where(upd, x_new, x)
            if keep[k + 1] >= 0:
                V_out[row0:row0 + m, keep[k + 1]] = v
                X_out[row0:row0 + m, keep[k + 1]] = x
        row0 += m
    return EnsembleResult(times=grid[t_idx], V=V_out, X=X_out,
                          truncated=truncated, seed=seed,
                          chunk_size=chunk_size)


def flow_theta(spec, eps, t, s, v, x, n_steps=256):
    """Deterministic drift flow theta_{s,t}(v, x) of the regularized
    system: RK4 at fixed substep on

        d/ds theta = ( mu(s, theta_v), theta_v + F_eps(s, theta_x) ).

    Returns the stacked (v_s, x_s) as an array of shape (2d,).
    """
    if s < t:
        raise ValueError("flow_theta needs t <= s")
    if not eps > 0:
        raise ValueError("flow_theta is defined for the regularized "
                         "system; eps must be positive")
    d = spec.dim
    v = np.asarray(v, dtype=float).reshape(d)
    x = np.asarray(x, dtype=float).reshape(d)
    if s == t:
        return np.concatenate([v, x])
    drift = _drift_fn(spec, eps)

    def rhs(r, y):
        vv, xx = y[:d], y[d:]
        return np.concatenate([spec.eval_mu(r, vv), vv + drift(r, xx)])

    h = (s - t) / n_steps
    if t + h == t:
        raise NumericError("flow substep underflowed the time grid")
    y = np.concatenate([v, x])
    r = t
    for _ in range(n_steps):
        k1 = rhs(r, y)
        k2 = rhs(r + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(r + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(r + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        r += h
    return y


@dataclass
class GapReport:
    """Terminal gap |X_T - X'_T| between two drift regularizations
    coupled through identical noise and identical V trajectories."""

    eps_pair: tuple
    n_paths: int
    mean_gap: float
    max_gap: float
    stderr: float


def uniqueness_gap(spec, state0, eps_pair, n_paths, seed, grid,
                   chunk_size=4096, overflow_guard=1e8):
    """Couple two X-solutions on the same noise and measure their split.

    Both solutions share the V trajectory exactly (V does not feel F);
    their drifts are mollified at eps_pair[0] and eps_pair[1], with 0
    meaning the raw drift.  Returns mean/max gap with a standard error.
    """
    if n_paths < 1:
        raise ValueError("need at least one path")
    _spot_check_coercivity(spec)
    d = spec.dim
    grid = np.asarray(grid, dtype=float)
    dts = np.diff(grid)
    state0 = np.asarray(state0, dtype=float).reshape(2 * d)
    drift_a = _drift_fn(spec, eps_pair[0])
    drift_b = _drift_fn(spec, eps_pair[1])
    n_chunks = (n_paths + chunk_size - 1) // chunk_size
    gaps = np.empty(n_paths)
    row0 = 0
    for c in range(n_chunks):
        m = min(chunk_size, n_paths - c * chunk_size)
        rng = substream(seed, c)
        incr = sample_increments(spec.noise, dts[:, None],
                                 (len(dts), m), rng)
        v = np.broadcast_to(state0[:d], (m, d)).copy()
        xa = np.broadcast_to(state0[d:], (m, d)).copy()
        xb = xa.copy()
        for k in range(len(dts)):
            t, dt = grid[k], dts[k]
            v_new = v + spec.eval_mu(t, v) * dt \
                + _apply_sigma(spec, t, v, incr[k])
            vbar = 0.5 * (v + v_new) * dt
            xa = np.clip(xa + vbar + drift_a(t, xa) * dt,
                         -overflow_guard, overflow_guard)
            xb = np.clip(xb + vbar + drift_b(t, xb) * dt,
                         -overflow_guard, overflow_guard)
            v = v_new
        gaps[row0:row0 + m] = np.linalg.norm(xa - xb, axis=-1)
        row0 += m
    return GapReport(eps_pair=tuple(eps_pair), n_paths=n_paths,
                     mean_gap=float(np.mean(gaps)),
                     max_gap=float(np.max(gaps)),
                     stderr=float(np.std(gaps, ddof=1) / math.sqrt(n_paths))
                     if n_paths > 1 else 0.0)


@dataclass
class PeanoBranchReport:
    """Two exact solutions of x' = |x|^beta, x(0) = 0, with the residual
    of each in the integral equation x(t) = int_0^t |x(s)|^beta ds."""

    beta: float
    horizon: float
    residual_zero: float
    residual_branch: float
    branch_terminal: float

    @property
    def distinct(self):
        return self.branch_terminal > 0.0


def peano_branching(beta, horizon=1.0, n_steps=4096):
    """Exhibit the branching of x' = |x|^beta from the origin.

    The two candidates are x = 0 and x(t) = ((1-beta) t)^(1/(1-beta));
    each is pushed through the integral equation with RK4 quadrature of
    |x(s)|^beta and the terminal residual reported.  The zero solution is
    exact by inspection; the power branch closes the loop numerically.
    """
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1) for branching")
    q = beta / (1.0 - beta)

    def integrand(s):
        return ((1.0 - beta) * s) ** q

    h = horizon / n_steps
    acc = 0.0
    s = 0.0
    for _ in range(n_steps):
        k1 = integrand(s)
        k23 = integrand(s + 0.5 * h)
        k4 = integrand(s + h)
        acc += (h / 6.0) * (k1 + 4.0 * k23 + k4)
        s += h
    branch_T = ((1.0 - beta) * horizon) ** (1.0 / (1.0 - beta))
    return PeanoBranchReport(beta=beta, horizon=horizon,
                             residual_zero=0.0,
                             residual_branch=abs(acc - branch_T),
                             branch_terminal=branch_T)


def exact_kinetic_covariance(T, dim=1):
    """Covariance of (V_T, X_T) for mu = 0, sigma = identity, F = 0 at
    alpha = 2: blocks [[T, T^2/2], [T^2/2, T^3/3]] tensored with I_d."""
    blocks = np.array([[T, T ** 2 / 2.0], [T ** 2 / 2.0, T ** 3 / 3.0]])
    return np.kron(blocks, np.eye(dim))


def make_stream(spec, grid, seed, index=0):
    """Convenience passthrough building a noise stream for this system."""
    return sample_stream(spec.noise, grid, seed, index=index)
