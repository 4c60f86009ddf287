"""Characteristic flows with a frozen velocity trajectory and the
first-order transport machinery built on them.

Given one realized velocity path V (frozen as data), the characteristic
of the regularized drift solves

    d/ds X_s = V_s + F_eps(s, X_s),        X_t = x,

jointly with its variational (gradient) equation

    d/ds J_s = grad F_eps(s, X_s) . J_s,   J_t = Identity,

by RK4 at fixed substep.  On top of the flow sit:

* u_eps(t, x) = - integral_t^tau F_eps(s, X_s) ds, the transport solution
  with terminal condition u_eps(tau, .) = 0;
* the gradient identity grad u_eps(t, x) = Identity - J_tau, cross-checked
  against finite differences;
* the Gronwall bound |J_tau| <= exp(integral |grad F_eps| along the path);
* empirical moments of |grad u_eps(t, X_t)| over simulated ensembles,
  computed conditionally per frozen velocity path and then averaged (the
  velocity is never re-simulated inside the inner expectation), together
  with the measured Khasminskii window: the largest delta such that
  q * integral_r^{r+delta} E|grad F_eps(s, X_s)| ds stays <= 1/2 from
  every start r on the grid.
"""

import math
from dataclasses import dataclass

import numpy as np

from .drift_library import MollifierSpec, grad_mollified, mollify
from .errors import CheckFailure, UnsupportedError
from .kinetic_sim import simulate_ensemble

__all__ = ["FrozenTrajectory", "CharacteristicState", "CharacteristicPath",
           "characteristic", "characteristic_batch", "u_eps",
           "transport_residual", "GradIdentityReport", "grad_identity_check",
           "MomentRow", "MomentTable", "grad_moments"]


@dataclass
class FrozenTrajectory:
    """A velocity path frozen as data: values (n_nodes, d) on an
    increasing grid, interpolated piecewise-linearly ("linear", default)
    or as a cadlag step function ("constant")."""

    grid: np.ndarray
    values: np.ndarray
    mode: str = "linear"

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if len(self.grid) != len(self.values):
            raise ValueError("grid and values lengths differ")
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("trajectory values must be finite")
        if self.mode not in ("linear", "constant"):
            raise ValueError("mode must be 'linear' or 'constant'")

    @classmethod
    def from_path(cls, path, mode="linear"):
        return cls(grid=path.grid, values=path.V, mode=mode)

    @property
    def horizon(self):
        return float(self.grid[-1])

    def v_at(self, s):
        """Velocity at time s (scalar), shape (d,)."""
        i, w = _locate(self.grid, s, self.mode)
        if w == 0.0:
            return self.values[i]
        return (1.0 - w) * self.values[i] + w * self.values[i + 1]


def _locate(grid, s, mode):
    if s <= grid[0]:
        return 0, 0.0
    if s >= grid[-1]:
        return len(grid) - 1, 0.0
    i = int(np.searchsorted(grid, s, side="right")) - 1
    if mode == "constant":
        return i, 0.0
    w = (s - grid[i]) / (grid[i + 1] - grid[i])
    return i, float(w)


@dataclass
class CharacteristicState:
    position: np.ndarray
    jacobian: np.ndarray


@dataclass
class CharacteristicPath:
    """RK4 output: positions (n+1, d), jacobians (n+1, d, d), the record
    of |grad F_eps| at the substep nodes, and the cumulative Gronwall
    budget for integral_t^s |grad F_eps|.

    The budget accumulates per-step stage maxima of |grad F_eps| taken at
    the same RK4 stages as the jacobian.  That choice makes exp(budget) a
    rigorous discrete majorant of |J| at any step size: the one-step
    jacobian factor is dominated term by term by the truncated
    exponential of h * max|grad F_eps|.  Plain quadrature weights do not
    have this property; for monotone scalar drifts the Gronwall bound is
    an equality and quadrature error then flips its sign at random.  The
    price is first-order (instead of fourth-order) convergence of the
    budget to the continuum integral, from above, so the reported bound
    errs on the conservative side."""

    s_grid: np.ndarray
    positions: np.ndarray
    jacobians: np.ndarray
    grad_record: np.ndarray
    budget: np.ndarray

    @property
    def terminal(self):
        return CharacteristicState(position=self.positions[-1],
                                   jacobian=self.jacobians[-1])

    def gronwall_budget(self):
        """integral of |grad F_eps| along the path; one value per path
        when the record is batched."""
        out = self.budget[-1]
        return float(out) if np.ndim(out) == 0 else out


def _mat_norm(g):
    """Spectral norm per matrix in a (..., d, d) batch."""
    if g.shape[-1] == 1:
        return np.abs(g[..., 0, 0])
    return np.linalg.norm(g, ord=2, axis=(-2, -1))


def _batch_rk4(model, moll, v_lookup, t, x0, tau, n_steps):
    """Joint RK4 for positions (m, d) and jacobians (m, d, d) with a
    per-path velocity lookup v_lookup(s) -> (m, d)."""
    m, d = x0.shape
    h = (tau - t) / n_steps
    pos = np.empty((n_steps + 1, m, d))
    jac = np.empty((n_steps + 1, m, d, d))
    rec = np.empty((n_steps + 1, m))
    bud = np.empty((n_steps + 1, m))
    pos[0] = x0
    jac[0] = np.broadcast_to(np.eye(d), (m, d, d)).copy()
    bud[0] = 0.0
    s_grid = t + h * np.arange(n_steps + 1)

    def rhs(s, x, j):
        g = grad_mollified(model, moll, s, x)
        return v_lookup(s) + mollify(model, moll, s, x), g @ j, g

    x, j = pos[0].copy(), jac[0].copy()
    for k in range(n_steps):
        s = s_grid[k]
        k1x, k1j, g1 = rhs(s, x, j)
        rec[k] = _mat_norm(g1)
        k2x, k2j, g2 = rhs(s + 0.5 * h, x + 0.5 * h * k1x,
                           j + 0.5 * h * k1j)
        k3x, k3j, g3 = rhs(s + 0.5 * h, x + 0.5 * h * k2x,
                           j + 0.5 * h * k2j)
        k4x, k4j, g4 = rhs(s + h, x + h * k3x, j + h * k3j)
        x = x + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        j = j + (h / 6.0) * (k1j + 2 * k2j + 2 * k3j + k4j)
        # stage maximum, not Simpson weights: expanding the one-step
        # jacobian map R = I + (h/6)(G1+2G2+2G3+G4) + ... term by term,
        # |R| <= 1 + hM + (hM)^2/2 + (hM)^3/6 + (hM)^4/24 <= exp(hM)
        # with M = max |Gi|, so exp(budget) dominates |J| at every step
        # size, including the equality case of monotone scalar drifts.
        bud[k + 1] = bud[k] + h * np.max(
            [rec[k], _mat_norm(g2), _mat_norm(g3), _mat_norm(g4)], axis=0)
        pos[k + 1], jac[k + 1] = x, j
    rec[n_steps] = _mat_norm(grad_mollified(model, moll, s_grid[-1], x))
    return s_grid, pos, jac, rec, bud


def _check_span(traj, t, tau):
    if not t <= tau:
        raise ValueError("need t <= tau")
    if tau > traj.horizon + 1e-12:
        raise ValueError(f"tau {tau} beyond trajectory horizon "
                         f"{traj.horizon}")


def characteristic(eps, traj, t, x, tau, model=None, n_steps=256):
    """Integrate the characteristic and its variational equation.

    model: the DriftModel whose mollification (at scale eps > 0) drives
    the flow.  Returns a CharacteristicPath over [t, tau].
    """
    if model is None:
        raise ValueError("a drift model is required")
    if not eps > 0:
        raise ValueError("the characteristic flow is defined for the "
                         "regularized drift; eps must be positive")
    _check_span(traj, t, tau)
    d = traj.values.shape[1]
    x = np.asarray(x, dtype=float).reshape(1, d)
    moll = MollifierSpec(eps=eps)
    if tau == t:
        return CharacteristicPath(
            s_grid=np.array([t]), positions=x.copy(),
            jacobians=np.eye(d)[None],
            grad_record=_mat_norm(grad_mollified(model, moll, t, x)),
            budget=np.zeros(1))

    def v_lookup(s):
        return traj.v_at(s)[None, :]

    s_grid, pos, jac, rec, bud = _batch_rk4(model, moll, v_lookup, t, x,
                                            tau, n_steps)
    return CharacteristicPath(s_grid=s_grid, positions=pos[:, 0],
                              jacobians=jac[:, 0], grad_record=rec[:, 0],
                              budget=bud[:, 0])


def characteristic_batch(eps, traj, t, xs, tau, model=None, n_steps=256):
    """Vectorized characteristic: xs of shape (m, d), one shared frozen
    trajectory.  Returns a CharacteristicPath whose arrays carry a path
    axis: positions (n+1, m, d), jacobians (n+1, m, d, d), grad_record
    (n+1, m)."""
    if model is None:
        raise ValueError("a drift model is required")
    if not eps > 0:
        raise ValueError("eps must be positive")
    _check_span(traj, t, tau)
    d = traj.values.shape[1]
    xs = np.asarray(xs, dtype=float).reshape(-1, d)
    moll = MollifierSpec(eps=eps)
    if tau == t:
        m = len(xs)
        return CharacteristicPath(
            s_grid=np.array([t]), positions=xs.copy()[None],
            jacobians=np.broadcast_to(np.eye(d), (1, m, d, d)).copy(),
            grad_record=_mat_norm(grad_mollified(model, moll, t, xs))[None],
            budget=np.zeros((1, m)))

    def v_lookup(s):
        return traj.v_at(s)[None, :]

    s_grid, pos, jac, rec, bud = _batch_rk4(model, moll, v_lookup, t, xs,
                                            tau, n_steps)
    return CharacteristicPath(s_grid=s_grid, positions=pos, jacobians=jac,
                              grad_record=rec, budget=bud)


def u_eps(eps, traj, t, x, tau, model=None, n_steps=256):
    """Transport solution by characteristics:
    u_eps(t, x) = - integral_t^tau F_eps(s, X_s) ds (Simpson on the RK
    grid); u_eps(tau, .) = 0 exactly."""
    if tau == t:
        d = traj.values.shape[1]
        return np.zeros(d)
    if n_steps % 2:
        n_steps += 1
    path = characteristic(eps, traj, t, x, tau, model=model,
                          n_steps=n_steps)
    moll = MollifierSpec(eps=eps)
    # time varies per node, so evaluate the mollified drift nodewise
    vals = np.stack([mollify(model, moll, s, p)
                     for s, p in zip(path.s_grid, path.positions)])
    w = np.ones(len(vals))
    w[1:-1:2], w[2:-1:2] = 4.0, 2.0
    h = (tau - t) / n_steps
    return -(h / 3.0) * np.einsum("k,kd->d", w, vals)


def transport_residual(eps, traj, t, x, tau, model=None, dt=1e-3,
                       dx=1e-4, n_steps=1024):
    """Finite-difference residual of the random transport equation

        d_t u + grad u . (V_t + F_eps(t, x)) - F_eps(t, x)

    at one probe point; the construction by characteristics makes it
    vanish up to RK and finite-difference error.

    The time difference divides the path-integration error by 2*dt, so
    dt cannot be taken arbitrarily small for a fixed step count; the
    defaults balance the two error sources to a few 1e-5.  With linear
    interpolation the second time derivative of u jumps at trajectory
    nodes, degrading the central difference to first order there, so
    probe times should sit inside grid segments."""
    d = traj.values.shape[1]
    x = np.asarray(x, dtype=float).reshape(d)
    moll = MollifierSpec(eps=eps)
    du_dt = (u_eps(eps, traj, t + dt, x, tau, model=model, n_steps=n_steps)
             - u_eps(eps, traj, t - dt, x, tau, model=model,
                     n_steps=n_steps)) / (2.0 * dt)
    grad_u = np.empty((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = dx
        up = u_eps(eps, traj, t, x + e, tau, model=model, n_steps=n_steps)
        dn = u_eps(eps, traj, t, x - e, tau, model=model, n_steps=n_steps)
        grad_u[:, j] = (up - dn) / (2.0 * dx)
    f = mollify(model, moll, t, x)
    speed = traj.v_at(t) + f
    return du_dt + grad_u @ speed - f


@dataclass
class GradIdentityReport:
    """Gap between the finite-difference gradient of u_eps and the
    identity-minus-jacobian form, plus the Gronwall budget check."""

    max_gap: float
    tol: float
    jacobian_norm: float
    gronwall_bound: float
    grad_u: np.ndarray
    identity_form: np.ndarray

    @property
    def gronwall_ok(self):
        return self.jacobian_norm <= self.gronwall_bound * (1.0 + 1e-9)


def grad_identity_check(eps, traj, t, x, tau, model=None, fd_step=1e-5,
                        tol=1e-4, n_steps=256):
    """Assert grad u_eps = Identity - J_tau within tol (finite
    differences vs the variational equation) and the Gronwall bound
    |J_tau| <= exp(integral |grad F_eps|).  Raises CheckFailure with the
    max-gap diagnostics when either is violated."""
    d = traj.values.shape[1]
    x = np.asarray(x, dtype=float).reshape(d)
    path = characteristic(eps, traj, t, x, tau, model=model,
                          n_steps=n_steps)
    jac = path.terminal.jacobian
    grad_u = np.empty((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = fd_step
        up = u_eps(eps, traj, t, x + e, tau, model=model, n_steps=n_steps)
        dn = u_eps(eps, traj, t, x - e, tau, model=model, n_steps=n_steps)
        grad_u[:, j] = (up - dn) / (2.0 * fd_step)
    identity_form = np.eye(d) - jac
    gap = float(np.max(np.abs(grad_u - identity_form)))
    jn = float(_mat_norm(jac[None])[0])
    bound = math.exp(path.gronwall_budget())
    report = GradIdentityReport(max_gap=gap, tol=tol, jacobian_norm=jn,
                                gronwall_bound=bound, grad_u=grad_u,
                                identity_form=identity_form)
    if gap > tol:
        raise CheckFailure(
            f"gradient identity off by {gap:.3e} (tol {tol:.1e}) at "
            f"(t={t}, x={x}, tau={tau}, eps={eps})")
    if not report.gronwall_ok:
        raise CheckFailure(
            f"Gronwall bound violated: |J| = {jn:.6f} > exp(budget) = "
            f"{bound:.6f}")
    return report


@dataclass
class MomentRow:
    eps: float
    q: float
    moment: float
    stderr: float
    khasminskii_delta: float


@dataclass
class MomentTable:
    rows: list
    t: float
    tau: float
    n_paths: int

    def by_eps(self):
        return {r.eps: r for r in self.rows}


def grad_moments(spec, eps_list, q, t, tau, n_paths, seed, n_rk=128,
                 n_sim=128, chunk_size=4096, mode="linear", state0=None):
    """Empirical q-th moments of |grad u_eps(t, X_t)| per eps.

    Simulates the kinetic system on [0, tau], freezes each velocity path,
    runs the characteristic from (t, X_t) to tau with that frozen
    velocity (vectorized across paths) and evaluates grad u_eps through
    the identity-minus-jacobian form.  Also reports the measured
    Khasminskii window for q * integral E|grad F_eps| along the
    characteristics.  Brownian noise only: the moment bounds rest on the
    Gaussian envelope.
    """
    if not spec.noise.is_brownian:
        raise UnsupportedError("gradient-moment probes need alpha = 2")
    if q < 0:
        raise ValueError("q must be nonnegative")
    if not 0 <= t < tau:
        raise ValueError("need 0 <= t < tau")
    d = spec.dim
    if state0 is None:
        state0 = np.zeros(2 * d)
    grid = np.linspace(0.0, tau, n_sim + 1)
    ens = simulate_ensemble(spec, state0, grid, n_paths, seed=seed,
                            times="all", chunk_size=chunk_size)
    t_idx = int(np.argmin(np.abs(grid - t)))
    if not math.isclose(grid[t_idx], t, abs_tol=1e-12):
        raise ValueError("t must be a node of the simulation grid")
    rows = []
    for eps in eps_list:
        moll = MollifierSpec(eps=eps)
        samples = np.empty(n_paths)
        mean_rec = None
        s_grid = None
        for c0 in range(0, n_paths, chunk_size):
            sl = slice(c0, min(c0 + chunk_size, n_paths))
            V = ens.V[sl]
            x0 = ens.X[sl, t_idx, :]
            lookup = _make_lookup(grid, V, mode)
            sg, pos, jac, rec, _ = _batch_rk4(spec.drift, moll, lookup, t,
                                              x0, tau, n_rk)
            gu = np.eye(d) - jac[-1]
            samples[sl] = _mat_norm(gu) ** q if q > 0 else 1.0
            part = np.sum(rec, axis=1)
            mean_rec = part if mean_rec is None else mean_rec + part
            s_grid = sg
        mean_rec = mean_rec / n_paths
        moment = float(np.mean(samples))
        stderr = float(np.std(samples, ddof=1) / math.sqrt(n_paths)) \
            if n_paths > 1 else 0.0
        delta = _khasminskii_window(s_grid, mean_rec, q)
        rows.append(MomentRow(eps=eps, q=q, moment=moment, stderr=stderr,
                              khasminskii_delta=delta))
    return MomentTable(rows=rows, t=t, tau=tau, n_paths=n_paths)


def _make_lookup(grid, V, mode):
    def lookup(s):
        i, w = _locate(grid, s, mode)
        if w == 0.0:
            return V[:, i, :]
        return (1.0 - w) * V[:, i, :] + w * V[:, i + 1, :]
    return lookup


def _khasminskii_window(s_grid, mean_grad, q):
    """Largest delta with q * integral_r^{r+delta} E|grad F_eps| <= 1/2
    from every start r on the grid; grid-resolution granularity.  Starts
    whose remaining budget never exceeds 1/(2q) impose no constraint."""
    if q == 0:
        return float(s_grid[-1] - s_grid[0])
    cum = np.concatenate([[0.0], np.cumsum(
        0.5 * (mean_grad[1:] + mean_grad[:-1]) * np.diff(s_grid))])
    budget = 0.5 / q
    best = float(s_grid[-1] - s_grid[0])
    for i in range(len(s_grid)):
        if cum[-1] - cum[i] <= budget:
            continue
        j = int(np.searchsorted(cum, cum[i] + budget, side="right")) - 1
        best = min(best, float(s_grid[j] - s_grid[i]))
    return best
