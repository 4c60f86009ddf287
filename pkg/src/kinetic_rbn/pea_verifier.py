"""Gaussian-weighted drift-gradient integrability probes.

The probed quantity is

    I(eps, t, s, theta) = integral |grad_y F_eps(s, y)| Gamma(lam (s-t)^3, y - theta) dy

where Gamma(c, .) is the centered isotropic Gaussian density with
covariance c * Identity.  The integrability hypothesis behind the
well-posedness theory asks for a time-integrable envelope g(s - t)
dominating I for every theta; the probes here certify it numerically for
the power-type drifts (bounded, with a fitted integrable power law) and
refute it for the accumulating-singularity model (monotone unbounded
growth as eps decreases).

Conventions:

* pea_integral takes theta in absolute coordinates.
* PeaProbe.theta_grid entries are, by default, expressed in kernel units:
  a grid value c stands for the center c * sqrt(lam (s-t)^3).  Scaling
  the centers with the kernel makes the fitted decay exponent of the
  power drifts exactly theta-independent, which is what the worst-case
  reading of the hypothesis needs.  Set kernel_units=False for absolute
  centers.
* eps = 0 evaluates the closed-form almost-everywhere gradient, the
  eps -> 0 envelope dominating every mollified gradient for the power
  families; decay fits use it by default.
"""

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational

import numpy as np
from scipy.integrate import quad

from ._util import pairwise_sum, substream
from .drift_library import (Accumulating, DriftModel, MollifierSpec,
                            MultiSingularity, PeanoPower, grad_F)
from .errors import NumericError

__all__ = ["PeaProbe", "PeaIntegralResult", "pea_integral", "gamma_mass",
           "DecayFit", "fit_decay_exponent", "UniformityReport",
           "epsilon_uniformity", "RhoInterval", "rho_interval",
           "CounterexampleReport", "counterexample_divergence"]


def _default_pairs():
    return tuple((0.0, float(s)) for s in np.geomspace(0.02, 2.0, 7))


@dataclass(frozen=True)
class PeaProbe:
    """Bundle of probe parameters for one drift model.

    time_pairs are (t, s) with t < s; theta_grid entries are scalars for
    d = 1 models or d-vectors otherwise, interpreted in kernel units by
    default (see module docstring).  quad_limit caps the adaptive
    subdivision; mc_budget is the importance-sampling size for d >= 3.
    """

    model: DriftModel
    lam: float = 1.0
    eps_list: tuple = (0.1, 0.05, 0.025)
    time_pairs: tuple = field(default_factory=_default_pairs)
    theta_grid: tuple = (0.0, 0.5, 1.0)
    kernel_units: bool = True
    quad_limit: int = 400
    mc_budget: int = 200_000
    seed: int = 0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if any(not e > 0 for e in self.eps_list):
            raise ValueError("every eps must be positive")
        for (t, s) in self.time_pairs:
            if not t < s:
                raise ValueError(f"time pair ({t}, {s}) is not ordered")

    def theta_abs(self, theta, t, s):
        """Translate a theta_grid entry to absolute coordinates."""
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        if self.kernel_units:
            th = th * math.sqrt(self.lam * (s - t) ** 3)
        return th


@dataclass
class PeaIntegralResult:
    value: float
    stderr: float
    method: str


def _moll_order(dim):
    # The tensor smoothing rule has order^dim nodes per evaluation point;
    # past dim 2 the default order is unaffordable and the Monte Carlo
    # standard error dominates the quadrature error anyway.
    return 48 if dim <= 2 else (16 if dim == 3 else 8)


def _grad_magnitude(model, eps, s, ys):
    """|grad F_eps(s, .)| on a batch of points ys of shape (m, d)."""
    moll = None if eps == 0 else MollifierSpec(
        eps=eps, quadrature_order=_moll_order(model.dim))
    g = grad_F(model, moll, s, ys)
    if model.dim == 1:
        return np.abs(g[..., 0, 0])
    return np.linalg.norm(g, ord=2, axis=(-2, -1))


def _breakpoints(model, eps, lo, hi):
    """Singular abscissas of the model inside (lo, hi), for d = 1."""
    if isinstance(model, PeanoPower):
        pts = [float(np.reshape(np.asarray(model.center, dtype=float),
                                (-1,))[0])]
    elif isinstance(model, MultiSingularity):
        pts = [float(np.reshape(np.asarray(p.center, dtype=float), (-1,))[0])
               for p in model._parts]
    elif isinstance(model, Accumulating):
        a = model.anchors
        gaps = np.diff(a)
        near = np.concatenate([[gaps[0]], np.maximum(gaps[:-1], gaps[1:]),
                               [gaps[-1]]])
        scale = eps / 4.0 if eps > 0 else 0.0
        keep = (a > lo) & (a < hi) & (near >= scale)
        pts = list(a[keep][:150])
    else:
        pts = []
    return sorted(p for p in set(pts) if lo < p < hi)


def _simpson_refined(fn_total, lo, hi, h0, rel_tol=1e-3, levels=5):
    """Globally refined Simpson rule with an error estimate from the last
    halving; fn_total is vectorized over a 1-d array of abscissas.  The
    mollified sawtooth gradients are only piecewise smooth at scale eps,
    so successive levels oscillate instead of contracting at h^4; the
    rel_tol matches what the growth-ratio checks downstream can use."""
    prev = None
    val = None
    gap = math.inf
    h = h0
    for _ in range(levels):
        n = int(math.ceil((hi - lo) / h))
        if n % 2:
            n += 1
        xs = np.linspace(lo, hi, n + 1)
        w = np.ones(n + 1)
        w[1:-1:2], w[2:-1:2] = 4.0, 2.0
        val = float(np.sum(w * fn_total(xs)) * (hi - lo) / (3.0 * n))
        if prev is not None:
            gap = abs(val - prev)
            if gap <= rel_tol * max(abs(val), 1e-12):
                return val, gap, True
        prev = val
        h /= 2.0
    return val, gap, False


def _integrate_line(fn, model_pts, c, theta, limit, eps):
    sig = math.sqrt(c)
    lo, hi = theta - 12.0 * sig, theta + 12.0 * sig
    norm = 1.0 / math.sqrt(2.0 * math.pi * c)

    def f_scalar(y):
        return float(fn(np.array([[y]]))[0]) \
            * norm * math.exp(-(y - theta) ** 2 / (2.0 * c))

    pts = [p for p in model_pts if lo < p < hi]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        out = quad(f_scalar, lo, hi, points=pts or None, limit=limit,
                   full_output=1)
    val, abserr = out[0], out[1]
    if len(out) > 3 and abserr > max(1e-9, 5e-3 * abs(val)):
        if eps == 0:
            raise NumericError(
                "adaptive quadrature did not converge on the raw gradient "
                f"(value {val:.4g}, error estimate {abserr:.2g})")

        def fn_total(ys):
            dens = norm * np.exp(-(ys - theta) ** 2 / (2.0 * c))
            return fn(ys[:, None]) * dens

        val, abserr, ok = _simpson_refined(fn_total, lo, hi,
                                           min(eps / 8.0, sig / 64.0))
        if not ok:
            raise NumericError(
                "quadrature non-convergence: adaptive pass and grid "
                f"refinement disagree (value {val:.4g}, gap {abserr:.2g})")
        return val, abserr, "simpson-grid"
    return val, abserr, "quad"


def _integrate_plane(fn, c, theta, order=96):
    sig = math.sqrt(c)

    def tensor(n):
        z, w = np.polynomial.legendre.leggauss(n)
        x = theta[0] + 10.0 * sig * z
        y = theta[1] + 10.0 * sig * z
        wx = 10.0 * sig * w
        xx, yy = np.meshgrid(x, y, indexing="ij")
        pts = np.stack([xx.ravel(), yy.ravel()], axis=-1)
        dens = np.exp(-((pts[:, 0] - theta[0]) ** 2
                        + (pts[:, 1] - theta[1]) ** 2) / (2.0 * c)) \
            / (2.0 * math.pi * c)
        vals = (fn(pts) * dens).reshape(n, n)
        return float(np.einsum("i,j,ij->", wx, wx, vals))

    hi_ord = tensor(order)
    lo_ord = tensor(max(2 * order // 3, 8))
    return hi_ord, abs(hi_ord - lo_ord), "tensor-gl"


def _integrate_mc(fn, c, theta, budget, rng):
    z = rng.standard_normal((budget, len(theta)))
    vals = np.empty(budget)
    for i0 in range(0, budget, 512):
        ys = theta[None, :] + math.sqrt(c) * z[i0:i0 + 512]
        vals[i0:i0 + 512] = fn(ys)
    mean = pairwise_sum(vals) / budget
    sd = math.sqrt(max(pairwise_sum((vals - mean) ** 2), 0.0)
                   / (budget - 1))
    return float(mean), sd / math.sqrt(budget), "is-mc"


def _dispatch(fn, model_pts, d, c, theta, limit, budget, seed, eps):
    if d == 1:
        return _integrate_line(fn, model_pts, c, float(theta[0]), limit, eps)
    if d == 2:
        return _integrate_plane(fn, c, theta)
    return _integrate_mc(fn, c, theta, budget, substream(seed, 0xB0B))


def pea_integral(probe, eps, t, s, theta):
    """The Gaussian-weighted gradient integral at one (eps, t, s, theta).

    theta is an absolute d-vector (scalars accepted when d = 1).  eps = 0
    uses the closed-form a.e. gradient.  Returns PeaIntegralResult with a
    quadrature error estimate (d <= 2) or Monte Carlo standard error
    (d >= 3, importance sampling with the Gaussian itself as proposal, so
    the integrand reduces to the gradient magnitude at Gaussian draws).
    """
    if not t < s:
        raise ValueError(f"need t < s, got ({t}, {s})")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    model = probe.model
    d = model.dim
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.shape != (d,):
        raise ValueError(f"theta must be a {d}-vector")
    c = probe.lam * (s - t) ** 3

    def fn(ys):
        return _grad_magnitude(model, eps, s, ys)

    sig = math.sqrt(c)
    pts = _breakpoints(model, eps, float(theta[0]) - 12 * sig,
                       float(theta[0]) + 12 * sig) if d == 1 else []
    val, err, method = _dispatch(fn, pts, d, c, theta, probe.quad_limit,
                                 probe.mc_budget, probe.seed, eps)
    return PeaIntegralResult(value=val, stderr=err, method=method)


def gamma_mass(probe, t, s, theta):
    """Same machinery with the gradient replaced by 1: the Gaussian mass,
    which must come back as 1 (normalization check of the weight)."""
    d = probe.model.dim
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    c = probe.lam * (s - t) ** 3

    def fn(ys):
        return np.ones(ys.shape[0])

    val, err, method = _dispatch(fn, [], d, c, theta, probe.quad_limit,
                                 probe.mc_budget, probe.seed, 1.0)
    return PeaIntegralResult(value=val, stderr=err, method=method)


@dataclass
class DecayFit:
    """Least-squares slope of log integral against log (s - t)."""

    slope: float
    stderr: float
    band: tuple
    per_theta_slopes: list
    taus: np.ndarray
    values: np.ndarray

    def contains(self, target):
        return self.band[0] <= target <= self.band[1]


def fit_decay_exponent(probe, eps=0.0):
    """Fit the decay exponent of the worst-case (over theta) integral.

    Computes I(tau) = max over the theta grid of pea_integral for each
    time pair, regresses log I on log tau and returns the slope with a
    2-sigma confidence band.  For the single power drift the expected
    slope is 3(beta - 1)/2.  Requires >= 4 pairs spanning two decades.
    """
    taus = np.array([s - t for (t, s) in probe.time_pairs])
    if len(taus) < 4:
        raise ValueError("need at least 4 time pairs")
    if taus.max() / taus.min() < 99.999:
        raise ValueError("time pairs must span at least two decades")
    table = np.empty((len(probe.theta_grid), len(taus)))
    for i, th in enumerate(probe.theta_grid):
        for j, (t, s) in enumerate(probe.time_pairs):
            table[i, j] = pea_integral(probe, eps, t, s,
                                       probe.theta_abs(th, t, s)).value
    values = table.max(axis=0)
    if np.any(values <= 0):
        raise NumericError("degenerate regression: nonpositive integrals")
    lx, ly = np.log(taus), np.log(values)
    coef, cov = np.polyfit(lx, ly, 1, cov=True)
    slope = float(coef[0])
    se = float(np.sqrt(cov[0, 0]))
    per_theta = []
    for i in range(table.shape[0]):
        if np.all(table[i] > 0):
            per_theta.append(float(np.polyfit(lx, np.log(table[i]), 1)[0]))
        else:
            per_theta.append(math.nan)
    return DecayFit(slope=slope, stderr=se,
                    band=(slope - 2.0 * se, slope + 2.0 * se),
                    per_theta_slopes=per_theta, taus=taus, values=values)


@dataclass
class UniformityReport:
    """Spread of the integral across the eps list at one fixed probe."""

    eps_list: tuple
    values: list
    spread: float
    time_pair: tuple
    theta: np.ndarray


def epsilon_uniformity(probe, pair=None, theta=0.0):
    """Relative spread (max - min)/min of pea_integral across
    probe.eps_list at a fixed (t, s, theta); theta follows the probe's
    kernel-unit convention."""
    if pair is None:
        pair = max(probe.time_pairs, key=lambda p: p[1] - p[0])
    t, s = pair
    th = probe.theta_abs(theta, t, s)
    vals = [pea_integral(probe, e, t, s, th).value for e in probe.eps_list]
    spread = (max(vals) - min(vals)) / min(vals)
    return UniformityReport(eps_list=tuple(probe.eps_list), values=vals,
                            spread=float(spread), time_pair=(t, s), theta=th)


@dataclass
class RhoInterval:
    lo: object
    hi: object
    nonempty: bool


def rho_interval(d, beta):
    """The admissible integrability-exponent window

        ( (3d/2 - 1)/(d + beta - 1),  1/(1 - beta) )

    with the upper end +infinity at beta = 1.  Arithmetic is type
    preserving: Fraction (or int) beta gives exact rational endpoints.
    Nonempty exactly when beta > 1/3 (for d = 1; in general when the
    endpoints are ordered).
    """
    if d < 1 or int(d) != d:
        raise ValueError("d must be a positive integer")
    if not 0 < beta <= 1:
        raise ValueError("beta must lie in (0, 1]")
    den = d + beta - 1
    if den <= 0:
        raise ValueError("d + beta - 1 must be positive")
    if isinstance(beta, Rational):
        lo = Fraction(3 * d - 2, 2) / Fraction(den)
        hi = math.inf if beta == 1 else 1 / Fraction(1 - beta)
    else:
        lo = (3 * d - 2) / (2.0 * den)
        hi = math.inf if beta == 1 else 1.0 / (1.0 - beta)
    return RhoInterval(lo=lo, hi=hi, nonempty=lo < hi)


@dataclass
class CounterexampleReport:
    """Divergence evidence for the accumulating-singularity drift."""

    beta: float
    partial_sums: np.ndarray
    eps_values: np.ndarray
    integrals: np.ndarray
    ratios: np.ndarray
    theta: float
    lam: float
    time_pair: tuple

    @property
    def monotone(self):
        return bool(np.all(np.diff(self.integrals) > 0))


def counterexample_divergence(beta=0.5, N=10_000, eps0=0.05, n_halvings=6,
                              lam=0.0064, time_pair=(0.0, 1.0), theta=None):
    """Partial sums of gap^beta plus the integral along a dyadic eps run.

    The anchors follow the gap law a_{n+1} - a_n = n^(-1/beta), so the
    k-th partial sum of gap^beta is the harmonic number H_k, divergent.
    The integral is probed at theta near the accumulation point with the
    Gaussian width w = sqrt(lam (s-t)^3) comparable to the distance from
    it (default theta = limit - 1.5 w): each halving of eps then resolves
    a fresh shell of singularities carrying more Gaussian weight than the
    last, which is where the unbounded growth shows at its steepest.  Far
    from the accumulation point the same divergence is only logarithmic
    in 1/eps.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    model = Accumulating.with_power_gaps(beta=beta, n_terms=N)
    gaps = np.diff(model.anchors)
    partial = np.cumsum(gaps ** beta)
    t, s = time_pair
    w = math.sqrt(lam * (s - t) ** 3)
    if theta is None:
        theta = model.limit_point - 1.5 * w
    probe = PeaProbe(model=model, lam=lam, time_pairs=(time_pair,),
                     kernel_units=False)
    eps_values = eps0 * 2.0 ** (-np.arange(n_halvings + 1))
    integrals = np.array([pea_integral(probe, e, t, s, theta).value
                          for e in eps_values])
    ratios = integrals[1:] / integrals[:-1]
    return CounterexampleReport(beta=beta, partial_sums=partial,
                                eps_values=eps_values, integrals=integrals,
                                ratios=ratios, theta=float(theta), lam=lam,
                                time_pair=(t, s))
