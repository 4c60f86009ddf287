"""Drift families for the kinetic system, their mollifications and gradients.

The drifts of interest are bounded but singular in space: power-type
"Peano" drifts a(t)|x - center|^beta, finite sums of such singularities,
and the one-dimensional accumulating-singularity construction whose
singular points pile up at a finite limit.  A smooth compactly supported
bump provides the mollification F -> F_eps = F * bump_eps, computed by
fixed-order tensor Gauss-Legendre quadrature over the bump support, and
the same machinery yields the space gradient of F_eps by convolving with
the analytically differentiated bump.

All evaluators are vectorized: points are arrays of shape (..., d), and
results keep the leading batch shape.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ._util import as_points

__all__ = [
    "DriftModel", "PeanoPower", "MultiSingularity", "Accumulating",
    "LipschitzTest", "ZeroDrift", "CustomDrift", "MollifierSpec",
    "eval_F", "mollify", "grad_mollified", "cutoff_chi",
]


def _time_fn(a):
    """Normalize a time coefficient: constant or callable of t."""
    if callable(a):
        return a
    const = float(a)
    return lambda t: const


class DriftModel:
    """Base class for drift functions F(t, x) with values in R^d.

    Subclasses implement `evaluate(t, x)` for x of shape (..., dim) and,
    when an almost-everywhere space gradient is available in closed form,
    `gradient(t, x)` returning shape (..., dim, dim) with entry [i, j]
    holding dF_i/dx_j.
    """

    dim = 1

    def evaluate(self, t, x):
        raise NotImplementedError

    def gradient(self, t, x):
        raise NotImplementedError(
            f"{type(self).__name__} has no closed-form gradient; "
            "use grad_mollified with eps > 0")

    @property
    def has_gradient(self):
        try:
            self.gradient(0.0, np.zeros((1, self.dim)) + 0.25)
        except NotImplementedError:
            return False
        return True


@dataclass
class PeanoPower(DriftModel):
    """F(t, x) = a(t) * |x - center|^beta * direction.

    The classical Peano-type drift.  For dim = 1 the direction is the
    scalar 1 and this is just a(t)|x - center|^beta; for dim > 1 the value
    is carried along a fixed unit vector (first basis vector by default),
    one of the two natural vector-valued readings of the scalar formula.
    """

    beta: float
    a: object = 1.0
    center: object = 0.0
    dim: int = 1
    direction: object = None

    def __post_init__(self):
        if not (0.0 < self.beta <= 1.0):
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        self._a = _time_fn(self.a)
        self.center = np.broadcast_to(
            np.asarray(self.center, dtype=float), (self.dim,)).copy()
        if self.direction is None:
            u = np.zeros(self.dim)
            u[0] = 1.0
        else:
            u = np.asarray(self.direction, dtype=float)
            n = np.linalg.norm(u)
            if n == 0:
                raise ValueError("direction must be nonzero")
            u = u / n
        self.direction = u

    def evaluate(self, t, x):
        pts, single = as_points(x, self.dim)
        r = np.linalg.norm(pts - self.center, axis=-1)
        out = self._a(t) * r[..., None] ** self.beta * self.direction
        return out[0] if single else out

    def gradient(self, t, x):
        pts, single = as_points(x, self.dim)
        dx = pts - self.center
        r = np.linalg.norm(dx, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            radial = np.where(r > 0, self.beta * r ** (self.beta - 2.0), 0.0)
        jac = self._a(t) * np.einsum("i,...j->...ij", self.direction,
                                     radial[..., None] * dx)
        return jac[0] if single else jac


@dataclass
class MultiSingularity(DriftModel):
    """Finite sum of power singularities: F = sum_n a_n(t)|x - b_n|^{beta_n} u.

    terms: sequence of (a_n, b_n, beta_n) with a_n a constant or a bounded
    time function, b_n a d-vector center and beta_n in (0, 1].  With each
    a_n bounded the coefficient sum is uniformly bounded in t, which is
    the standing assumption on this class.
    """

    terms: list
    dim: int = 1
    direction: object = None

    def __post_init__(self):
        if not self.terms:
            raise ValueError("MultiSingularity needs at least one term")
        self._parts = [
            PeanoPower(beta=float(b), a=a, center=c, dim=self.dim,
                       direction=self.direction)
            for (a, c, b) in self.terms
        ]

    def evaluate(self, t, x):
        pts, single = as_points(x, self.dim)
        out = np.zeros(pts.shape)
        for p in self._parts:
            out += p.evaluate(t, pts)
        return out[0] if single else out

    def gradient(self, t, x):
        pts, single = as_points(x, self.dim)
        out = np.zeros(pts.shape + (self.dim,))
        for p in self._parts:
            out += p.gradient(t, pts)
        return out[0] if single else out


@dataclass
class Accumulating(DriftModel):
    """The accumulating-singularity drift on the line (dim 1 only).

    Between consecutive anchors a_n < a_{n+1} the drift rises from zero
    like (x - a_n)^beta up to the midpoint and falls back as
    (a_{n+1} - x)^beta, so every anchor is a power-type singular point of
    the gradient, and the anchors may accumulate at a finite limit.
    Outside [anchors[0], anchors[-1]) the drift vanishes.
    """

    beta: float
    anchors: np.ndarray

    dim = 1

    def __post_init__(self):
        if not (0.0 < self.beta <= 1.0):
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        anchors = np.asarray(self.anchors, dtype=float)
        if anchors.ndim != 1 or len(anchors) < 2:
            raise ValueError("anchors must be a 1-d array with >= 2 entries")
        if np.any(np.diff(anchors) <= 0):
            raise ValueError("anchors must be strictly increasing")
        if not np.all(np.isfinite(anchors)):
            raise ValueError("anchors must be bounded")
        self.anchors = anchors

    @classmethod
    def with_power_gaps(cls, beta=0.5, n_terms=10_000, first=1.0):
        """Anchors with gaps a_{n+1} - a_n = n^(-1/beta), n = 1..n_terms.

        For beta in (0, 1) the gaps are summable, so the anchors increase
        to a finite limit, while the sum of gap^beta terms is the harmonic
        series and diverges.  This is the standard parameterization of the
        construction.
        """
        gaps = np.arange(1, n_terms + 1, dtype=float) ** (-1.0 / beta)
        anchors = first + np.concatenate([[0.0], np.cumsum(gaps)])
        return cls(beta=beta, anchors=anchors)

    @property
    def limit_point(self):
        return float(self.anchors[-1])

    def _locate(self, xs):
        idx = np.searchsorted(self.anchors, xs, side="right") - 1
        inside = (idx >= 0) & (idx < len(self.anchors) - 1)
        idx = np.clip(idx, 0, len(self.anchors) - 2)
        lo = self.anchors[idx]
        hi = self.anchors[idx + 1]
        return inside, lo, hi

    def evaluate(self, t, x):
        pts, single = as_points(x, 1)
        xs = pts[..., 0]
        inside, lo, hi = self._locate(xs)
        mid = 0.5 * (lo + hi)
        left = np.maximum(xs - lo, 0.0) ** self.beta
        right = np.maximum(hi - xs, 0.0) ** self.beta
        vals = np.where(inside, np.where(xs < mid, left, right), 0.0)
        out = vals[..., None]
        return out[0] if single else out

    def gradient(self, t, x):
        """Almost-everywhere derivative (undefined on the anchor/midpoint set)."""
        pts, single = as_points(x, 1)
        xs = pts[..., 0]
        inside, lo, hi = self._locate(xs)
        mid = 0.5 * (lo + hi)
        b = self.beta
        with np.errstate(divide="ignore", invalid="ignore"):
            left = b * np.maximum(xs - lo, 0.0) ** (b - 1.0)
            right = -b * np.maximum(hi - xs, 0.0) ** (b - 1.0)
        vals = np.where(inside, np.where(xs < mid, left, right), 0.0)
        vals = np.where(np.isfinite(vals), vals, 0.0)
        out = vals[..., None, None]
        return out[0] if single else out


@dataclass
class LipschitzTest(DriftModel):
    """Affine control drift F(t, x) = A x + offset; gradient is A."""

    matrix: np.ndarray
    offset: object = 0.0

    def __post_init__(self):
        self.matrix = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        d = self.matrix.shape[0]
        if self.matrix.shape != (d, d):
            raise ValueError("matrix must be square")
        self.dim = d
        self.offset = np.broadcast_to(
            np.asarray(self.offset, dtype=float), (d,)).copy()

    def evaluate(self, t, x):
        pts, single = as_points(x, self.dim)
        out = pts @ self.matrix.T + self.offset
        return out[0] if single else out

    def gradient(self, t, x):
        pts, single = as_points(x, self.dim)
        jac = np.broadcast_to(self.matrix, pts.shape + (self.dim,)).copy()
        return jac[0] if single else jac


@dataclass
class ZeroDrift(DriftModel):
    dim: int = 1

    def evaluate(self, t, x):
        pts, single = as_points(x, self.dim)
        out = np.zeros(pts.shape)
        return out[0] if single else out

    def gradient(self, t, x):
        pts, single = as_points(x, self.dim)
        jac = np.zeros(pts.shape + (self.dim,))
        return jac[0] if single else jac


@dataclass
class CustomDrift(DriftModel):
    """User-supplied drift: evaluator(t, x) -> (..., dim), optional gradient."""

    evaluator: object
    dim: int = 1
    grad: object = None
    name: str = "custom"

    def evaluate(self, t, x):
        pts, single = as_points(x, self.dim)
        out = np.asarray(self.evaluator(t, pts), dtype=float)
        return out[0] if single else out

    def gradient(self, t, x):
        if self.grad is None:
            raise NotImplementedError(f"{self.name} has no gradient callback")
        pts, single = as_points(x, self.dim)
        out = np.asarray(self.grad(t, pts), dtype=float)
        return out[0] if single else out


def eval_F(model, t, x):
    """Pointwise drift evaluation F(t, x); see the model classes for shapes."""
    if isinstance(model, Accumulating):
        arr = np.asarray(x, dtype=float)
        if arr.ndim > 0 and arr.shape[-1] != 1 and arr.ndim >= 2:
            raise ValueError("the accumulating drift is defined on the line "
                             "(dim 1) only")
    return model.evaluate(t, x)


# ---------------------------------------------------------------------------
# Mollification
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def _sphere_area(d):
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


@lru_cache(maxsize=32)
def _bump_mass_unit(d, order=200):
    """Integral of exp(-1/(1-|u|^2)) over the unit ball of R^d.

    Reduced to the radial integral sigma_{d-1} * int_0^1 s^{d-1} e^{-1/(1-s^2)} ds
    and evaluated with Gauss-Legendre; the integrand is smooth and flat at
    s = 1, so the rule converges superalgebraically.
    """
    nodes, weights = np.polynomial.legendre.leggauss(order)
    s = 0.5 * (nodes + 1.0)
    w = 0.5 * weights
    f = s ** (d - 1) * np.exp(-1.0 / (1.0 - s ** 2))
    return _sphere_area(d) * float(np.sum(w * f))


def _bump_values(u_sq):
    """exp(-1/(1-|u|^2)) for squared radii, zero from |u| >= 1 on."""
    safe = u_sq < 1.0 - 1e-12
    out = np.zeros_like(u_sq)
    out[safe] = np.exp(-1.0 / (1.0 - u_sq[safe]))
    return out


@lru_cache(maxsize=32)
def _cube_rule(d, order):
    """Tensor Gauss-Legendre nodes/weights on [-1, 1]^d."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    grids = np.meshgrid(*([nodes] * d), indexing="ij")
    z = np.stack([g.ravel() for g in grids], axis=-1)
    w = np.ones(z.shape[0])
    wg = np.meshgrid(*([weights] * d), indexing="ij")
    for g in wg:
        w = w * g.ravel()
    return z, w


@dataclass(frozen=True)
class MollifierSpec:
    """Scale and quadrature parameters of the smoothing kernel.

    The kernel is the standard compactly supported bump proportional to
    exp(-1/(1 - |y/r|^2)) on |y| < r (r = bump_radius), normalized to unit
    mass, then rescaled to scale eps: bump_eps(y) = eps^-d * bump(y/eps),
    supported on |y| < r*eps.

    The discrete node weights are moment-corrected: the value weights are
    normalized to unit mass and the gradient weights rescaled per axis so
    the first-moment identity holds exactly, making the discrete operators
    reproduce constants and affine maps to rounding error.  Remaining
    quadrature error (the bump has an essential singularity at its support
    boundary, so plain Gauss-Legendre converges subgeometrically) is what
    the order-doubling checks in the tests measure.
    """

    eps: float
    bump_radius: float = 1.0
    quadrature_order: int = 48

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not self.bump_radius > 0:
            raise ValueError("bump_radius must be positive")
        if self.quadrature_order < 2:
            raise ValueError("quadrature_order must be at least 2")

    def mass_defect(self, dim):
        """|integral of the normalized bump - 1| by an independent radial rule."""
        nodes, weights = np.polynomial.legendre.leggauss(64)
        s = 0.5 * (nodes + 1.0)
        w = 0.5 * weights
        f = s ** (dim - 1) * np.exp(-1.0 / (1.0 - s ** 2))
        mass = _sphere_area(dim) * float(np.sum(w * f)) / _bump_mass_unit(dim)
        return abs(mass - 1.0)

    def weighted_nodes(self, dim):
        """Quadrature nodes z (Q, dim) on the eps-support with weights that
        already include the bump density, so that sum_q w_q * F(x - z_q)
        approximates (F * bump_eps)(x)."""
        re = self.bump_radius * self.eps
        z_unit, w_unit = _cube_rule(dim, self.quadrature_order)
        z = z_unit * re
        u_sq = np.sum(z_unit ** 2, axis=-1)
        bump = _bump_values(u_sq) / (_bump_mass_unit(dim)
                                     * self.bump_radius ** dim * self.eps ** dim)
        w = w_unit * re ** dim * bump
        return z, w / np.sum(w)

    def weighted_grad_nodes(self, dim):
        """Like weighted_nodes but with the gradient of the bump as weight,
        one weight vector per node: shape (Q, dim)."""
        re = self.bump_radius * self.eps
        z_unit, w_unit = _cube_rule(dim, self.quadrature_order)
        z = z_unit * re
        u_sq = np.sum(z_unit ** 2, axis=-1)
        bump = _bump_values(u_sq)
        with np.errstate(divide="ignore", invalid="ignore"):
            denom = (1.0 - u_sq) ** 2
            radial = np.where(u_sq < 1.0 - 1e-12, bump / denom, 0.0)
        # grad of bump(y) at y = z/eps, y in radius-r ball: -2 (y/r^2) * bump/(1-|y/r|^2)^2
        grad_unit = -2.0 * z_unit / self.bump_radius * radial[:, None]
        norm = (_bump_mass_unit(dim) * self.bump_radius ** dim
                * self.eps ** (dim + 1))
        w = w_unit[:, None] * re ** dim * grad_unit / norm
        # first-moment correction: enforce sum_q w[q, j] z[q, j] = -1 per axis
        # (cross moments vanish by the symmetry of the tensor rule)
        moments = np.einsum("qj,qj->j", w, z)
        w = w / (-moments)
        return z, w


def mollify(model, moll, t, x):
    """Mollified drift F_eps(t, x) = integral of bump_eps(x - y) F(t, y) dy.

    Fixed-order tensor quadrature over the bump support; smooth in x.
    Vectorized over batched x of shape (..., dim).
    """
    pts, single = as_points(x, model.dim)
    z, w = moll.weighted_nodes(model.dim)
    shifted = pts[..., None, :] - z
    vals = model.evaluate(t, shifted)
    out = np.einsum("...qi,q->...i", vals, w)
    return out[0] if single else out


def grad_mollified(model, moll, t, x):
    """Space gradient of the mollified drift, shape (..., dim, dim).

    Entry [i, j] is dF_eps_i/dx_j, computed by convolving F with the
    analytically differentiated bump (no finite differences involved).
    """
    pts, single = as_points(x, model.dim)
    z, wg = moll.weighted_grad_nodes(model.dim)
    shifted = pts[..., None, :] - z
    vals = model.evaluate(t, shifted)
    out = np.einsum("...qi,qj->...ij", vals, wg)
    return out[0] if single else out


def grad_F(model, moll, t, x):
    """Gradient of the drift at smoothing scale given by `moll`.

    moll may be None (or have eps == 0 conceptually), in which case the
    model's closed-form almost-everywhere gradient is used; this is the
    eps -> 0 envelope that dominates every mollified gradient for the
    power-type families.
    """
    if moll is None:
        return model.gradient(t, x)
    return grad_mollified(model, moll, t, x)


# ---------------------------------------------------------------------------
# Smooth cutoff
# ---------------------------------------------------------------------------

@lru_cache(maxsize=4)
def _edge_rule(order=64):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    return 0.5 * (nodes + 1.0), 0.5 * weights


def _edge_profile(s):
    """Smooth monotone ramp P with P(0)=0, P(1)=1, flat at both ends.

    P(s) = int_0^s exp(-1/(u(1-u))) du, normalized.  Evaluated by mapping
    a fixed Gauss-Legendre rule onto [0, s] for each s (vectorized).
    """
    s = np.asarray(s, dtype=float)
    nodes, weights = _edge_rule()
    u = s[..., None] * nodes
    inner = u * (1.0 - u)
    vals = np.zeros_like(u)
    ok = inner > 1e-14
    vals[ok] = np.exp(-1.0 / inner[ok])
    partial = np.sum(vals * weights, axis=-1) * s
    total = _edge_profile_total()
    return partial / total


@lru_cache(maxsize=1)
def _edge_profile_total():
    nodes, weights = np.polynomial.legendre.leggauss(128)
    u = 0.5 * (nodes + 1.0)
    w = 0.5 * weights
    return float(np.sum(w * np.exp(-1.0 / (u * (1.0 - u)))))


def cutoff_chi(m, x):
    """Smooth cutoff: 1 on |x| <= m, 0 on |x| >= m+1, monotone in between.

    Built from an integrated bump, so the transition is C-infinity.
    Accepts scalars or point arrays of shape (..., d); returns a value in
    [0, 1] per point.
    """
    if m < 1:
        raise ValueError("cutoff level m must be >= 1")
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        r = np.abs(arr)[None]
        single = True
    elif arr.ndim == 1:
        # a single point in R^d
        r = np.array([np.linalg.norm(arr)])
        single = True
    else:
        r = np.linalg.norm(arr, axis=-1)
        single = False
    out = np.where(r <= m, 1.0, 0.0)
    ramp = (r > m) & (r < m + 1.0)
    if np.any(ramp):
        # the integrated-bump profile costs a quadrature per point, so
        # evaluate it only on the transition shell
        out[ramp] = 1.0 - _edge_profile(r[ramp] - m)
    return float(out[0]) if single else out
