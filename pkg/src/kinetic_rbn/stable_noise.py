"""Exact sampling of isotropic symmetric alpha-stable increments.

The driving noise of the kinetic system is a d-dimensional rotationally
invariant alpha-stable Levy process with stability index alpha in (1, 2].
Increments over a step dt are sampled exactly in law:

* alpha < 2, d = 1: the Chambers-Mallows-Stuck transform of a uniform and
  an exponential variate, giving characteristic function exp(-dt*|xi|^alpha).
* alpha < 2, d >= 2: subordination.  L = sqrt(2*S) * Z with Z standard
  Gaussian and S a positive (alpha/2)-stable variable with Laplace
  transform exp(-u^(alpha/2)) (Kanter's method), again giving
  exp(-dt*|xi|^alpha).
* alpha = 2: a standard Brownian increment, N(0, dt*Identity).

Note the deliberate convention seam at alpha = 2: the Brownian branch has
characteristic function exp(-dt*|xi|^2/2), not exp(-dt*|xi|^2).  Any fixed
multiplicative constant between kernel normalizations can be absorbed into
the diffusion coefficient, and `StableNoiseSpec.convention_constant` is the
place where a caller records that choice.  It is carried around but never
enters the sampler.
"""

from dataclasses import dataclass, field

import numpy as np

from ._util import substream


@dataclass(frozen=True)
class StableNoiseSpec:
    """Parameters of the driving noise.

    alpha: stability index, in (1, 2].  alpha = 2 selects standard
        Brownian motion.
    dim: spatial dimension d >= 1.
    convention_constant: positive bookkeeping constant recording the
        multiplicative normalization a caller attaches to the generator's
        jump kernel.  Exposed, never asserted.
    """

    alpha: float
    dim: int = 1
    convention_constant: float = 1.0

    def __post_init__(self):
        if not (1.0 < self.alpha <= 2.0):
            raise ValueError(f"alpha must lie in (1, 2], got {self.alpha}")
        if self.dim < 1 or int(self.dim) != self.dim:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")
        if not self.convention_constant > 0:
            raise ValueError("convention_constant must be positive")

    @property
    def is_brownian(self):
        return self.alpha == 2.0


@dataclass(frozen=True)
class NoiseIncrementStream:
    """A realized sequence of noise increments over a time grid.

    Holds one d-vector increment per grid interval.  Streams are value
    objects: regenerating with the same (spec, grid, seed, index) yields
    bitwise-identical increments, which is what makes shared-noise
    coupling of two solutions possible.
    """

    spec: StableNoiseSpec
    grid: np.ndarray
    seed: int
    increments: np.ndarray
    index: int = 0

    def __post_init__(self):
        if self.increments.shape != (len(self.grid) - 1, self.spec.dim):
            raise ValueError("increment count must equal grid interval count")

    @property
    def dts(self):
        return np.diff(self.grid)


def _cms_symmetric(alpha, size, rng):
    """Standard symmetric alpha-stable variates, CF exp(-|xi|^alpha).

    Chambers-Mallows-Stuck for the symmetric case.  Draw order is fixed
    (uniform angle first, then exponential), which the determinism
    contract of `sample_stream` relies on.
    """
    v = rng.uniform(-np.pi / 2, np.pi / 2, size=size)
    w = rng.standard_exponential(size=size)
    a = alpha * v
    x = (np.sin(a) / np.cos(v) ** (1.0 / alpha)) * (
        np.cos(v - a) / w) ** ((1.0 - alpha) / alpha)
    return x


def _positive_stable(rho, size, rng):
    """Positive rho-stable variates with Laplace transform exp(-u^rho).

    Kanter's representation: S = (A(U)/E)^((1-rho)/rho) with U uniform on
    (0, pi), E exponential and A the Zolotarev function.  Evaluated in log
    space; A blows up near u = pi, which is the heavy tail doing its job.
    """
    if not (0.0 < rho < 1.0):
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    u = rng.uniform(0.0, np.pi, size=size)
    e = rng.standard_exponential(size=size)
    log_a = (rho * np.log(np.sin(rho * u))
             + (1.0 - rho) * np.log(np.sin((1.0 - rho) * u))
             - np.log(np.sin(u))) / (1.0 - rho)
    return np.exp(((1.0 - rho) / rho) * (log_a - np.log(e)))


def sample_increments(spec, dt, size, rng):
    """Sample an array of increments with leading shape `size`.

    dt may be a scalar or an array broadcastable to `size`; the result has
    shape size + (dim,).  This is the vectorized workhorse behind
    `sample_increment` and `sample_stream`.
    """
    size = (size,) if np.isscalar(size) else tuple(size)
    dt = np.broadcast_to(np.asarray(dt, dtype=float), size)
    if np.any(dt < 0):
        raise ValueError("dt must be nonnegative")
    d = spec.dim
    if spec.is_brownian:
        return rng.standard_normal(size + (d,)) * np.sqrt(dt)[..., None]
    scale = dt[..., None] ** (1.0 / spec.alpha)
    if d == 1:
        return scale * _cms_symmetric(spec.alpha, size, rng)[..., None]
    s = _positive_stable(spec.alpha / 2.0, size, rng)
    z = rng.standard_normal(size + (d,))
    return scale * np.sqrt(2.0 * s)[..., None] * z


def sample_increment(spec, dt, rng):
    """One increment of the driving process over a step of length dt.

    Parameters
    ----------
    spec : StableNoiseSpec
    dt : float, nonnegative
    rng : numpy.random.Generator

    Returns
    -------
    ndarray of shape (dim,), distributed with characteristic function
    exp(-dt*|xi|^alpha) for alpha < 2 and as N(0, dt*Identity) at alpha=2.
    """
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    if dt == 0:
        return np.zeros(spec.dim)
    return sample_increments(spec, dt, (), rng).reshape(spec.dim)


def empirical_cf(samples, xi):
    """Empirical characteristic function value: mean of cos(<xi, sample>).

    The imaginary part is zero in expectation by symmetry and is left to
    the caller to assert separately.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.size == 0:
        raise ValueError("empirical_cf needs a nonempty sample set")
    if arr.ndim == 1:
        arr = arr[:, None]
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.shape != (arr.shape[1],):
        raise ValueError(f"xi must be a {arr.shape[1]}-vector")
    return float(np.mean(np.cos(arr @ xi)))


def sample_stream(spec, grid, seed, index=0):
    """Generate the full increment stream for a time grid.

    Parameters
    ----------
    spec : StableNoiseSpec
    grid : strictly increasing 1-d array of time points in [0, T]
    seed : int, master seed
    index : int, substream index (path number when streams are generated
        in families; the default 0 is a single stand-alone stream)

    Deterministic: the same (spec, grid, seed, index) always yields the
    same increments.  Increments are independent across intervals.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 2:
        raise ValueError("grid must be a 1-d array with at least two points")
    dts = np.diff(grid)
    if np.any(dts <= 0):
        raise ValueError("grid must be strictly increasing")
    rng = substream(seed, index)
    inc = sample_increments(spec, dts, (len(dts),), rng)
    return NoiseIncrementStream(spec=spec, grid=grid, seed=int(seed),
                                increments=inc, index=int(index))
