"""Discrete Holder-Zygmund seminorms and interpolation-inequality checks.

Works on scalar functions sampled over a uniform 1-d or 2-d lattice.  The
seminorm of order beta uses iterated differences of order floor(beta)+1:

    [f]_beta = max over lattice points x and lattice steps h != 0 of
               |delta_h^{floor(beta)+1} f(x)| / |h|^beta

which extends the Holder quotient past integer orders (at beta = 1 this
is the Zygmund class: second differences divided by |h|).  Only
lattice-aligned steps are searched (axis directions, plus the two
diagonals in 2-d), which is adequate for the smooth and |x|-type inputs
these sanity checks are run on.
"""

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["GridFunction", "SeminormResult", "zygmund_seminorm",
           "InterpolationReport", "check_interpolation"]


@dataclass
class GridFunction:
    """Real values on a uniform lattice over a compact box.

    values: shape (n,) for 1-d or (n1, n2) for 2-d.
    spacing: common lattice spacing h0 > 0.
    origin: coordinate of values[0] (or values[0, 0]).
    """

    values: np.ndarray
    spacing: float
    origin: object = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim not in (1, 2):
            raise ValueError("GridFunction supports 1-d or 2-d lattices")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        if self.values.size == 0:
            raise ValueError("empty grid")

    @property
    def ndim(self):
        return self.values.ndim

    @classmethod
    def sample(cls, func, lo, hi, num):
        """Sample a callable on a uniform grid over [lo, hi] (1-d) or the
        box [lo1, hi1] x [lo2, hi2] (2-d, pass 2-vectors)."""
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if lo.shape == (1,):
            xs = np.linspace(lo[0], hi[0], num)
            return cls(values=np.asarray(func(xs), dtype=float),
                       spacing=(hi[0] - lo[0]) / (num - 1), origin=lo[0])
        spacing = (hi[0] - lo[0]) / (num - 1)
        if not math.isclose(spacing, (hi[1] - lo[1]) / (num - 1)):
            raise ValueError("2-d sampling needs equal spacing per axis")
        x = np.linspace(lo[0], hi[0], num)
        y = np.linspace(lo[1], hi[1], num)
        xx, yy = np.meshgrid(x, y, indexing="ij")
        return cls(values=np.asarray(func(xx, yy), dtype=float),
                   spacing=spacing, origin=lo)


@dataclass
class SeminormResult:
    seminorm: float
    sup: float
    order: int

    @property
    def norm(self):
        return self.sup + self.seminorm


def _iterated_diff(values, order, step, axis_shifts):
    """delta_h^order f with h = step * (unit lattice direction).

    axis_shifts encodes the direction as per-axis index shifts of one
    lattice step, e.g. (1,) for 1-d, (1, 0) or (1, -1) for 2-d.
    """
    v = values
    out = None
    for j in range(order + 1):
        coef = (-1.0) ** (order - j) * math.comb(order, j)
        sl = []
        for n_axis, shift in zip(v.shape, axis_shifts):
            total = shift * step * order
            offs = shift * step * j
            if shift >= 0:
                sl.append(slice(offs, n_axis - (total - offs)))
            else:
                sl.append(slice(-total + offs if -total + offs > 0 else None,
                                n_axis + offs if offs < 0 else None))
        term = coef * v[tuple(sl)]
        out = term if out is None else out + term
    return out


def _directions(ndim):
    if ndim == 1:
        return [((1,), 1.0)]
    return [((1, 0), 1.0), ((0, 1), 1.0),
            ((1, 1), math.sqrt(2.0)), ((1, -1), math.sqrt(2.0))]


def zygmund_seminorm(f, beta, max_steps=None):
    """Discrete Holder-Zygmund seminorm of order beta > 0.

    Searches every admissible lattice step up to the box width (or the
    first `max_steps` of them) and every lattice direction.  Returns a
    SeminormResult carrying the seminorm, the sup norm and the difference
    order used.

    Raises ValueError if the grid is too small for the required
    difference order.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    order = math.floor(beta) + 1
    v = f.values
    n_min = min(v.shape)
    if n_min <= order:
        raise ValueError(
            f"grid too small for order-{order} differences ({n_min} points)")
    best = 0.0
    for shifts, length in _directions(f.ndim):
        k_max = (n_min - 1) // order
        if max_steps is not None:
            k_max = min(k_max, max_steps)
        for k in range(1, k_max + 1):
            diff = _iterated_diff(v, order, k, shifts)
            if diff.size == 0:
                continue
            h = k * f.spacing * length
            best = max(best, float(np.max(np.abs(diff))) / h ** beta)
    return SeminormResult(seminorm=best, sup=float(np.max(np.abs(v))),
                          order=order)


def _c_norm(f, beta, max_steps=None):
    """Full discrete norm: sup for beta = 0, sup + seminorm for beta > 0."""
    if beta == 0:
        return float(np.max(np.abs(f.values)))
    return zygmund_seminorm(f, beta, max_steps=max_steps).norm


@dataclass
class InterpolationReport:
    norms: dict
    rows: list
    c_max: float
    bounded: bool


def check_interpolation(f, s, r, t, delta_list):
    """Measure the interpolation constant in
    ||f||_r <= delta ||f||_t + C delta^((s-r)/(t-r)) ||f||_s
    for the discrete norms, per delta.

    The exponent (s-r)/(t-r) is negative, so the C-term grows as delta
    shrinks; the report carries the smallest admissible C for each delta
    and whether the set is bounded (no infinities).
    """
    if not (0 <= s < r < t):
        raise ValueError(f"need 0 <= s < r < t, got ({s}, {r}, {t})")
    deltas = [float(d) for d in delta_list]
    if any(not (0 < d < 1) for d in deltas):
        raise ValueError("every delta must lie in (0, 1)")
    norms = {s: _c_norm(f, s), r: _c_norm(f, r), t: _c_norm(f, t)}
    rows = []
    for d in deltas:
        residual = norms[r] - d * norms[t]
        if residual <= 0:
            c = 0.0
        elif norms[s] == 0:
            c = math.inf
        else:
            c = residual / (d ** ((s - r) / (t - r)) * norms[s])
        rows.append((d, c))
    c_max = max(c for _, c in rows) if rows else 0.0
    return InterpolationReport(norms=norms, rows=rows, c_max=c_max,
                               bounded=math.isfinite(c_max))
