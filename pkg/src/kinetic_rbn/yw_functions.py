"""The Watanabe-Yamada approximation sequence phi_n and its defining bounds.

The construction: a_n = exp(-n(n+1)) decreases to zero, and for each n a
continuous probability density psi_n lives on [a_n, a_{n-1}] with
0 <= psi_n(y) <= 1/(n*y).  Integrating twice,

    phi_n(x) = int_0^{|x|} int_0^eta psi_n(y) dy deta,

one obtains smooth even functions increasing to |x| whose second
derivative is psi_n(|x|), supported on a shrinking annulus.  These are
the test functions that replace |x| in Gronwall arguments when the drift
is not Lipschitz.

The density is under-determined (any continuous unit-mass choice below
1/(n*y) works; the slack is that 1/(n*y) integrates to 2 over the
interval).  Here psi_n(y) = (2/(3n*y)) * h_n(ln y) with h_n a trapezoid
of height 1 on the log-interval [ln a_n, ln a_{n-1}] (length 2n, ramps of
length n/2): the trapezoid area is 3n/2, so the mass is exactly 1, and
the bound psi_n <= (2/3)/(n*y) < 1/(n*y) holds with margin.  Everything
downstream (CDF, phi_n) then has a closed piecewise form: the only
integrals involved are of (quadratic in w) * e^w.

Scale warning: a_n underflows float64 near n = 26, so interior evaluation
is meaningful for n <= 25 and the property checks are run for n <= 8.
"""

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "a_seq", "log_interval_mass", "psi_n", "psi_cdf", "phi_n", "phi_prime",
    "phi_second", "YWSequenceElement", "element", "default_check_grid",
    "check_yw_properties", "YWPropertyReport",
]


def a_seq(n):
    """a_n = exp(-n(n+1)) for integer n >= 0.  a_0 = 1."""
    if n < 0:
        raise ValueError("n must be >= 0")
    return math.exp(-n * (n + 1))


def log_interval_mass(n):
    """The exact value of int_{a_n}^{a_{n-1}} 1/(2y) dy, as an integer.

    (ln a_{n-1} - ln a_n)/2 = (n(n+1) - (n-1)n)/2 = n, in exact integer
    arithmetic.  This is the identity that makes the 1/(n*y) envelope a
    usable probability bound on every interval.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    return ((n * (n + 1)) - ((n - 1) * n)) // 2


def _trapezoid(n, w):
    """h_n on the shifted log-coordinate w = ln(y) - ln(a_n), w in [0, 2n]."""
    w = np.asarray(w, dtype=float)
    up = 2.0 * w / n
    down = 2.0 * (2.0 * n - w) / n
    return np.clip(np.minimum(np.minimum(up, down), 1.0), 0.0, None)


def psi_n(n, y):
    """The density psi_n(y); zero off the support [a_n, a_{n-1}].

    Vectorized in y.  Values satisfy 0 <= psi_n(y) <= (2/3)/(n*y).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    y = np.asarray(y, dtype=float)
    scalar = y.ndim == 0
    y = np.atleast_1d(y)
    out = np.zeros_like(y)
    pos = y > 0
    if np.any(pos):
        w = np.log(y[pos]) + n * (n + 1)
        inside = (w > 0) & (w < 2.0 * n)
        vals = np.zeros_like(w)
        if np.any(inside):
            vals[inside] = (2.0 / (3.0 * n * y[pos][inside])
                            * _trapezoid(n, w[inside]))
        out[pos] = vals
    return float(out[0]) if scalar else out


def _H(n, w):
    """Integral of the trapezoid: H_n(w) = int_0^w h_n, piecewise quadratic."""
    w = np.asarray(w, dtype=float)
    n1, n2 = n / 2.0, 3.0 * n / 2.0
    out = np.where(
        w <= n1, w ** 2 / n,
        np.where(w <= n2, w - n / 4.0,
                 4.0 * w - w ** 2 / n - 5.0 * n / 2.0))
    return np.clip(out, 0.0, 1.5 * n)


def psi_cdf(n, eta):
    """CDF of psi_n: Psi_n(eta) = int_0^eta psi_n(y) dy, in closed form."""
    if n < 1:
        raise ValueError("n must be >= 1")
    eta = np.asarray(eta, dtype=float)
    scalar = eta.ndim == 0
    eta = np.atleast_1d(eta)
    out = np.zeros_like(eta)
    a_hi = a_seq(n - 1)
    pos = eta > 0
    w = np.full_like(eta, -np.inf)
    with np.errstate(divide="ignore"):
        w[pos] = np.log(eta[pos]) + n * (n + 1)
    mid = pos & (w > 0) & (w < 2.0 * n)
    out[mid] = (2.0 / (3.0 * n)) * _H(n, w[mid])
    out[eta >= a_hi] = 1.0
    out = np.minimum(out, 1.0)
    return float(out[0]) if scalar else out


def _J_pieces(n, w):
    """J_n(w) = int_0^w H_n(u) e^u du, exact per piece of H_n.

    Uses int (c2 u^2 + c1 u + c0) e^u du = e^u (c2 (u^2-2u+2) + c1 (u-1) + c0).
    """
    def antider(c2, c1, c0, u):
        return np.exp(u) * (c2 * (u * u - 2.0 * u + 2.0) + c1 * (u - 1.0) + c0)

    n1, n2, n3 = n / 2.0, 3.0 * n / 2.0, 2.0 * n
    w = np.asarray(w, dtype=float)
    wc = np.clip(w, 0.0, n3)

    # piece 1: H = u^2/n on [0, n1]
    u1 = np.minimum(wc, n1)
    j = antider(1.0 / n, 0.0, 0.0, u1) - antider(1.0 / n, 0.0, 0.0, 0.0)
    # piece 2: H = u - n/4 on [n1, n2]
    u2 = np.clip(wc, n1, n2)
    j += antider(0.0, 1.0, -n / 4.0, u2) - antider(0.0, 1.0, -n / 4.0, n1)
    # piece 3: H = -u^2/n + 4u - 5n/2 on [n2, 2n]
    u3 = np.clip(wc, n2, n3)
    j += antider(-1.0 / n, 4.0, -2.5 * n, u3) - antider(-1.0 / n, 4.0, -2.5 * n, n2)
    return j


def _tail_defect(n):
    """d_n = a_{n-1} - phi_n(a_{n-1}) = int_0^{a_{n-1}} (1 - Psi_n); in [a_n, a_{n-1}]."""
    a_lo = a_seq(n)
    return a_seq(n - 1) - (2.0 / (3.0 * n)) * a_lo * _J_pieces(n, 2.0 * n)


def phi_n(n, x):
    """The double integral phi_n(x) = int_0^{|x|} Psi_n, evaluated exactly.

    Even in x; zero on [-a_n, a_n]; equal to |x| - d_n beyond a_{n-1} with
    0 <= d_n <= a_{n-1}.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    ax = np.atleast_1d(np.abs(x))
    a_lo, a_hi = a_seq(n), a_seq(n - 1)
    out = np.zeros_like(ax)

    inside = (ax > a_lo) & (ax < a_hi)
    if np.any(inside):
        w = np.log(ax[inside]) + n * (n + 1)
        out[inside] = (2.0 / (3.0 * n)) * a_lo * _J_pieces(n, w)
    beyond = ax >= a_hi
    out[beyond] = ax[beyond] - _tail_defect(n)
    out = np.maximum(out, 0.0)
    return float(out[0]) if scalar else out


def phi_prime(n, x):
    """First derivative: sign(x) * Psi_n(|x|).  Bounded by 1 in absolute value."""
    x = np.asarray(x, dtype=float)
    return np.sign(x) * psi_cdf(n, np.abs(x))


def phi_second(n, x):
    """Second derivative: psi_n(|x|), supported on a_n < |x| < a_{n-1}."""
    x = np.asarray(x, dtype=float)
    return psi_n(n, np.abs(x))


@dataclass(frozen=True)
class YWSequenceElement:
    """One element of the sequence: index, support endpoints, density handle."""

    n: int
    a_lo: float
    a_hi: float

    def psi(self, y):
        return psi_n(self.n, y)

    def cdf(self, eta):
        return psi_cdf(self.n, eta)

    def phi(self, x):
        return phi_n(self.n, x)

    def mass(self, quadrature_points=20001):
        """Numerical check of int psi_n = 1 (log-spaced Simpson)."""
        z = np.linspace(math.log(self.a_lo), math.log(self.a_hi),
                        quadrature_points)
        y = np.exp(z)
        # int psi dy = int psi(e^z) e^z dz
        from scipy.integrate import simpson
        return float(simpson(psi_n(self.n, y) * y, x=z))


def element(n):
    if n < 1:
        raise ValueError("n must be >= 1")
    return YWSequenceElement(n=n, a_lo=a_seq(n), a_hi=a_seq(n - 1))


def default_check_grid(n_max=8, total=2001):
    """Symmetric grid on [-1, 1] with points both inside and outside every
    support annulus up to n_max: a uniform sweep plus log-spaced points
    reaching below a_{n_max}."""
    n_uniform = total - 2 * ((total - 1) // 4)
    n_log = (total - n_uniform) // 2
    lo = min(1e-34, a_seq(n_max) * 1e-3)
    uniform = np.linspace(-1.0, 1.0, n_uniform)
    logs = np.geomspace(lo, 1.0, n_log + 1)[:-1]
    grid = np.concatenate([uniform, logs, -logs])
    grid.sort()
    return grid


@dataclass
class YWPropertyReport:
    ok: bool
    failures: list
    per_n: dict


def check_yw_properties(n_list, grid):
    """Verify the four defining properties of phi_n at every grid point.

    (i)   phi_n >= 0 and phi_n(0) = 0;
    (ii)  |phi_n'| <= 1;
    (iii) phi_n''(x) = psi_n(|x|) <= 1/(n|x|), vanishing outside the
          open annulus (a_n, a_{n-1});
    (iv)  phi_n <= phi_{n+1} <= |x| and |x| - phi_n(x) <= a_{n-1}.

    Returns a YWPropertyReport; each violated property contributes a
    (property, n, witness_x, detail) entry to `failures`.
    """
    grid = np.asarray(grid, dtype=float)
    failures = []
    per_n = {}
    for n in n_list:
        a_lo, a_hi = a_seq(n), a_seq(n - 1)
        ax = np.abs(grid)
        phi = phi_n(n, grid)
        phi_next = phi_n(n + 1, grid)
        dphi = phi_prime(n, grid)
        ddphi = phi_second(n, grid)

        def record(prop, mask, detail):
            if np.any(mask):
                i = int(np.argmax(mask))
                failures.append((prop, n, float(grid[i]), detail))

        record("i:nonneg", phi < 0.0, "phi_n < 0")
        if phi_n(n, 0.0) != 0.0:
            failures.append(("i:zero", n, 0.0, "phi_n(0) != 0"))
        record("ii:slope", np.abs(dphi) > 1.0, "|phi_n'| > 1")
        nonzero = ax > 0
        envelope = np.ones_like(ax)
        envelope[nonzero] = 1.0 / (n * ax[nonzero])
        record("iii:envelope", nonzero & (ddphi > envelope),
               "phi_n'' above 1/(n|x|)")
        outside = (ax <= a_lo) | (ax >= a_hi)
        record("iii:support", outside & (ddphi != 0.0),
               "phi_n'' nonzero off the annulus")
        record("iv:monotone", phi > phi_next + 1e-15 * np.maximum(ax, 1.0),
               "phi_n > phi_{n+1}")
        record("iv:below", phi > ax, "phi_n > |x|")
        record("iv:gap", ax - phi > a_hi, "|x| - phi_n > a_{n-1}")

        per_n[n] = {
            "max_gap": float(np.max(ax - phi)),
            "a_hi": a_hi,
            "tail_defect": _tail_defect(n),
            "mass": element(n).mass(),
        }
    return YWPropertyReport(ok=not failures, failures=failures, per_n=per_n)
