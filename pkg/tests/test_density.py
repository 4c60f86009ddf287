"""KDE marginals and the anisotropic Gaussian envelope."""

import numpy as np
import pytest

from kinetic_rbn.density_probe import (GaussianKernel, envelope_check,
                                       eval_g_lambda, gamma_density,
                                       kde_marginal)
from kinetic_rbn.drift_library import PeanoPower, ZeroDrift
from kinetic_rbn.kinetic_sim import SystemSpec, simulate_ensemble
from kinetic_rbn.stable_noise import StableNoiseSpec


def test_gamma_density_normalizes():
    xs = np.linspace(-12, 12, 40_001)
    for c in (0.3, 1.0, 4.0):
        mass = np.trapezoid(gamma_density(c, xs, dim=1), xs)
        assert mass == pytest.approx(1.0, abs=1e-6)


def test_gamma_density_scale():
    # variance parameter c is the Gaussian variance
    xs = np.linspace(-8, 8, 40_001)
    d = gamma_density(2.0, xs, dim=1)
    var = np.trapezoid(xs ** 2 * d, xs)
    assert var == pytest.approx(2.0, rel=1e-4)


def test_eval_g_lambda_kinetic_scaling():
    k = GaussianKernel(lam=1.0, dim=1)
    t = 0.5
    # density in (v, x) with variances lam*t and lam*t^3
    v = np.linspace(-4, 4, 2001)
    g_v = eval_g_lambda(k, t, v[:, None], np.zeros((2001, 1)))
    peak = eval_g_lambda(k, t, np.zeros((1, 1)), np.zeros((1, 1)))[0]
    sd_v = np.sqrt(t)
    assert g_v[1000] == pytest.approx(peak)
    ratio = g_v[np.argmin(np.abs(v - sd_v))] / peak
    assert ratio == pytest.approx(np.exp(-0.5), rel=1e-2)


@pytest.fixture(scope="module")
def free_ensemble():
    spec = SystemSpec(drift=ZeroDrift(), noise=StableNoiseSpec(alpha=2.0))
    return spec, simulate_ensemble(spec, [0.0, 0.0],
                                   np.linspace(0.0, 1.0, 129), 20_000,
                                   seed=3, times=[0.5, 1.0])


def test_kde_marginal_basic(free_ensemble):
    _, ens = free_ensemble
    est = kde_marginal(ens, 1.0)
    assert est.integral() == pytest.approx(1.0, abs=0.02)
    assert abs(est.mode()) < 0.15
    # X_1 for the free kinetic system has variance 1/3
    var = np.trapezoid(est.xs ** 2 * est.density, est.xs)
    assert var == pytest.approx(1.0 / 3.0, abs=0.05)


def test_kde_requires_stored_time(free_ensemble):
    _, ens = free_ensemble
    with pytest.raises(ValueError):
        kde_marginal(ens, 0.77)


def test_kde_explicit_bandwidth(free_ensemble):
    _, ens = free_ensemble
    wide = kde_marginal(ens, 1.0, bandwidth=0.5)
    narrow = kde_marginal(ens, 1.0, bandwidth=0.05)
    assert wide.bandwidth == 0.5
    assert np.max(narrow.density) > np.max(wide.density)


def test_envelope_free_system_near_exact(free_ensemble):
    """For F = 0 the transition density IS the kinetic Gaussian, so the
    fitted constant sits close to 1 (KDE smoothing inflates it a bit)."""
    spec, ens = free_ensemble
    rep = envelope_check(ens, spec, 0.1, 0.0, 1.0, [0.0, 0.0])
    assert 0.98 <= rep.c_fit < 1.6
    assert rep.center == pytest.approx(0.0, abs=1e-12)


def test_envelope_regularized_peano():
    spec = SystemSpec(drift=PeanoPower(beta=0.5),
                      noise=StableNoiseSpec(alpha=2.0))
    ens = simulate_ensemble(spec, [0.0, 0.0], np.linspace(0.0, 1.0, 257),
                            8000, seed=5, eps=0.1, times=[1.0])
    rep = envelope_check(ens, spec, 0.1, 0.0, 1.0, [0.0, 0.0])
    assert np.isfinite(rep.c_fit) and rep.c_fit > 0
    assert rep.lambda_star > 0
    # per-point rows cover the whole window and respect the fit
    ratios = np.array([r[3] for r in rep.rows])
    assert np.max(ratios) == pytest.approx(rep.c_fit, rel=1e-12)


def test_envelope_needs_ordered_times(free_ensemble):
    spec, ens = free_ensemble
    with pytest.raises(ValueError):
        envelope_check(ens, spec, 0.1, 1.0, 1.0, [0.0, 0.0])
