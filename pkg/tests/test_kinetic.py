"""Path simulation of the kinetic system and the coupling probes."""

import numpy as np
import pytest

from kinetic_rbn.drift_library import LipschitzTest, PeanoPower, ZeroDrift
from kinetic_rbn.errors import ModelError
from kinetic_rbn.kinetic_sim import (SystemSpec, exact_kinetic_covariance,
                                     flow_theta, make_stream,
                                     peano_branching, simulate,
                                     simulate_ensemble, uniqueness_gap)
from kinetic_rbn.stable_noise import StableNoiseSpec


def brownian_spec(drift=None, dim=1):
    return SystemSpec(drift=drift or ZeroDrift(dim=dim),
                      noise=StableNoiseSpec(alpha=2.0, dim=dim))


GRID = np.linspace(0.0, 1.0, 101)


def test_spec_dim_mismatch():
    with pytest.raises(ModelError):
        SystemSpec(drift=ZeroDrift(dim=2), noise=StableNoiseSpec(alpha=2.0))
    with pytest.raises(ModelError):
        SystemSpec(drift=ZeroDrift(), noise=StableNoiseSpec(alpha=2.0),
                   coercivity=0.5)


def test_simulate_single_path_shapes():
    spec = brownian_spec(dim=2)
    stream = make_stream(spec, GRID, seed=0)
    path = simulate(spec, np.zeros(4), stream)
    assert path.V.shape == (101, 2)
    assert path.X.shape == (101, 2)
    v_T, x_T = path.terminal
    assert v_T.shape == (2,)
    np.testing.assert_array_equal(path.V[0], 0.0)


def test_v_is_noise_partial_sum():
    """With mu = 0 and sigma = identity, V is exactly the running sum of
    increments; X never feeds back into V."""
    spec = brownian_spec(drift=PeanoPower(beta=0.5))
    stream = make_stream(spec, GRID, seed=3)
    path = simulate(spec, np.array([0.25, 0.0]), stream)
    np.testing.assert_allclose(
        path.V[:, 0], 0.25 + np.concatenate([[0.0],
                                             np.cumsum(stream.increments[:, 0])]),
        atol=1e-12)


def test_x_trapezoid_update():
    spec = brownian_spec(drift=LipschitzTest(matrix=[[0.0]], offset=1.0))
    stream = make_stream(spec, GRID, seed=1)
    path = simulate(spec, np.zeros(2), stream)
    dts = np.diff(GRID)
    x_manual = np.concatenate(
        [[0.0], np.cumsum(0.5 * (path.V[:-1, 0] + path.V[1:, 0]) * dts
                          + 1.0 * dts)])
    np.testing.assert_allclose(path.X[:, 0], x_manual, atol=1e-12)


def test_ensemble_matches_chunk_concatenation():
    spec = brownian_spec()
    full = simulate_ensemble(spec, [0.0, 0.0], GRID, 300, seed=5,
                             chunk_size=128)
    parts = [simulate_ensemble(spec, [0.0, 0.0], GRID, 300, seed=5,
                               chunk_size=128, chunk_range=(lo, lo + 1))
             for lo in range(3)]
    np.testing.assert_array_equal(
        full.V, np.concatenate([p.V for p in parts], axis=0))
    np.testing.assert_array_equal(
        full.X, np.concatenate([p.X for p in parts], axis=0))


def test_ensemble_time_selection():
    spec = brownian_spec()
    res = simulate_ensemble(spec, [0.0, 0.0], GRID, 16, seed=2,
                            times=[0.25, 1.0])
    assert res.V.shape == (16, 2, 1)
    np.testing.assert_array_equal(res.times, [0.25, 1.0])
    with pytest.raises(ValueError):
        simulate_ensemble(spec, [0.0, 0.0], GRID, 4, seed=2, times=[0.131])
    res_all = simulate_ensemble(spec, [0.0, 0.0], GRID, 4, seed=2,
                                times="all")
    assert res_all.V.shape == (4, 101, 1)


def test_ensemble_deterministic_rerun():
    spec = brownian_spec(drift=PeanoPower(beta=0.5))
    a = simulate_ensemble(spec, [1.0, 0.0], GRID, 64, seed=9, eps=0.05)
    b = simulate_ensemble(spec, [1.0, 0.0], GRID, 64, seed=9, eps=0.05)
    np.testing.assert_array_equal(a.V, b.V)
    np.testing.assert_array_equal(a.X, b.X)


def test_overflow_guard_freezes_paths():
    # exponential blow-up hits the guard; flagged, frozen, finite
    spec = brownian_spec(drift=LipschitzTest(matrix=[[40.0]], offset=10.0))
    res = simulate_ensemble(spec, [0.0, 1.0], GRID, 8, seed=0,
                            overflow_guard=1e3, times="all")
    assert np.all(res.truncated)
    assert np.all(np.isfinite(res.X))


def test_kinetic_covariance_small_run():
    """Terminal covariance of (V, X) for the free system approximates
    [[T, T^2/2], [T^2/2, T^3/3]]; loose 5-sigma band at 20k paths."""
    spec = brownian_spec()
    res = simulate_ensemble(spec, [0.0, 0.0], np.linspace(0, 1.0, 65),
                            20_000, seed=7)
    v, x = res.terminal()
    emp = np.cov(np.column_stack([v[:, 0], x[:, 0]]).T)
    exact = exact_kinetic_covariance(1.0)
    np.testing.assert_allclose(emp, exact, atol=5 * 0.015)
    np.testing.assert_allclose(exact, [[1.0, 0.5], [0.5, 1.0 / 3.0]])


def test_flow_theta_zero_drift_is_free_motion():
    spec = brownian_spec()
    th = flow_theta(spec, 0.1, 0.0, 2.0, [0.5], [1.0])
    # velocity frozen (no drift in V for the deterministic flow), x moves
    assert th[0] == pytest.approx(0.5)
    assert th[1] == pytest.approx(1.0 + 0.5 * 2.0, rel=1e-8)


def test_uniqueness_gap_identical_eps_is_zero():
    spec = brownian_spec(drift=PeanoPower(beta=0.5))
    rep = uniqueness_gap(spec, [0.0, 0.0], (0.05, 0.05), 32, seed=3,
                         grid=GRID)
    assert rep.mean_gap == 0.0
    assert rep.max_gap == 0.0


def test_uniqueness_gap_shrinks_with_eps():
    spec = brownian_spec(drift=PeanoPower(beta=0.5))
    wide = uniqueness_gap(spec, [0.0, 0.0], (0.2, 0.1), 512, seed=3,
                          grid=GRID)
    tight = uniqueness_gap(spec, [0.0, 0.0], (0.05, 0.025), 512, seed=3,
                           grid=GRID)
    assert tight.mean_gap < wide.mean_gap


def test_peano_branching():
    rep = peano_branching(0.5, horizon=1.0)
    assert rep.residual_zero == 0.0
    assert rep.residual_branch <= 1e-8
    assert rep.branch_terminal == pytest.approx(0.25)
    assert rep.distinct
    # beta -> 1 recovers uniqueness in the limit: branch shrinks
    assert peano_branching(0.9).branch_terminal < 0.25


def test_make_stream_index_separation():
    spec = brownian_spec()
    s0 = make_stream(spec, GRID, seed=4, index=0)
    s1 = make_stream(spec, GRID, seed=4, index=1)
    assert np.any(s0.increments != s1.increments)
