"""Characteristic flow, transport solution, gradient identity, moments."""

import numpy as np
import pytest

from kinetic_rbn.drift_library import PeanoPower, ZeroDrift
from kinetic_rbn.errors import UnsupportedError
from kinetic_rbn.kinetic_sim import SystemSpec, make_stream, simulate
from kinetic_rbn.stable_noise import StableNoiseSpec
from kinetic_rbn.transport_flow import (FrozenTrajectory, characteristic,
                                        characteristic_batch,
                                        grad_identity_check, grad_moments,
                                        transport_residual, u_eps)


@pytest.fixture(scope="module")
def traj():
    # smooth synthetic velocity path on [0, 1]
    grid = np.linspace(0.0, 1.0, 65)
    return FrozenTrajectory(grid=grid, values=np.sin(2.0 * grid))


@pytest.fixture(scope="module")
def model():
    return PeanoPower(beta=0.5)


class TestFrozenTrajectory:
    def test_validation(self):
        with pytest.raises(ValueError):
            FrozenTrajectory(grid=[0.0, 1.0, 0.5], values=[0.0, 1.0, 2.0])
        with pytest.raises(ValueError):
            FrozenTrajectory(grid=[0.0, 1.0], values=[0.0, 1.0, 2.0])
        with pytest.raises(ValueError):
            FrozenTrajectory(grid=[0.0, 1.0], values=[0.0, np.nan])
        with pytest.raises(ValueError):
            FrozenTrajectory(grid=[0.0, 1.0], values=[0.0, 1.0],
                             mode="cubic")

    def test_linear_interpolation(self):
        tr = FrozenTrajectory(grid=[0.0, 1.0], values=[0.0, 2.0])
        assert tr.v_at(0.25)[0] == pytest.approx(0.5)
        # clamps outside the grid
        assert tr.v_at(-1.0)[0] == 0.0
        assert tr.v_at(5.0)[0] == 2.0

    def test_constant_mode_is_cadlag(self):
        tr = FrozenTrajectory(grid=[0.0, 1.0, 2.0], values=[0.0, 2.0, 4.0],
                              mode="constant")
        assert tr.v_at(0.99)[0] == 0.0
        assert tr.v_at(1.0)[0] == 2.0

    def test_from_simulated_path(self):
        spec = SystemSpec(drift=ZeroDrift(),
                          noise=StableNoiseSpec(alpha=2.0))
        grid = np.linspace(0.0, 1.0, 33)
        path = simulate(spec, [0.3, 0.0], make_stream(spec, grid, seed=11))
        tr = FrozenTrajectory.from_path(path)
        assert tr.horizon == 1.0
        for k in (0, 7, 32):
            assert tr.v_at(path.grid[k])[0] == path.V[k, 0]


class TestCharacteristic:
    def test_needs_model_and_positive_eps(self, traj):
        with pytest.raises(ValueError):
            characteristic(0.1, traj, 0.0, [0.5], 1.0)
        with pytest.raises(ValueError):
            characteristic(0.0, traj, 0.0, [0.5], 1.0,
                           model=PeanoPower(beta=0.5))

    def test_horizon_guard(self, traj, model):
        with pytest.raises(ValueError):
            characteristic(0.1, traj, 0.0, [0.5], 2.0, model=model)

    def test_tau_equals_t_is_trivial(self, traj, model):
        path = characteristic(0.1, traj, 0.4, [0.5], 0.4, model=model)
        assert path.positions.shape == (1, 1)
        assert path.positions[0, 0] == 0.5
        assert path.jacobians[0, 0, 0] == 1.0
        assert path.gronwall_budget() == 0.0

    def test_budget_nondecreasing(self, traj, model):
        path = characteristic(0.1, traj, 0.0, [0.5], 1.0, model=model,
                              n_steps=64)
        assert np.all(np.diff(path.budget) >= 0.0)

    def test_batch_matches_single(self, traj, model):
        xs = np.array([[0.3], [0.5], [-0.4]])
        batch = characteristic_batch(0.1, traj, 0.0, xs, 1.0, model=model,
                                     n_steps=64)
        for i, x in enumerate(xs):
            one = characteristic(0.1, traj, 0.0, x, 1.0, model=model,
                                 n_steps=64)
            # same arithmetic path by path, so bitwise equality
            assert batch.positions[-1, i, 0] == one.positions[-1, 0]
            assert batch.jacobians[-1, i, 0, 0] == one.jacobians[-1, 0, 0]

    def test_gronwall_bound_many_probes(self, traj, model):
        rng = np.random.default_rng(0)
        xs = rng.uniform(-1.5, 1.5, size=(100, 1))
        path = characteristic_batch(0.08, traj, 0.1, xs, 0.9, model=model,
                                    n_steps=128)
        jac_norm = np.abs(path.jacobians[-1, :, 0, 0])
        bound = np.exp(path.gronwall_budget())
        assert np.all(jac_norm <= bound * (1.0 + 1e-9))


class TestTransportSolution:
    def test_terminal_condition_exact(self, traj, model):
        assert np.all(u_eps(0.1, traj, 0.7, [0.3], 0.7, model=model) == 0.0)

    def test_gradient_identity_generic_probe(self, traj, model):
        rep = grad_identity_check(0.1, traj, 0.0, [0.5], 1.0, model=model)
        assert rep.max_gap < 1e-5
        assert rep.gronwall_ok
        assert np.allclose(rep.grad_u, rep.identity_form, atol=rep.tol)

    def test_residual_small_inside_segment(self, traj, model):
        res = transport_residual(0.1, traj, 0.35, [0.4], 0.9, model=model,
                                 dt=5e-4, n_steps=2048)
        assert np.max(np.abs(res)) < 1e-4


class TestGradMoments:
    def setup_method(self):
        self.spec = SystemSpec(drift=PeanoPower(beta=0.5),
                               noise=StableNoiseSpec(alpha=2.0))

    def test_q_zero_is_unity(self):
        table = grad_moments(self.spec, [0.1], 0.0, 0.25, 1.0, 64, seed=1,
                             n_rk=16, n_sim=16)
        row = table.rows[0]
        assert row.moment == 1.0
        assert row.stderr == 0.0

    def test_zero_drift_gradient_vanishes(self):
        spec = SystemSpec(drift=ZeroDrift(),
                          noise=StableNoiseSpec(alpha=2.0))
        table = grad_moments(spec, [0.1], 2.0, 0.25, 1.0, 64, seed=1,
                             n_rk=16, n_sim=16)
        row = table.rows[0]
        assert row.moment == 0.0
        # no gradient budget anywhere: the window is the whole [t, tau]
        assert row.khasminskii_delta == pytest.approx(0.75)

    def test_alpha_below_two_rejected(self):
        spec = SystemSpec(drift=ZeroDrift(),
                          noise=StableNoiseSpec(alpha=1.5))
        with pytest.raises(UnsupportedError):
            grad_moments(spec, [0.1], 2.0, 0.25, 1.0, 64, seed=1)

    def test_t_must_be_a_node(self):
        with pytest.raises(ValueError):
            grad_moments(self.spec, [0.1], 2.0, 0.29, 1.0, 64, seed=1,
                         n_rk=16, n_sim=16)

    def test_by_eps_and_determinism(self):
        kw = dict(q=2.0, t=0.25, tau=1.0, n_paths=128, seed=9, n_rk=24,
                  n_sim=32)
        table = grad_moments(self.spec, [0.1, 0.05], **kw)
        again = grad_moments(self.spec, [0.1, 0.05], **kw)
        assert set(table.by_eps()) == {0.1, 0.05}
        for eps in (0.1, 0.05):
            assert table.by_eps()[eps].moment == again.by_eps()[eps].moment
        assert all(r.stderr > 0 for r in table.rows)
