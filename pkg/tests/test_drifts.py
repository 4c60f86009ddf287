"""Drift families, mollification, and the cutoff function."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kinetic_rbn.drift_library import (Accumulating, CustomDrift,
                                       LipschitzTest, MollifierSpec,
                                       MultiSingularity, PeanoPower,
                                       ZeroDrift, cutoff_chi, eval_F,
                                       grad_mollified, mollify)


def fd_gradient(model, t, x, h=1e-7):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = len(x)
    jac = np.empty((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        jac[:, j] = (model.evaluate(t, x + e) - model.evaluate(t, x - e)) \
            / (2.0 * h)
    return jac


class TestPeanoPower:
    def test_values(self):
        m = PeanoPower(beta=0.5)
        assert m.evaluate(0.0, [4.0])[0] == pytest.approx(2.0)
        assert m.evaluate(0.0, [0.0])[0] == 0.0
        # even in x - center
        assert m.evaluate(0.0, [-4.0])[0] == pytest.approx(2.0)

    def test_beta_range(self):
        with pytest.raises(ValueError):
            PeanoPower(beta=0.0)
        with pytest.raises(ValueError):
            PeanoPower(beta=1.2)

    def test_gradient_matches_fd_off_center(self):
        m = PeanoPower(beta=0.6, center=0.3)
        for x in (-1.0, 0.8, 2.5):
            np.testing.assert_allclose(m.gradient(0.0, [x]),
                                       fd_gradient(m, 0.0, [x]),
                                       rtol=1e-5)

    def test_gradient_masked_at_center(self):
        # almost-everywhere convention: the singular point reports 0
        m = PeanoPower(beta=0.5)
        assert m.gradient(0.0, [0.0])[0, 0] == 0.0

    def test_time_coefficient(self):
        m = PeanoPower(beta=0.5, a=lambda t: 2.0 + t)
        assert m.evaluate(1.0, [1.0])[0] == pytest.approx(3.0)

    def test_vector_direction(self):
        m = PeanoPower(beta=0.5, dim=2, direction=[0.0, 2.0])
        out = m.evaluate(0.0, [1.0, 0.0])
        np.testing.assert_allclose(out, [0.0, 1.0])  # direction normalized

    def test_batch_shape(self):
        m = PeanoPower(beta=0.5, dim=2)
        pts = np.random.default_rng(0).normal(size=(7, 2))
        assert m.evaluate(0.0, pts).shape == (7, 2)
        assert m.gradient(0.0, pts).shape == (7, 2, 2)


class TestAccumulating:
    def test_anchor_construction(self):
        m = Accumulating.with_power_gaps(beta=0.5, n_terms=100, first=1.0)
        gaps = np.diff(m.anchors)
        np.testing.assert_allclose(
            gaps, np.arange(1, 101, dtype=float) ** -2.0)
        assert m.limit_point == m.anchors[-1]

    def test_zero_outside_field(self):
        m = Accumulating(beta=0.5, anchors=[0.0, 1.0, 1.5])
        assert m.evaluate(0.0, [-0.3])[0] == 0.0
        assert m.evaluate(0.0, [2.0])[0] == 0.0

    def test_rise_and_fall(self):
        m = Accumulating(beta=0.5, anchors=[0.0, 1.0])
        assert m.evaluate(0.0, [0.25])[0] == pytest.approx(0.5)   # (x-a)^b
        assert m.evaluate(0.0, [0.75])[0] == pytest.approx(0.5)   # (b-x)^b
        assert m.evaluate(0.0, [0.0])[0] == 0.0

    def test_anchor_validation(self):
        with pytest.raises(ValueError):
            Accumulating(beta=0.5, anchors=[1.0, 1.0])
        with pytest.raises(ValueError):
            Accumulating(beta=0.5, anchors=[3.0])

    def test_gap_power_sums_diverge(self):
        # sum of gap^beta is the harmonic series for the power-gap law
        m = Accumulating.with_power_gaps(beta=0.5, n_terms=1000)
        s = np.sum(np.diff(m.anchors) ** 0.5)
        assert s == pytest.approx(np.sum(1.0 / np.arange(1, 1001)))


def test_multi_singularity_is_sum_of_parts():
    terms = [(1.0, 0.0, 0.5), (2.0, 1.0, 0.75)]
    m = MultiSingularity(terms=terms)
    xs = np.linspace(-2, 2, 11)[:, None]
    expected = (PeanoPower(beta=0.5).evaluate(0.0, xs)
                + PeanoPower(beta=0.75, a=2.0, center=1.0).evaluate(0.0, xs))
    np.testing.assert_allclose(m.evaluate(0.0, xs), expected)


def test_lipschitz_and_zero():
    A = np.array([[0.5, -1.0], [0.0, 2.0]])
    m = LipschitzTest(matrix=A, offset=[1.0, 0.0])
    np.testing.assert_allclose(m.evaluate(0.0, [1.0, 1.0]), A @ [1, 1] + [1, 0])
    np.testing.assert_allclose(m.gradient(0.0, [3.0, -2.0]), A)
    z = ZeroDrift(dim=2)
    assert np.all(z.evaluate(0.0, [1.0, 2.0]) == 0.0)
    assert np.all(z.gradient(0.0, [1.0, 2.0]) == 0.0)


def test_custom_drift_roundtrip():
    m = CustomDrift(evaluator=lambda t, x: np.sin(x), dim=1)
    assert m.evaluate(0.0, [0.5])[0] == pytest.approx(np.sin(0.5))
    with pytest.raises(NotImplementedError):
        m.gradient(0.0, [0.5])
    assert eval_F(m, 0.0, [0.5])[0] == pytest.approx(np.sin(0.5))


class TestMollification:
    def test_affine_reproduced_exactly(self):
        """Moment-corrected weights integrate affine drifts exactly, so
        mollification of a Lipschitz model is the model itself."""
        m = LipschitzTest(matrix=[[1.5]], offset=0.25)
        moll = MollifierSpec(eps=0.2)
        for x in (-1.0, 0.0, 2.0):
            assert mollify(m, moll, 0.0, [x])[0] == pytest.approx(
                m.evaluate(0.0, [x])[0], abs=1e-12)
            assert grad_mollified(m, moll, 0.0, [x])[0, 0] == pytest.approx(
                1.5, abs=1e-12)

    def test_converges_at_smooth_point(self):
        m = PeanoPower(beta=0.5)
        errs = [abs(mollify(m, MollifierSpec(eps=e), 0.0, [1.0])[0] - 1.0)
                for e in (0.2, 0.1, 0.05)]
        assert errs[0] > errs[-1]
        assert errs[-1] < 5e-3

    def test_mollified_gradient_bounded_at_center(self):
        m = PeanoPower(beta=0.5)
        g = grad_mollified(m, MollifierSpec(eps=0.1), 0.0, [0.0])
        assert np.all(np.isfinite(g))

    def test_batched(self):
        m = PeanoPower(beta=0.5, dim=2)
        moll = MollifierSpec(eps=0.1)
        pts = np.random.default_rng(1).normal(size=(5, 2))
        assert mollify(m, moll, 0.0, pts).shape == (5, 2)
        assert grad_mollified(m, moll, 0.0, pts).shape == (5, 2, 2)

    def test_eps_positive(self):
        with pytest.raises(ValueError):
            MollifierSpec(eps=0.0)


class TestCutoff:
    def test_plateau_and_tail(self):
        xs = np.array([0.0, 0.5, 1.0, 2.5, 3.0])
        out = cutoff_chi(1.0, xs[:, None])
        np.testing.assert_array_equal(out[[0, 1, 2]], 1.0)
        assert out[3] == 0.0 and out[4] == 0.0

    def test_ramp_strictly_inside_unit_interval(self):
        vals = cutoff_chi(1.0, np.linspace(1.05, 1.95, 9)[:, None])
        assert np.all((vals > 0.0) & (vals < 1.0))

    def test_scalar_matches_vector(self):
        xs = np.linspace(0.0, 3.0, 31)
        vec = cutoff_chi(1.0, xs[:, None])
        scal = np.array([cutoff_chi(1.0, x) for x in xs])
        np.testing.assert_array_equal(vec, scal)

    @given(m=st.floats(min_value=1.0, max_value=5.0),
           r1=st.floats(min_value=0.0, max_value=8.0),
           r2=st.floats(min_value=0.0, max_value=8.0))
    @settings(max_examples=60, deadline=None)
    def test_monotone_in_radius(self, m, r1, r2):
        lo, hi = sorted((r1, r2))
        assert cutoff_chi(m, lo) >= cutoff_chi(m, hi)
