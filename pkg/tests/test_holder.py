"""Discrete Holder-Zygmund seminorms and the interpolation inequality."""

import math

import numpy as np
import pytest

from kinetic_rbn.holder_analysis import (GridFunction, check_interpolation,
                                         zygmund_seminorm)


def sample_1d(func, num=801, lo=-1.0, hi=1.0):
    return GridFunction.sample(func, lo, hi, num)


def test_grid_function_validation():
    with pytest.raises(ValueError):
        GridFunction(values=np.zeros((2, 2, 2)), spacing=0.1)
    with pytest.raises(ValueError):
        GridFunction(values=np.zeros(4), spacing=0.0)
    g = GridFunction.sample(np.sin, -1.0, 1.0, 101)
    assert g.ndim == 1
    assert g.spacing == pytest.approx(0.02)


def test_affine_has_zero_second_differences():
    # beta in (1, 2) uses second differences, which kill affine functions
    f = sample_1d(lambda x: 3.0 * x - 0.5)
    res = zygmund_seminorm(f, beta=1.5)
    assert res.order == 2
    assert res.seminorm == pytest.approx(0.0, abs=1e-9)


def test_holder_power_seminorm():
    """|x|^(1/2) has 1/2-seminorm exactly 1: concavity gives
    sqrt(y) - sqrt(x) <= sqrt(y - x) on y > x >= 0 with equality at x = 0,
    and the fold at the origin adds nothing by symmetry."""
    f = sample_1d(lambda x: np.sqrt(np.abs(x)), num=2001)
    res = zygmund_seminorm(f, beta=0.5)
    assert res.order == 1
    assert res.seminorm == pytest.approx(1.0, abs=1e-12)


def test_seminorm_monotone_in_beta_for_small_h():
    f = sample_1d(lambda x: np.cos(3 * x))
    s1 = zygmund_seminorm(f, beta=0.4).seminorm
    s2 = zygmund_seminorm(f, beta=0.8).seminorm
    assert s1 > 0 and s2 > 0
    # steps h <= 1 make h^-beta increase with beta; sup over h keeps order
    assert s2 >= s1 * 0.5


def test_too_small_grid_raises():
    f = GridFunction(values=np.array([1.0, 2.0]), spacing=0.5)
    with pytest.raises(ValueError):
        zygmund_seminorm(f, beta=1.5)
    with pytest.raises(ValueError):
        zygmund_seminorm(f, beta=-1.0)


def test_2d_directions():
    g = GridFunction.sample(lambda x, y: np.sin(x) * np.cos(y),
                            [-1.0, -1.0], [1.0, 1.0], 101)
    res = zygmund_seminorm(g, beta=0.9)
    assert res.seminorm > 0
    aff = GridFunction.sample(lambda x, y: 2 * x - y, [-1.0, -1.0],
                              [1.0, 1.0], 51)
    assert zygmund_seminorm(aff, beta=1.2).seminorm == pytest.approx(
        0.0, abs=1e-9)


def test_interpolation_report():
    f = sample_1d(lambda x: np.sqrt(np.abs(x)), num=1001)
    rep = check_interpolation(f, s=0.0, r=0.5, t=1.0,
                              delta_list=[0.5, 0.25, 0.1])
    # argument order guard: s < r < t required
    assert rep.bounded
    assert len(rep.rows) == 3
    assert all(c >= 0.0 for _, c in rep.rows)
    assert rep.c_max == max(c for _, c in rep.rows)


def test_interpolation_validation():
    f = sample_1d(np.sin)
    with pytest.raises(ValueError):
        check_interpolation(f, s=0.5, r=0.2, t=0.1, delta_list=[1.5])
    with pytest.raises(ValueError):
        check_interpolation(f, s=0.0, r=0.5, t=1.0, delta_list=[1.5])
