"""BKW solutions and the non-analytic initial conditions."""

import numpy as np
import pytest

from landau_particles import bimaxwellian_init, bkw_eval, bkw_params, rosenbluth_init
from landau_particles.exact import bkw_time_derivative

from helpers import midpoint_grid, midpoint_quadrature


def test_bkw_2d_initial_closed_form():
    p = bkw_params(2)  # C = 1/2, B = 1/16; K(0) = 1/2
    rng = np.random.default_rng(0)
    v = rng.normal(size=(50, 2))
    r2 = np.sum(v * v, axis=-1)
    expected = r2 * np.exp(-r2) / np.pi
    assert np.allclose(bkw_eval(p, 0.0, v), expected, rtol=1e-13)
    assert bkw_eval(p, 0.0, np.zeros(2)) == 0.0


def test_bkw_2d_long_time_limit_is_maxwellian():
    p = bkw_params(2)
    t = 400.0  # K -> 1 to machine precision
    assert bkw_eval(p, t, np.zeros(2)) == pytest.approx(1.0 / (2.0 * np.pi), rel=1e-12)
    v = np.array([1.3, -0.2])
    expected = np.exp(-float(v @ v) / 2.0) / (2.0 * np.pi)
    assert bkw_eval(p, t, v) == pytest.approx(expected, rel=1e-12)


def test_bkw_rejects_out_of_range_times():
    p = bkw_params(2)  # K(t) < 1/2 for t < 0
    with pytest.raises(ValueError):
        bkw_eval(p, -1.0, np.zeros(2))
    p3 = bkw_params(3)  # K(t) < 3/5 for t < log(5/2)*6
    with pytest.raises(ValueError):
        bkw_eval(p3, 0.1, np.zeros(3))


@pytest.mark.parametrize("dim,times", [(2, [0.0, 1.0, 2.5, 4.0, 5.0]), (3, [5.5, 5.75, 6.0, 8.0, 12.0])])
def test_bkw_moments_mass_momentum_energy(dim, times):
    p = bkw_params(dim)
    half_width = 9.0
    n = 160 if dim == 2 else 60
    pts, vol = midpoint_grid(half_width, n, dim)
    r2 = np.sum(pts * pts, axis=-1)
    for t in times:
        f = bkw_eval(p, t, pts)
        assert abs(np.sum(f) * vol - 1.0) < 1e-6
        assert np.all(np.abs(pts.T @ f) * vol < 1e-9)
        assert abs(np.sum(r2 * f) * vol - dim) < 1e-6


@pytest.mark.parametrize("dim,t", [(2, 1.0), (3, 5.8)])
def test_bkw_time_derivative_residual(dim, t):
    # central differences of the density converge at second order to the
    # analytic time derivative
    p = bkw_params(dim)
    rng = np.random.default_rng(5)
    v = rng.normal(size=(40, dim))
    exact = bkw_time_derivative(p, t, v)
    errs = []
    for delta in (1e-2, 5e-3):
        fd = (bkw_eval(p, t + delta, v) - bkw_eval(p, t - delta, v)) / (2 * delta)
        errs.append(np.max(np.abs(fd - exact)))
    ratio = errs[0] / errs[1]
    assert 3.2 < ratio < 4.8
    assert errs[1] < 1e-5


def test_bimaxwellian_values_and_moments():
    u1 = np.array([-2.0, 1.0])
    u2 = np.array([0.0, -1.0])
    # at a bump center the other bump contributes exp(-|u1-u2|^2/2) = exp(-4)
    expected = (1.0 + np.exp(-4.0)) / (4.0 * np.pi)
    assert bimaxwellian_init(u1) == pytest.approx(expected, rel=1e-14)
    mass = midpoint_quadrature(bimaxwellian_init, 10.0, 400, 2)
    assert abs(mass - 1.0) < 1e-8
    pts, vol = midpoint_grid(10.0, 400, 2)
    f = bimaxwellian_init(pts)
    mean = (pts.T @ f) * vol
    assert np.allclose(mean, [-1.0, 0.0], atol=1e-8)


def test_rosenbluth_shell_values_and_symmetry():
    assert rosenbluth_init(np.array([0.3, 0.0, 0.0])) == pytest.approx(0.01, rel=1e-15)
    assert rosenbluth_init(np.zeros(3)) == pytest.approx(0.01 * np.exp(-10.0), rel=1e-13)
    rng = np.random.default_rng(9)
    for _ in range(10):
        v = rng.normal(size=3)
        # random rotation via QR
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        assert rosenbluth_init(q @ v) == pytest.approx(rosenbluth_init(v), rel=1e-14)
