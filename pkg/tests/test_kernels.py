"""Collision matrix and mollifier contracts."""

import numpy as np
import pytest

from landau_particles import (
    CollisionKernelSpec,
    Mollifier,
    kernel_matrix,
    mollifier_eval,
    mollifier_grad,
)

from helpers import midpoint_quadrature


def test_kernel_matrix_maxwell_2d():
    spec = CollisionKernelSpec(gamma=0.0, prefactor=1.0 / 16.0, dim=2)
    k = kernel_matrix(np.array([1.0, 0.0]), spec)
    assert np.allclose(k, np.array([[0.0, 0.0], [0.0, 1.0 / 16.0]]), atol=0)


def test_kernel_matrix_coulomb_3d():
    spec = CollisionKernelSpec(gamma=-3.0, prefactor=1.0 / (4.0 * np.pi), dim=3)
    k = kernel_matrix(np.array([2.0, 0.0, 0.0]), spec)
    expected = np.diag([0.0, 1.0, 1.0]) / (8.0 * np.pi)
    assert np.allclose(k, expected, rtol=1e-14, atol=0)


def test_kernel_matrix_null_space_and_psd():
    rng = np.random.default_rng(7)
    for dim, gamma in [(2, 0.0), (2, -3.0), (3, 0.0), (3, -3.0), (3, 1.0)]:
        spec = CollisionKernelSpec(gamma=gamma, prefactor=0.5, dim=dim)
        for _ in range(25):
            z = rng.normal(size=dim)
            k = kernel_matrix(z, spec)
            assert np.allclose(k, k.T, atol=0)
            # null space spanned by z
            assert np.linalg.norm(k @ z) <= 1e-12 * np.linalg.norm(k) * np.linalg.norm(z)
            x = rng.normal(size=dim)
            assert x @ k @ x >= -1e-14 * np.linalg.norm(k)


def test_kernel_matrix_zero_floor():
    spec = CollisionKernelSpec(gamma=-3.0, prefactor=1.0, dim=3)
    assert np.all(kernel_matrix(np.zeros(3), spec) == 0.0)
    assert np.all(kernel_matrix(np.full(3, 1e-13), spec) == 0.0)


def test_kernel_matrix_rejects_non_finite():
    spec = CollisionKernelSpec(gamma=0.0, prefactor=1.0, dim=2)
    with pytest.raises(ValueError):
        kernel_matrix(np.array([np.nan, 0.0]), spec)
    with pytest.raises(ValueError):
        kernel_matrix(np.array([np.inf, 0.0]), spec)


def test_kernel_spec_validation():
    with pytest.raises(ValueError):
        CollisionKernelSpec(gamma=0.0, prefactor=0.0, dim=2)
    with pytest.raises(ValueError):
        CollisionKernelSpec(gamma=0.0, prefactor=1.0, dim=4)


def test_mollifier_peak_and_decay_point():
    mol = Mollifier(eps=1.0, dim=2)
    assert mollifier_eval(np.zeros(2), mol) == pytest.approx(1.0 / (2.0 * np.pi), rel=1e-15)
    # |z|^2 = 2 eps gives the peak value times e^{-1}
    mol3 = Mollifier(eps=0.7, dim=3)
    z = np.array([np.sqrt(2.0 * 0.7), 0.0, 0.0])
    expected = (2.0 * np.pi * 0.7) ** (-1.5) * np.exp(-1.0)
    assert mollifier_eval(z, mol3) == pytest.approx(expected, rel=1e-14)


def test_mollifier_unit_mass_by_quadrature():
    for dim in (2, 3):
        eps = 0.31
        mol = Mollifier(eps=eps, dim=dim)
        half_width = 8.0 * np.sqrt(eps)
        n = 160 if dim == 2 else 90
        mass = midpoint_quadrature(lambda p: mollifier_eval(p, mol), half_width, n, dim)
        assert abs(mass - 1.0) < 1e-8


def test_mollifier_positive_and_radially_decreasing():
    mol = Mollifier(eps=0.2, dim=2)
    radii = np.linspace(0.0, 4.0, 100)
    vals = mollifier_eval(np.stack([radii, np.zeros_like(radii)], axis=-1), mol)
    assert np.all(vals > 0)
    assert np.all(np.diff(vals) < 0)


def test_mollifier_rejects_bad_eps():
    with pytest.raises(ValueError):
        Mollifier(eps=0.0, dim=2)
    with pytest.raises(ValueError):
        Mollifier(eps=-1.0, dim=3)


def test_mollifier_grad_zero_at_origin_and_odd():
    rng = np.random.default_rng(3)
    mol = Mollifier(eps=0.5, dim=3)
    assert np.all(mollifier_grad(np.zeros(3), mol) == 0.0)
    for _ in range(10):
        z = rng.normal(size=3)
        assert np.allclose(mollifier_grad(-z, mol), -mollifier_grad(z, mol), rtol=0, atol=0)


def test_mollifier_grad_matches_central_differences():
    rng = np.random.default_rng(11)
    for dim in (2, 3):
        mol = Mollifier(eps=0.37, dim=dim)
        step = 1e-5 * np.sqrt(mol.eps)
        for _ in range(20):
            z = rng.normal(size=dim) * np.sqrt(mol.eps) * 1.5
            grad = mollifier_grad(z, mol)
            for s in range(dim):
                ep = z.copy()
                em = z.copy()
                ep[s] += step
                em[s] -= step
                fd = (mollifier_eval(ep, mol) - mollifier_eval(em, mol)) / (2 * step)
                assert grad[s] == pytest.approx(fd, rel=1e-6, abs=1e-12)
