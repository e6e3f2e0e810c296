"""Shared independent oracles for the test suite.

Everything here is deliberately written from the mathematical definitions,
not by calling the library code it is used to check: midpoint quadrature on
fine tensor grids, high-order mixed finite differences with Richardson
extrapolation (in extended precision), and naive pairwise summations.
"""

import itertools
import math

import numpy as np


def midpoint_grid(half_width, n, dim):
    """Cell midpoints of [-L, L]^dim as (n^dim, dim) plus the cell volume."""
    h = 2.0 * half_width / n
    axis = -half_width + (np.arange(n) + 0.5) * h
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    pts = np.stack([m.reshape(-1) for m in mesh], axis=-1)
    return pts, h**dim


def midpoint_quadrature(func, half_width, n, dim):
    """Midpoint-rule integral of func over [-L, L]^dim."""
    pts, vol = midpoint_grid(half_width, n, dim)
    return float(np.sum(func(pts)) * vol)


def central_stencil(m):
    """Offsets and coefficients of the symmetric difference for the m-th derivative.

    delta_h^m f(x) = sum_i (-1)^i C(m, i) f(x + (m/2 - i) h); offsets are
    half-integers for odd m. Error is O(h^2).
    """
    return [(m / 2.0 - i, (-1.0) ** i * math.comb(m, i)) for i in range(m + 1)]


def mixed_derivative(func, x0, orders, base_step, levels=4):
    """D^k func(x0) for the multi-index k=orders, via tensor-product central
    differences Richardson-extrapolated in the shared step (error O(h^{2*levels})).

    func must accept a 1-D numpy array (kept in long double by the caller's
    implementation) and return a scalar.
    """
    x0 = np.asarray(x0, dtype=np.longdouble)
    d = len(x0)
    total_order = int(sum(orders))
    stencils = [central_stencil(int(m)) for m in orders]

    def fd(h):
        acc = np.longdouble(0.0)
        for combo in itertools.product(*stencils):
            point = x0.copy()
            coeff = np.longdouble(1.0)
            for s in range(d):
                off, c = combo[s]
                point[s] = point[s] + np.longdouble(off) * h
                coeff *= np.longdouble(c)
            acc += coeff * func(point)
        return acc / h**total_order

    h = np.longdouble(base_step)
    table = [fd(h / (2**j)) for j in range(levels)]
    for lev in range(1, levels):
        fac = np.longdouble(4.0**lev)
        table = [
            (fac * table[j + 1] - table[j]) / (fac - 1.0)
            for j in range(len(table) - 1)
        ]
    return float(table[0])


def taylor_coefficient(func, x0, orders, base_step, levels=4):
    """(1/k!) D^k func(x0) with k! the product of component factorials."""
    fact = 1.0
    for m in orders:
        fact *= math.factorial(int(m))
    return mixed_derivative(func, x0, orders, base_step, levels) / fact


def gaussian_longdouble(eps, dim):
    """psi_eps as a long-double scalar function of the offset vector."""
    norm = (np.longdouble(2.0) * np.longdouble(np.pi) * np.longdouble(eps)) ** (
        -np.longdouble(dim) / 2.0
    )

    def f(z):
        z = np.asarray(z, dtype=np.longdouble)
        return norm * np.exp(-(z @ z) / (2.0 * np.longdouble(eps)))

    return f


def collision_entry_longdouble(gamma, prefactor, r, s):
    """A_rs(z) = B |z|^gamma (|z|^2 delta_rs - z_r z_s) in long double."""

    def f(z):
        z = np.asarray(z, dtype=np.longdouble)
        r2 = z @ z
        base = np.longdouble(prefactor) * r2 ** (np.longdouble(gamma) / 2.0)
        if r == s:
            return base * (r2 - z[r] * z[r])
        return -base * (z[r] * z[s])

    return f


def naive_velocity_field(v, w, f, gamma, prefactor, z_floor=1e-12):
    """Plain O(N^2) double loop for U_i = -sum_j w_j A(v_i-v_j)(F_i-F_j)."""
    n, d = v.shape
    out = np.zeros((n, d))
    for i in range(n):
        for j in range(n):
            z = v[i] - v[j]
            r2 = float(z @ z)
            if r2 <= z_floor * z_floor:
                continue
            a = prefactor * r2 ** (gamma / 2.0) * (r2 * np.eye(d) - np.outer(z, z))
            out[i] -= w[j] * (a @ (f[i] - f[j]))
    return out


def naive_dissipation(v, w, f, gamma, prefactor, z_floor=1e-12):
    """Plain O(N^2) quadratic form 0.5 sum w_i w_j dF . A dF."""
    n, d = v.shape
    total = 0.0
    for i in range(n):
        for j in range(n):
            z = v[i] - v[j]
            r2 = float(z @ z)
            if r2 <= z_floor * z_floor:
                continue
            a = prefactor * r2 ** (gamma / 2.0) * (r2 * np.eye(d) - np.outer(z, z))
            df = f[i] - f[j]
            total += w[i] * w[j] * float(df @ a @ df)
    return 0.5 * total
