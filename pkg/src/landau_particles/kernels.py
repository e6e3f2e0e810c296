"""Collision matrix A(z) and Gaussian mollifier evaluations.

The collision matrix is A(z) = B |z|^gamma (|z|^2 I - z otimes z): symmetric,
positive semidefinite, with null space spanned by z. gamma = 0 is the Maxwell
molecule case (polynomial entries), gamma = -3 in 3D the Coulomb case. The
mollifier is the isotropic Gaussian of variance eps used to regularize the
entropy functional; everything else in the solver composes these two kernels.
"""

from dataclasses import dataclass

import numpy as np

# Pairs closer than this are treated as coincident: A(z) is defined as the zero
# matrix there. For gamma < 0 the matrix diverges as z -> 0, but in the particle
# system the i = j term multiplies a vanishing bracket, and the conservation
# proofs only need symmetry and PSD, both preserved by the zero convention.
Z_FLOOR = 1e-12


@dataclass(frozen=True)
class CollisionKernelSpec:
    """Exponent gamma and prefactor B of A(z) = B |z|^gamma (|z|^2 I - z z^T)."""

    gamma: float
    prefactor: float
    dim: int

    def __post_init__(self):
        if not np.isfinite(self.gamma):
            raise ValueError(f"gamma must be finite, got {self.gamma}")
        if not (np.isfinite(self.prefactor) and self.prefactor > 0):
            raise ValueError(f"prefactor must be positive, got {self.prefactor}")
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")


@dataclass(frozen=True)
class Mollifier:
    """Isotropic Gaussian psi_eps(z) = (2 pi eps)^(-d/2) exp(-|z|^2 / (2 eps))."""

    eps: float
    dim: int

    def __post_init__(self):
        if not (np.isfinite(self.eps) and self.eps > 0):
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")

    @property
    def norm_const(self):
        """Peak value (2 pi eps)^(-d/2)."""
        return (2.0 * np.pi * self.eps) ** (-0.5 * self.dim)


def kernel_matrix(z, spec):
    """Evaluate A(z) = B |z|^gamma (|z|^2 I - z z^T) for a single point z.

    Returns the zero matrix for |z| <= Z_FLOOR. Raises ValueError on
    non-finite input components.
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (spec.dim,):
        raise ValueError(f"z must have shape ({spec.dim},), got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("z has non-finite components")
    r2 = float(z @ z)
    if r2 <= Z_FLOOR * Z_FLOOR:
        return np.zeros((spec.dim, spec.dim))
    scale = spec.prefactor * r2 ** (0.5 * spec.gamma)
    return scale * (r2 * np.eye(spec.dim) - np.outer(z, z))


def mollifier_eval(z, mol):
    """psi_eps at one or many offsets; z has shape (d,) or (..., d)."""
    z = np.asarray(z, dtype=float)
    r2 = np.sum(z * z, axis=-1)
    return mol.norm_const * np.exp(-r2 / (2.0 * mol.eps))


def mollifier_grad(z, mol):
    """Gradient of psi_eps: -(z / eps) psi_eps(z); odd in z."""
    z = np.asarray(z, dtype=float)
    val = mollifier_eval(z, mol)
    return -(z / mol.eps) * val[..., None]
