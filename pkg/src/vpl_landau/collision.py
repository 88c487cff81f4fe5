"""Landau collision operator in divergence form, ``Q = Q_D + Q_T``.

``Q(G, F) = div_v J`` with flux ``J_j = A_ij d_i F - b_j F`` where
``A = Phi * G`` and ``b_j = d_i Phi_ij * G``.

Discretization
--------------
``D`` is a centered finite difference on the velocity midpoints: the
fourth-order five-point stencil in the interior, the three-point centered
stencil one node in from each face, and second-order one-sided stencils on
the faces.  Every row is exact on quadratics.  The divergence is
``div = -D^T``, which is a zero-flux closure at the box faces: sums of
``div J`` vanish identically (mass) and ``sum psi div J = -sum (D psi) J``.

For ``Q(F, F)`` the coefficients come from the lattice kernel table and
``b = Phi * (D G)``.  Then ``D v = 1`` and ``D |v|^2 = 2 v`` hold exactly,
the lattice kernel satisfies ``Phi(z) z = 0`` at every offset, and the
discrete momentum and energy moments of ``Q(F, F)`` vanish to round-off.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .landau_kernel import KernelTable, convolve_phi, kernel_table
from .phase_space import CoeffField, DistField, GridError

__all__ = [
    "derivative_matrix",
    "d_v",
    "d_v_transpose",
    "grad_v",
    "divergence_v",
    "collision_coefficients",
    "CollisionWorkspace",
    "q_diffusion",
    "q_transport",
    "q_full",
    "collision_energy_moment",
    "explicit_dt_limit",
]


@functools.lru_cache(maxsize=16)
def _dmat(n: int, h: float) -> np.ndarray:
    M = np.zeros((n, n))
    for k in range(n):
        if 2 <= k <= n - 3:
            M[k, k - 2:k + 3] = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / (12.0 * h)
        elif 1 <= k <= n - 2:
            M[k, k - 1:k + 2] = np.array([-1.0, 0.0, 1.0]) / (2.0 * h)
        elif k == 0:
            M[0, :3] = np.array([-3.0, 4.0, -1.0]) / (2.0 * h)
        else:
            M[-1, -3:] = np.array([1.0, -4.0, 3.0]) / (2.0 * h)
    M.flags.writeable = False
    return M


def derivative_matrix(n: int, h: float) -> np.ndarray:
    """Dense 1D velocity derivative matrix ``D`` (read-only)."""
    return _dmat(int(n), float(h))


def _apply_along(M: np.ndarray, a: np.ndarray, axis: int) -> np.ndarray:
    ax = axis - 3
    moved = np.moveaxis(a, ax, -1)
    return np.moveaxis(moved @ M.T, -1, ax)


def d_v(F: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Derivative of ``F`` along velocity component ``axis`` (0, 1 or 2)."""
    return _apply_along(_dmat(F.shape[-1], float(h)), F, axis)


def d_v_transpose(J: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Apply ``D^T`` along velocity component ``axis``."""
    return _apply_along(_dmat(J.shape[-1], float(h)).T, J, axis)


def grad_v(F: np.ndarray, h: float) -> np.ndarray:
    """Discrete velocity gradient, shape ``(3,) + F.shape``."""
    return np.stack([d_v(F, i, h) for i in range(3)])


def divergence_v(J: np.ndarray, h: float) -> np.ndarray:
    """Zero-flux discrete divergence ``-sum_j D_j^T J_j``."""
    return -sum(d_v_transpose(J[j], j, h) for j in range(3))


def collision_coefficients(G: DistField, table: Optional[KernelTable] = None) -> CoeffField:
    """Conservative coefficients: lattice ``Phi * G`` and ``Phi * (D G)``."""
    if table is None:
        table = kernel_table(G.grid, "lattice")
    dG = grad_v(G.values, G.grid.dv)
    return convolve_phi(G, table, vec_mode="discrete", dG=dG)


def _check(coeff: CoeffField, F: DistField) -> None:
    coeff.grid.check_same(F.grid)
    fs = coeff.mat.shape[2:]
    if fs != F.values.shape and fs != F.values.shape[-3:]:
        raise GridError(f"coefficient shape {fs} incompatible with F {F.values.shape}")


def q_diffusion(coeff: CoeffField, F: DistField) -> DistField:
    """``Q_D = div(mat grad F)`` in flux form with zero flux at the box faces."""
    _check(coeff, F)
    h = F.grid.dv
    dF = grad_v(F.values, h)
    J = np.einsum("ij...,i...->j...", coeff.mat, dF)
    return DistField(F.grid, divergence_v(J, h))


def q_transport(coeff: CoeffField, F: DistField) -> DistField:
    """``Q_T = -div(vec F)`` in flux form with zero flux at the box faces."""
    _check(coeff, F)
    J = -coeff.vec * F.values
    return DistField(F.grid, divergence_v(J, F.grid.dv))


@dataclass
class CollisionWorkspace:
    """Coefficients for one collision partner ``G`` plus gradient scratch.

    One workspace per worker; :meth:`apply` overwrites ``grad_F``.
    """

    coeff: CoeffField
    grad_F: Optional[np.ndarray] = None

    @classmethod
    def for_partner(cls, G: DistField, table: Optional[KernelTable] = None):
        return cls(collision_coefficients(G, table))

    def flux(self, F: DistField) -> np.ndarray:
        _check(self.coeff, F)
        self.grad_F = grad_v(F.values, F.grid.dv)
        J = np.einsum("ij...,i...->j...", self.coeff.mat, self.grad_F)
        return J - self.coeff.vec * F.values

    def apply(self, F: DistField) -> DistField:
        """``Q(G, F)`` for the stored partner ``G``."""
        return DistField(F.grid, divergence_v(self.flux(F), F.grid.dv))


def q_full(G: DistField, F: DistField, table: Optional[KernelTable] = None) -> DistField:
    """``Q(G, F) = Q_D + Q_T`` with conservative coefficients from ``G``."""
    G.grid.check_same(F.grid)
    return CollisionWorkspace.for_partner(G, table).apply(F)


def collision_energy_moment(G: DistField, F: DistField,
                            table: Optional[KernelTable] = None) -> float:
    """Weak-form kinetic-energy exchange ``int (tr(Phi*G) + 2 v_j (d_i Phi_ij * G)) F``.

    Coefficients come from the spectral table with the analytic divergence
    kernel, so this is a quadrature independent of the finite differences
    inside :func:`q_full`.  The result is x-integrated for x-dependent input.
    """
    grid = G.grid
    grid.check_same(F.grid)
    coeff = convolve_phi(G, table)
    V = grid.velocity()
    tr = coeff.mat[0, 0] + coeff.mat[1, 1] + coeff.mat[2, 2]
    vb = np.einsum("j...,j...->...", V.reshape((3,) + (1,) * (coeff.vec.ndim - 4) + grid.v_shape),
                   coeff.vec)
    dens = (tr + 2.0 * vb) * F.values
    total = float(np.sum(dens) * grid.dvol_v)
    if dens.ndim > 3:
        total *= grid.dvol_x
    return total


def explicit_dt_limit(coeff: CoeffField) -> float:
    """Forward-Euler stability bound for the diffusion part.

    Uses ``lambda_max(-Q_D) <= 3 a rho(D^T D)`` with ``a`` a Gershgorin
    bound on the pointwise eigenvalues of ``mat``.
    """
    n = coeff.mat.shape[-1]
    M = derivative_matrix(n, coeff.grid.dv)
    rho = float(np.linalg.eigvalsh(M.T @ M).max())
    amax = float(np.abs(coeff.mat).sum(axis=1).max(initial=0.0))
    if amax <= 0:
        return np.inf
    return 2.0 / (3.0 * amax * rho)
