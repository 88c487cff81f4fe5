"""Electrostatics: linear Poisson and the Poisson-Boltzmann energy system.

The nonlinear system for ``(beta, phi)`` given a density ``n`` and an
energy ``E`` is::

    -Lap phi = 4 pi (n - exp(beta phi))
    3/(2 beta) + (1/8pi) int |grad phi|^2 = E

All spatial operators are spectral on the unit torus.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .phase_space import DistField, PhaseGrid, SpatialField, fft_x, ifft_x, moments

__all__ = [
    "SolvabilityError",
    "PBError",
    "EnergyPositivityError",
    "InternalConsistencyError",
    "PPState",
    "GateauxIn",
    "GateauxOut",
    "laplacian",
    "gradient_x",
    "field_energy",
    "solve_poisson",
    "solve_pb",
    "pb_residual",
    "solve_coupled",
    "pp_map",
    "gateaux_apply",
    "beta_dot",
    "energy_functional",
]


class SolvabilityError(ValueError):
    """Right-hand side violates the zero-mean condition."""


class PBError(RuntimeError):
    """Poisson-Boltzmann Newton or CG failure."""


class EnergyPositivityError(ValueError):
    """The energy available to the electrons is not positive."""


class InternalConsistencyError(AssertionError):
    """A quantity that is positive in exact arithmetic was not."""


def _k2(grid: PhaseGrid) -> np.ndarray:
    return np.sum((2.0 * np.pi * grid.wavenumbers_x()) ** 2, axis=0)


def _inner(grid: PhaseGrid, a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sum(a * b) * grid.dvol_x)


def _l2(grid: PhaseGrid, a: np.ndarray) -> float:
    return float(np.sqrt(np.sum(a * a) * grid.dvol_x))


def laplacian(grid: PhaseGrid, f: np.ndarray) -> np.ndarray:
    """Spectral Laplacian of an x-array."""
    return ifft_x(grid, -_k2(grid) * fft_x(grid, f))


def gradient_x(grid: PhaseGrid, f: np.ndarray) -> np.ndarray:
    """Spectral gradient, shape ``(dim_x,) + x_shape``."""
    fh = fft_x(grid, f)
    k = 2.0 * np.pi * grid.wavenumbers_x()
    out = np.empty(k.shape)
    n = grid.n_x
    for d in range(grid.dim_x):
        kd = k[d].copy()
        # Nyquist derivative set to zero for a real result.
        kd[np.abs(grid.wavenumbers_x()[d]) == n // 2] = 0.0
        out[d] = ifft_x(grid, 1j * kd * fh)
    return out


def field_energy(phi: SpatialField) -> float:
    """``(1/8pi) int |grad phi|^2``, evaluated in Fourier space."""
    g = phi.grid
    ph = fft_x(g, phi.values)
    n_tot = phi.values.size
    return float(np.sum(_k2(g) * np.abs(ph) ** 2) / n_tot ** 2 / (8.0 * np.pi))


def solve_poisson(rho: SpatialField, tol: float = 1e-10) -> SpatialField:
    """Zero-mean ``phi`` with ``-Lap phi = 4 pi rho``.

    Raises
    ------
    SolvabilityError
        If ``int rho dx`` exceeds ``tol`` (scaled by ``max(1, max|rho|)``).
    """
    g = rho.grid
    mean = float(np.mean(rho.values))
    if abs(mean) > tol * max(1.0, float(np.max(np.abs(rho.values)))):
        raise SolvabilityError(f"rho has nonzero mean {mean:.3e}")
    k2 = _k2(g)
    rh = fft_x(g, rho.values)
    with np.errstate(divide="ignore", invalid="ignore"):
        ph = np.where(k2 > 0, 4.0 * np.pi * rh / np.where(k2 > 0, k2, 1.0), 0.0)
    return SpatialField(g, ifft_x(g, ph))


def pb_residual(n: np.ndarray, phi: np.ndarray, beta: float, grid: PhaseGrid) -> np.ndarray:
    """``-Lap phi - 4 pi (n - exp(beta phi))``."""
    return -laplacian(grid, phi) - 4.0 * np.pi * (n - np.exp(beta * phi))


def _pcg_solve(grid: PhaseGrid, coef: np.ndarray, rhs: np.ndarray, precond_shift: float,
               rtol: float = 1e-13, maxiter: int = 500) -> np.ndarray:
    """Solve ``(-Lap + coef) x = rhs`` by CG with a spectral ``(-Lap + shift)^-1`` preconditioner."""
    shape = grid.x_shape
    size = int(np.prod(shape))
    k2 = _k2(grid)

    def mv(x):
        x = x.reshape(shape)
        return (-laplacian(grid, x) + coef * x).ravel()

    def pc(x):
        x = x.reshape(shape)
        return ifft_x(grid, fft_x(grid, x) / (k2 + precond_shift)).ravel()

    A = LinearOperator((size, size), matvec=mv, dtype=float)
    M = LinearOperator((size, size), matvec=pc, dtype=float)
    sol, info = cg(A, rhs.ravel(), rtol=rtol, atol=0.0, maxiter=maxiter, M=M)
    if info != 0:
        raise PBError(f"CG did not converge (info={info})")
    return sol.reshape(shape)


def _check_density(n: SpatialField) -> np.ndarray:
    vals = n.values
    if np.any(vals <= 0):
        raise ValueError("density must be strictly positive")
    return vals


def solve_pb(n: SpatialField, beta: float, tol: float = 1e-10, max_iter: int = 50,
             phi0: Optional[np.ndarray] = None, history: Optional[List[float]] = None
             ) -> SpatialField:
    """Solve ``-Lap phi = 4 pi (n - exp(beta phi))`` by damped Newton.

    Each Newton step solves ``(4 pi beta e^{beta phi} - Lap) dphi = -R`` by
    preconditioned CG.  Steps are halved (at most 6 times) while the
    residual norm grows, and iterates are clipped to the maximum-principle
    bracket ``ln(min n)/beta <= phi <= ln(max n)/beta``.

    Parameters
    ----------
    n : SpatialField
        Strictly positive density.
    beta : float
        Positive inverse temperature.
    tol : float
        Target ``L^2`` norm of the residual.
    history : list, optional
        Receives the residual norm of every iterate.
    """
    g = n.grid
    nv = _check_density(n)
    if not beta > 0:
        raise ValueError("beta must be positive")
    lo = np.log(nv.min()) / beta
    hi = np.log(nv.max()) / beta
    phi = np.zeros(g.x_shape) if phi0 is None else np.clip(np.array(phi0, float), lo, hi)
    R = pb_residual(nv, phi, beta, g)
    rn = _l2(g, R)
    if history is not None:
        history.append(rn)
    it = 0
    while rn >= tol:
        if it >= max_iter:
            raise PBError(f"Newton stagnated at residual {rn:.3e} after {max_iter} iterations")
        coef = 4.0 * np.pi * beta * np.exp(beta * phi)
        dphi = _pcg_solve(g, coef, -R, 4.0 * np.pi * beta)
        alpha = 1.0
        for _ in range(7):
            trial = np.clip(phi + alpha * dphi, lo, hi)
            Rt = pb_residual(nv, trial, beta, g)
            rt = _l2(g, Rt)
            if rt < rn:
                break
            alpha *= 0.5
        else:
            raise PBError(f"line search failed at residual {rn:.3e}")
        phi, R, rn = trial, Rt, rt
        it += 1
        if history is not None:
            history.append(rn)
    slack = 1e-12 * max(1.0, abs(np.log(nv).max()), abs(np.log(nv).min()))
    if beta * phi.min() < np.log(nv.min()) - slack or beta * phi.max() > np.log(nv.max()) + slack:
        raise InternalConsistencyError("maximum-principle bracket violated")
    return SpatialField(g, phi)


@dataclass
class PPState:
    """Solution ``(beta, phi)`` of the coupled system for energy ``E`` and density ``n``."""

    beta: float
    phi: SpatialField
    energy: float
    n: Optional[SpatialField] = None

    def constraint_residual(self) -> float:
        return abs(1.5 / self.beta + field_energy(self.phi) - self.energy)

    def elliptic_residual(self) -> float:
        if self.n is None:
            raise ValueError("density not stored")
        g = self.phi.grid
        return _l2(g, pb_residual(self.n.values, self.phi.values, self.beta, g))


def solve_coupled(n: SpatialField, E: float, tol: float = 1e-9, max_iter: int = 60) -> PPState:
    """Find ``(beta, phi)`` with ``phi = solve_pb(n, beta)`` and the energy constraint.

    ``g(beta) = 3/(2 beta) + field_energy(phi(beta)) - E`` is strictly
    decreasing with ``g' = -den`` (the ``beta_dot`` denominator).  The root
    lies in ``[3/(2E), (3/2 + nbar |ln n|_inf)/E]`` where ``nbar = int n``.
    Newton steps are accepted inside the current bracket; otherwise the
    bracket is bisected.
    """
    if not E > 0:
        raise EnergyPositivityError(f"energy must be positive, got {E}")
    g = n.grid
    nv = _check_density(n)
    lnmax = float(np.max(np.abs(np.log(nv))))
    b_lo = 1.5 / E
    if lnmax == 0.0:
        return PPState(b_lo, SpatialField(g, np.zeros(g.x_shape)), E, n)
    nbar = float(np.sum(nv) * g.dvol_x)
    b_hi = (1.5 + nbar * lnmax) / E
    beta = b_lo
    phi = solve_pb(n, beta)
    for _ in range(max_iter):
        gval = 1.5 / beta + field_energy(phi) - E
        if abs(gval) < tol:
            return PPState(beta, phi, E, n)
        if gval > 0:
            b_lo = beta
        else:
            b_hi = beta
        den = _denominator(PPState(beta, phi, E, n))
        step = beta + gval / den
        if not b_lo < step < b_hi:
            step = 0.5 * (b_lo + b_hi)
        beta = step
        phi = solve_pb(n, beta, phi0=phi.values)
    raise PBError(f"coupled solve did not converge in {max_iter} iterations (g = {gval:.3e})")


def pp_map(gamma: float, psi: SpatialField) -> Tuple[float, np.ndarray]:
    """``(3/(2 gamma) + (1/8pi) int |grad psi|^2, -Lap psi/(4 pi) + exp(gamma psi))``.

    The second component is scaled to a density so that its derivative
    pairs with a density rate in :func:`beta_dot`.
    """
    g = psi.grid
    first = 1.5 / gamma + field_energy(psi)
    second = -laplacian(g, psi.values) / (4.0 * np.pi) + np.exp(gamma * psi.values)
    return first, second


@dataclass
class GateauxIn:
    gamma_dot: float
    psi_dot: SpatialField


@dataclass
class GateauxOut:
    e_dot: float
    f_dot: SpatialField


def gateaux_apply(state: PPState, din: GateauxIn) -> GateauxOut:
    """Derivative of :func:`pp_map` at ``(state.beta, state.phi)``.

    ``e_dot = -3 gd/(2 gamma^2) + (1/4pi) int grad psi . grad pd`` and
    ``f_dot = (-Lap pd + 4 pi e^{gamma psi} (gd psi + gamma pd)) / (4 pi)``.
    """
    g = state.phi.grid
    gam, psi = state.beta, state.phi.values
    gd, pd = float(din.gamma_dot), din.psi_dot.values
    gp = gradient_x(g, psi)
    gpd = gradient_x(g, pd)
    e_dot = -1.5 * gd / gam ** 2 + _inner(g, gp, gpd) / (4.0 * np.pi)
    f2 = -laplacian(g, pd) + 4.0 * np.pi * np.exp(gam * psi) * (gd * psi + gam * pd)
    return GateauxOut(e_dot, SpatialField(g, f2 / (4.0 * np.pi)))


def _apply_L_inv(state: PPState, rhs: np.ndarray) -> np.ndarray:
    """``(gamma e^{gamma psi} - Lap/4pi)^-1 rhs`` via the Newton CG."""
    g = state.phi.grid
    gam = state.beta
    coef = 4.0 * np.pi * gam * np.exp(gam * state.phi.values)
    return _pcg_solve(g, coef, 4.0 * np.pi * rhs, 4.0 * np.pi * gam)


def _denominator(state: PPState) -> float:
    g = state.phi.grid
    gam, psi = state.beta, state.phi.values
    base = 1.5 / gam ** 2
    if not np.any(psi):
        return base
    lap = laplacian(g, psi)
    w = _apply_L_inv(state, np.exp(gam * psi) * psi)
    den = base - _inner(g, lap, w) / (4.0 * np.pi)
    if den < base - 1e-12 * max(1.0, base):
        raise InternalConsistencyError(
            f"beta_dot denominator {den:.6e} below 3/(2 beta^2) = {base:.6e}")
    return den


def beta_dot(state: PPState, dE_dt: float, dn_dt: SpatialField) -> float:
    """Rate of change of ``beta`` along a path ``(n(t), E(t))``.

    ``-(E' + (1/4pi) <Lap psi, L^-1 n'>) / (3/(2 gamma^2) - (1/4pi) <Lap psi, L^-1 (e^{gamma psi} psi)>)``
    with ``L = gamma e^{gamma psi} - Lap/4pi``.
    """
    g = state.phi.grid
    psi = state.phi.values
    den = _denominator(state)
    num = float(dE_dt)
    if np.any(psi) and np.any(dn_dt.values):
        num += _inner(g, laplacian(g, psi), _apply_L_inv(state, dn_dt.values)) / (4.0 * np.pi)
    return -num / den


def energy_functional(F: DistField, beta: float, phi: SpatialField) -> float:
    """``3/(2 beta) + int int |v|^2/2 F + (1/8pi) int |grad phi|^2``."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    _, _, ke = moments(F)
    return 1.5 / beta + ke + field_energy(phi)
