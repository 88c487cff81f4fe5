"""Time integration: linearized step, Picard iteration and the drivers.

``linear_step`` advances ``d_t F + v . grad_x F - grad_x psi . grad_v F = Q(G, F)``
with lagged ``G`` and ``psi`` by Strang splitting::

    X(dt/2) V(dt/2) C(dt) V(dt/2) X(dt/2)  [then R(dt) if lambda > 0]

``X`` is exact spectral advection in x, ``V`` a flux-limited second-order
upwind scheme in v with zero flux through the box faces, ``C`` the collision step (forward Euler, or backward
Euler on the diffusion part solved by CG) and ``R`` a backward-Euler
``lambda Lap_{x,v}`` substep.

Species signs: the ion force is ``+E`` (``psi = phi``), the electron force
``-E`` (``psi = -phi``); the massless-electron ion equation uses
``psi = phi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.fft as sfft
from scipy.sparse.linalg import LinearOperator, cg

from .collision import CollisionWorkspace, divergence_v, grad_v
from .norms import NormParams, norm_report
from .phase_space import (DistField, PhaseGrid, SpatialField, fft_x, get_workers, ifft_x,
                          moments, warn_boundary)
from .poisson import (EnergyPositivityError, PPState, energy_functional, gradient_x,
                      solve_coupled, solve_pb, solve_poisson)

__all__ = [
    "StepConfig",
    "PicardConfig",
    "PlasmaState",
    "CFLError",
    "CGError",
    "BlowupError",
    "PicardError",
    "advect_x",
    "advect_v",
    "collide",
    "regularize",
    "linear_step",
    "Coupling",
    "self_coupling",
    "two_species_coupling",
    "massless_coupling",
    "PicardLog",
    "picard_solve",
    "step_two_species",
    "step_massless",
    "step_homogeneous",
    "advance",
    "ComponentSpec",
    "InitialSpec",
    "make_initial",
    "inv_density_sup",
]

VARIANTS = ("two_species", "massless", "landau_homogeneous")


class CFLError(ValueError):
    """Time step violates the advection CFL bound."""


class CGError(RuntimeError):
    """Implicit collision solve did not converge."""


class BlowupError(RuntimeError):
    """A continuation quantity crossed its guard threshold."""


class PicardError(RuntimeError):
    """Picard iteration did not converge; ``log`` holds the history."""

    def __init__(self, msg, log=None):
        super().__init__(msg)
        self.log = log


@dataclass(frozen=True)
class StepConfig:
    """Parameters of one linearized step.

    ``lam`` is the regularization coefficient ``lambda >= 0``.
    """

    dt: float
    lam: float = 0.0
    transport_scheme: str = "spectral_x_upwind_v"
    collision_mode: str = "explicit"
    cfl_safety: float = 0.9
    cg_tol: float = 1e-12
    cg_maxiter: int = 1000

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.lam >= 0:
            raise ValueError("lambda must be nonnegative")
        if self.transport_scheme != "spectral_x_upwind_v":
            raise ValueError(f"unknown transport scheme {self.transport_scheme!r}")
        if self.collision_mode not in ("explicit", "implicit_v"):
            raise ValueError(f"unknown collision mode {self.collision_mode!r}")
        if not 0 < self.cfl_safety < 1:
            raise ValueError("cfl_safety must lie in (0, 1)")


@dataclass(frozen=True)
class PicardConfig:
    """Picard iteration controls; ``horizon`` is the final time ``T``."""

    max_iter: int = 10
    tol_e_prime: float = 1e-10
    horizon: float = 0.05
    n_checkpoints: int = 8
    norm_params: NormParams = NormParams()
    raise_on_max_iter: bool = True

    def __post_init__(self):
        if self.max_iter < 1 or self.n_checkpoints < 1:
            raise ValueError("max_iter and n_checkpoints must be positive")
        if not self.tol_e_prime > 0 or not self.horizon > 0:
            raise ValueError("tolerance and horizon must be positive")


@dataclass
class PlasmaState:
    """Plasma state for one of the three variants.

    ``two_species``: ``F_plus``, ``F_minus``, ``phi``.
    ``massless``: ``F_plus``, ``beta``, ``phi`` and the conserved ``E0``.
    ``landau_homogeneous``: velocity-only ``F_plus``.
    """

    variant: str
    F_plus: DistField
    phi: Optional[SpatialField] = None
    F_minus: Optional[DistField] = None
    beta: Optional[float] = None
    E0: Optional[float] = None
    t: float = 0.0

    @property
    def grid(self) -> PhaseGrid:
        return self.F_plus.grid

    def species(self) -> Tuple[DistField, ...]:
        if self.F_minus is None:
            return (self.F_plus,)
        return (self.F_plus, self.F_minus)


# --- transport --------------------------------------------------------------

def advect_x(F: np.ndarray, grid: PhaseGrid, dt: float) -> np.ndarray:
    """Exact spectral solution of ``d_t F + v . grad_x F = 0`` over ``dt``."""
    if F.ndim == 3:
        return F
    Fh = fft_x(grid, F)
    v = grid.v_nodes
    k = sfft.fftfreq(grid.n_x, d=1.0 / grid.n_x)
    for d in range(grid.dim_x):
        kshape = [1] * F.ndim
        kshape[d] = grid.n_x
        vshape = [1] * F.ndim
        vshape[grid.dim_x + d] = grid.n_v
        kd = k.reshape(kshape)
        # Nyquist mode kept real by a symmetric cosine factor.
        ph = np.where(np.abs(kd) == grid.n_x // 2, np.cos(2 * np.pi * kd * v.reshape(vshape) * dt),
                      np.exp(-2j * np.pi * kd * v.reshape(vshape) * dt))
        Fh = Fh * ph
    return ifft_x(grid, Fh)


def _van_leer(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    p = num * den
    q = den * den + np.abs(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(q > 0, (p + np.abs(p)) / np.where(q > 0, q, 1.0), 0.0)
    return out


def _upwind_axis(F: np.ndarray, a: np.ndarray, dt: float, h: float, axis: int) -> np.ndarray:
    """One flux-limited upwind update of ``d_t F + a d_v F = 0`` along ``axis``."""
    ax = F.ndim - 3 + axis
    Fm = np.moveaxis(F, ax, -1)
    am = np.moveaxis(np.broadcast_to(a, F.shape), ax, -1)[..., :1]
    n = Fm.shape[-1]
    P = np.zeros(Fm.shape[:-1] + (n + 4,))
    P[..., 2:-2] = Fm
    # Faces between padded cells j and j+1 for j = 1 .. n+1 (cells 2..n+1 are real).
    Fi = P[..., 1:n + 2]
    Fip = P[..., 2:n + 3]
    Fim = P[..., 0:n + 1]
    Fipp = P[..., 3:n + 4]
    dF = Fip - Fi
    nu = am * dt / h
    pos = am * (Fi + 0.5 * (1.0 - nu) * _van_leer(Fi - Fim, dF) * dF)
    neg = am * (Fip - 0.5 * (1.0 + nu) * _van_leer(Fipp - Fip, dF) * dF)
    flux = np.where(am >= 0, pos, neg)
    # Zero flux through the box faces keeps mass exact.
    flux[..., 0] = 0.0
    flux[..., -1] = 0.0
    out = Fm - (dt / h) * (flux[..., 1:] - flux[..., :-1])
    return np.moveaxis(out, -1, ax)


def force(psi: Optional[SpatialField]) -> Optional[np.ndarray]:
    """Characteristic speed in v, ``-grad_x psi``, shape ``(dim_x,) + x_shape``."""
    if psi is None or not np.any(psi.values):
        return None
    return -gradient_x(psi.grid, psi.values)


def advect_v(F: np.ndarray, grid: PhaseGrid, acc: Optional[np.ndarray], dt: float) -> np.ndarray:
    """``d_t F + acc . grad_v F = 0`` by dimension splitting over the forced axes."""
    if acc is None:
        return F
    out = F
    for d in range(grid.dim_x):
        a = acc[d].reshape(grid.x_shape + (1, 1, 1))
        if np.any(a):
            out = _upwind_axis(out, a, dt, grid.dv, d)
    return out


# --- collision and regularization -------------------------------------------

def collide(F: np.ndarray, ws: Optional[CollisionWorkspace], grid: PhaseGrid, cfg: StepConfig,
            dt: Optional[float] = None) -> np.ndarray:
    """Collision substep with coefficients frozen in ``ws``."""
    if ws is None:
        return F
    dt = cfg.dt if dt is None else dt
    fld = DistField(grid, F)
    if cfg.collision_mode == "explicit":
        return F + dt * ws.apply(fld).values
    h = grid.dv
    mat = ws.coeff.mat
    rhs = F + dt * divergence_v(-ws.coeff.vec * F, h)
    shape = F.shape

    def mv(x):
        x = x.reshape(shape)
        J = np.einsum("ij...,i...->j...", mat, grad_v(x, h))
        return (x - dt * divergence_v(J, h)).ravel()

    A = LinearOperator((F.size, F.size), matvec=mv, dtype=float)
    sol, info = cg(A, rhs.ravel(), x0=F.ravel(), rtol=cfg.cg_tol, atol=0.0,
                   maxiter=cfg.cg_maxiter)
    if info != 0:
        raise CGError(f"implicit collision CG did not converge (info={info})")
    return sol.reshape(shape)


def regularize(F: np.ndarray, grid: PhaseGrid, lam: float, dt: float) -> np.ndarray:
    """Backward Euler for ``d_t F = lam Lap_{x,v} F``.

    Periodic spectral Laplacian in x; the three-point Neumann Laplacian in v,
    diagonalized by the type-II DCT on the midpoint grid.
    """
    if lam == 0:
        return F
    n, h = grid.n_v, grid.dv
    ev1 = (2.0 - 2.0 * np.cos(np.pi * np.arange(n) / n)) / h ** 2
    ev = ev1[:, None, None] + ev1[None, :, None] + ev1[None, None, :]
    w = get_workers()
    Fh = sfft.dctn(F, type=2, axes=(-3, -2, -1), norm="ortho", workers=w)
    if F.ndim > 3:
        Fh = fft_x(grid, Fh)
        k2 = np.sum((2 * np.pi * grid.wavenumbers_x()) ** 2, axis=0)
        ev = k2.reshape(grid.x_shape + (1, 1, 1)) + ev
        Fh = ifft_x(grid, Fh / (1.0 + dt * lam * ev))
    else:
        Fh = Fh / (1.0 + dt * lam * ev)
    return sfft.idctn(Fh, type=2, axes=(-3, -2, -1), norm="ortho", workers=w)


def _check_cfl(F: DistField, acc: Optional[np.ndarray], cfg: StepConfig) -> None:
    g = F.grid
    limits = []
    if cfg.collision_mode == "explicit" and not F.homogeneous:
        limits.append(g.dx / g.v_max)
    if acc is not None:
        amax = float(np.max(np.abs(acc)))
        if amax > 0:
            limits.append(g.dv / amax)
    if limits and cfg.dt > cfg.cfl_safety * min(limits):
        raise CFLError(f"dt = {cfg.dt:g} exceeds CFL bound {cfg.cfl_safety * min(limits):g}")


def linear_step(F: DistField, G: Optional[DistField], psi: Optional[SpatialField],
                cfg: StepConfig, ws: Optional[CollisionWorkspace] = None) -> DistField:
    """One Strang step of the linearized equation with lagged ``G`` and ``psi``.

    Parameters
    ----------
    F : DistField
        Current distribution.
    G : DistField or None
        Collision partner (``None`` disables collisions).
    psi : SpatialField or None
        Potential whose negative gradient is the force.
    ws : CollisionWorkspace, optional
        Precomputed coefficients for ``G`` (reused across species).
    """
    g = F.grid
    if G is not None:
        g.check_same(G.grid)
    if ws is None and G is not None:
        ws = CollisionWorkspace.for_partner(G)
    acc = force(psi)
    _check_cfl(F, acc, cfg)
    half = 0.5 * cfg.dt
    u = F.values
    u = advect_x(u, g, half)
    u = advect_v(u, g, acc, half)
    u = collide(u, ws, g, cfg)
    u = advect_v(u, g, acc, half)
    u = advect_x(u, g, half)
    u = regularize(u, g, cfg.lam, cfg.dt)
    return DistField(g, u, F.nonneg)


# --- couplings and Picard -----------------------------------------------------

Coupling = Callable[[Tuple[DistField, ...]], Tuple[Tuple[Optional[DistField], ...],
                                                   Tuple[Optional[SpatialField], ...]]]


def _density(F: DistField):
    return moments(F)[0]


def self_coupling(collisions: bool = True) -> Coupling:
    """Single species colliding with itself, no field."""
    def rule(fields):
        (F,) = fields
        return ((F if collisions else None),), (None,)
    return rule


def two_species_coupling(collisions: bool = True) -> Coupling:
    """Both species collide against ``F_+ + F_-``; ``psi = (phi, -phi)``."""
    def rule(fields):
        Fp, Fm = fields
        g = Fp.grid
        rho = SpatialField(g, _density(Fp).values - _density(Fm).values)
        phi = solve_poisson(rho)
        G = (Fp + Fm) if collisions else None
        return (G, G), (phi, SpatialField(g, -phi.values))
    return rule


def massless_coupling(E0: float, collisions: bool = True) -> Coupling:
    """Ions collide with themselves; ``(beta, phi)`` from the energy constraint."""
    def rule(fields):
        (F,) = fields
        _, _, ke = moments(F)
        Ec = E0 - ke
        if Ec <= 0:
            raise EnergyPositivityError(f"electron energy E0 - KE = {Ec:.3e} is not positive")
        st = solve_coupled(_density(F), Ec)
        return ((F if collisions else None),), (st.phi,)
    return rule


def inv_density_sup(F: DistField) -> float:
    """``|1/n|_inf``; infinite where the density vanishes or is negative."""
    n = _density(F)
    vals = n if isinstance(n, float) else n.values
    m = float(np.min(vals))
    return math.inf if m <= 0 else 1.0 / m


@dataclass
class PicardLog:
    """History of ``sup_t |F^{N+1} - F^N|_{E'}`` and successive ratios."""

    diffs: List[float] = field(default_factory=list)
    ratios: List[float] = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.diffs)


def _workspaces(partners, cache):
    out = []
    for G in partners:
        if G is None:
            out.append(None)
            continue
        key = id(G)
        if key not in cache:
            cache[key] = CollisionWorkspace.for_partner(G)
        out.append(cache[key])
    return out


def _march(F_in, traj_prev, coupling, step, n_steps, guard):
    """March all species over ``n_steps`` with coefficients from ``traj_prev``."""
    cur = tuple(F_in)
    traj = [cur]
    for k in range(n_steps):
        partners, psis = coupling(traj_prev[k])
        ws = _workspaces(partners, {})
        cur = tuple(linear_step(F, G, psi, step, w)
                    for F, G, psi, w in zip(cur, partners, psis, ws))
        for i, F in enumerate(cur):
            if inv_density_sup(F) > guard[i]:
                raise BlowupError(f"species {i}: |1/n|_inf exceeded {guard[i]:.3e} at step {k + 1}")
        traj.append(cur)
    return traj


def picard_solve(F_in: Union[DistField, Sequence[DistField]], coupling: Coupling,
                 cfg: PicardConfig, step: StepConfig, density_growth: float = 2.0):
    """Picard iteration of the linearized system on ``[0, T]``.

    ``F^0(t) = F_in``; ``F^{N+1}`` marches :func:`linear_step` with partners
    and potentials from ``F^N(t)``.  The iteration stops once the sup over
    ``cfg.n_checkpoints`` equispaced times of ``|F^{N+1} - F^N|_{E'}``
    (summed in quadrature over species) is below ``cfg.tol_e_prime``.

    The full step-level trajectory of the previous iterate is kept because
    it supplies the lagged coefficients.

    Returns
    -------
    fields : DistField or tuple
        Final-time iterate (same structure as ``F_in``).
    log : PicardLog
    """
    single = isinstance(F_in, DistField)
    F0 = (F_in,) if single else tuple(F_in)
    for F in F0:
        if np.any(F.values < 0):
            raise ValueError("F_in must be nonnegative")
    n_steps = max(1, int(math.ceil(cfg.horizon / step.dt - 1e-9)))
    step = replace(step, dt=cfg.horizon / n_steps)
    ck = sorted(set(int(round(x)) for x in np.linspace(0, n_steps, cfg.n_checkpoints + 1)[1:]))
    guard = [density_growth * inv_density_sup(F) for F in F0]
    prev = [F0] * (n_steps + 1)
    log = PicardLog()
    p = cfg.norm_params
    for _ in range(cfg.max_iter):
        traj = _march(F0, prev, coupling, step, n_steps, guard)
        diff = 0.0
        for k in ck:
            s = sum(norm_report(a - b, p, dissipation=False).e_prime ** 2
                    for a, b in zip(traj[k], prev[k]))
            diff = max(diff, math.sqrt(s))
        if log.diffs:
            log.ratios.append(diff / log.diffs[-1] if log.diffs[-1] > 0 else 0.0)
        log.diffs.append(diff)
        prev = traj
        if diff < cfg.tol_e_prime:
            log.converged = True
            break
    final = prev[-1]
    if not log.converged and cfg.raise_on_max_iter:
        raise PicardError(f"Picard did not converge in {cfg.max_iter} iterations", log)
    return (final[0] if single else final), log


# --- drivers ------------------------------------------------------------------

def step_two_species(state: PlasmaState, cfg: StepConfig) -> PlasmaState:
    """Advance both species with lagged partner ``F_+ + F_-`` and field ``phi``."""
    Fp, Fm = state.F_plus, state.F_minus
    G = Fp + Fm
    ws = CollisionWorkspace.for_partner(G)
    phi = state.phi
    Fp1 = linear_step(Fp, G, phi, cfg, ws)
    Fm1 = linear_step(Fm, G, SpatialField(phi.grid, -phi.values), cfg, ws)
    rho = SpatialField(Fp.grid, _density(Fp1).values - _density(Fm1).values)
    return replace(state, F_plus=Fp1, F_minus=Fm1, phi=solve_poisson(rho), t=state.t + cfg.dt)


def step_massless(state: PlasmaState, cfg: StepConfig) -> PlasmaState:
    """Advance the ions, then re-solve ``(beta, phi)`` with ``E_c = E0 - KE``."""
    F = state.F_plus
    F1 = linear_step(F, F, state.phi, cfg)
    _, _, ke = moments(F1)
    Ec = state.E0 - ke
    if Ec <= 0:
        raise EnergyPositivityError(f"electron energy E0 - KE = {Ec:.3e} is not positive")
    st = solve_coupled(_density(F1), Ec)
    return replace(state, F_plus=F1, phi=st.phi, beta=st.beta, t=state.t + cfg.dt)


def step_homogeneous(state: PlasmaState, cfg: StepConfig) -> PlasmaState:
    """Space-homogeneous relaxation ``d_t F = Q(F, F)``."""
    F = state.F_plus
    return replace(state, F_plus=linear_step(F, F, None, cfg), t=state.t + cfg.dt)


_STEPPERS = {
    "two_species": step_two_species,
    "massless": step_massless,
    "landau_homogeneous": step_homogeneous,
}


def advance(state: PlasmaState, cfg: StepConfig) -> PlasmaState:
    """Dispatch one step on ``state.variant``."""
    return _STEPPERS[state.variant](state, cfg)


# --- initial data -------------------------------------------------------------

@dataclass(frozen=True)
class ComponentSpec:
    """One Maxwellian ``w (1 + a cos(2 pi m x_1)) M(v; u + U sin(2 pi x_1) e_1, T)``.

    ``temperature`` is a scalar or a per-axis triple.
    """

    weight: float = 1.0
    mean: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    temperature: Union[float, Tuple[float, float, float]] = 1.0
    density_amp: float = 0.0
    mode: int = 1
    flow_amp: float = 0.0


@dataclass(frozen=True)
class InitialSpec:
    """Initial data: per-species component lists plus variant settings."""

    variant: str
    grid: PhaseGrid
    plus: Tuple[ComponentSpec, ...] = (ComponentSpec(),)
    minus: Tuple[ComponentSpec, ...] = (ComponentSpec(),)
    beta_in: float = 1.5
    energy0: Optional[float] = None


def _species(grid: PhaseGrid, comps: Sequence[ComponentSpec], homogeneous: bool) -> DistField:
    v = grid.v_nodes
    if homogeneous:
        x1 = np.zeros(1)
    else:
        x1 = grid.position()[0]
    total = 0.0
    for c in comps:
        T = np.broadcast_to(np.asarray(c.temperature, float), (3,))
        if not np.all(T > 0):
            raise ValueError("component temperature must be positive")
        dens = c.weight * (1.0 + c.density_amp * np.cos(2 * np.pi * c.mode * x1))
        shift = c.flow_amp * np.sin(2 * np.pi * x1)
        ex = dens[..., None, None, None] * (2 * np.pi) ** -1.5 / np.sqrt(np.prod(T))
        g0 = np.exp(-(v[None, :] - c.mean[0] - shift.reshape(-1, 1)) ** 2 / (2 * T[0]))
        g0 = g0.reshape(x1.shape + (grid.n_v,))
        g1 = np.exp(-(v - c.mean[1]) ** 2 / (2 * T[1]))
        g2 = np.exp(-(v - c.mean[2]) ** 2 / (2 * T[2]))
        total = total + ex * (g0[..., :, None, None] * g1[None, :, None] * g2[None, None, :])
    vals = np.asarray(total, float)
    if homogeneous:
        vals = vals.reshape(grid.v_shape)
    mass = vals.sum() * grid.dvol_v * (1.0 if homogeneous else grid.dvol_x)
    if not mass > 0:
        raise ValueError("initial data has zero or negative mass")
    vals = vals / mass
    F = DistField(grid, vals)
    n = _density(F)
    nmin = float(n) if homogeneous else float(n.values.min())
    if nmin <= 0 or np.any(vals < 0):
        raise ValueError("initial density is not strictly positive")
    warn_boundary(vals, "initial data")
    return DistField(grid, vals, nonneg=True)


def make_initial(spec: InitialSpec) -> PlasmaState:
    """Build a normalized initial state for ``spec.variant``."""
    g = spec.grid
    if spec.variant not in VARIANTS:
        raise ValueError(f"unknown variant {spec.variant!r}")
    if spec.variant == "landau_homogeneous":
        return PlasmaState("landau_homogeneous", _species(g, spec.plus, True))
    Fp = _species(g, spec.plus, False)
    if spec.variant == "two_species":
        Fm = _species(g, spec.minus, False)
        rho = SpatialField(g, _density(Fp).values - _density(Fm).values)
        return PlasmaState("two_species", Fp, solve_poisson(rho), F_minus=Fm)
    n = _density(Fp)
    if spec.energy0 is None:
        phi_in = solve_pb(n, spec.beta_in)
        E0 = energy_functional(Fp, spec.beta_in, phi_in)
    else:
        E0 = float(spec.energy0)
    _, _, ke = moments(Fp)
    Ec = E0 - ke
    if Ec <= 0:
        raise EnergyPositivityError(f"electron energy E0 - KE = {Ec:.3e} is not positive")
    st = solve_coupled(n, Ec)
    return PlasmaState("massless", Fp, st.phi, beta=st.beta, E0=E0)
