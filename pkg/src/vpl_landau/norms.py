"""Anisotropic weighted norms, the sigma-weighted seminorm and Bessel potentials.

``<a> = sqrt(1 + |a|^2)``.  ``bessel_x`` and ``bessel_v`` apply the Fourier
multipliers ``<2 pi k>^s`` in x (unit torus) and ``<xi>^r`` in v, where the
velocity box is treated as ``2 v_max``-periodic and ``xi`` is the angular
frequency.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Tuple, Union

import numpy as np

from .landau_kernel import sigma_on_grid
from .phase_space import DistField, PhaseGrid, SpatialField, fft_v, fft_x, ifft_v, ifft_x

__all__ = [
    "NormParams",
    "NormReport",
    "bessel_x",
    "bessel_v",
    "bessel_x_symbol",
    "bessel_v_symbol",
    "weight",
    "h_sigma_seminorm",
    "norm_report",
    "commutator_check",
    "sobolev_x_norm",
]


@dataclass(frozen=True)
class NormParams:
    """Parameters ``(s, r, m0, m1, m2)`` of the norm family.

    Defaults ``s = 2.6``, ``r = 0.5``, ``m = (5, 10, 15)``.  Overrides must
    keep ``s`` in ``(5/2, 3]``, ``r`` in ``(0, 1]``, ``m1 >= 5`` and
    ``m1 + 1.5 s <= m2``.
    """

    s: float = 2.6
    r: float = 0.5
    m0: float = 5.0
    m1: float = 10.0
    m2: float = 15.0

    def __post_init__(self):
        if not 2.5 < self.s <= 3.0:
            raise ValueError(f"s must lie in (5/2, 3], got {self.s}")
        if not 0.0 < self.r <= 1.0:
            raise ValueError(f"r must lie in (0, 1], got {self.r}")
        if self.m1 < 5.0 or self.m1 + 1.5 * self.s > self.m2:
            raise ValueError("weights must satisfy 5 <= m1 and m1 + 1.5 s <= m2")
        if self.m0 < 0:
            raise ValueError("m0 must be nonnegative")


def _values(u) -> Tuple[PhaseGrid, np.ndarray]:
    return u.grid, u.values


def bessel_x_symbol(grid: PhaseGrid, s: float) -> np.ndarray:
    k2 = np.sum((2.0 * np.pi * grid.wavenumbers_x()) ** 2, axis=0)
    return (1.0 + k2) ** (0.5 * s)


def bessel_v_symbol(grid: PhaseGrid, r: float) -> np.ndarray:
    xi = grid.angular_v() ** 2
    xi2 = xi[:, None, None] + xi[None, :, None] + xi[None, None, :]
    return (1.0 + xi2) ** (0.5 * r)


def _bx(grid: PhaseGrid, vals: np.ndarray, s: float, vaxes: int) -> np.ndarray:
    if s == 0 or vals.ndim == vaxes:
        return vals.copy()
    sym = bessel_x_symbol(grid, s).reshape(grid.x_shape + (1,) * vaxes)
    return ifft_x(grid, fft_x(grid, vals) * sym)


def bessel_x(u: Union[DistField, SpatialField], s: float):
    """``<grad_x>^s u`` (identity on x-independent data)."""
    grid, vals = _values(u)
    vaxes = 3 if isinstance(u, DistField) else 0
    out = _bx(grid, vals, s, vaxes)
    return DistField(grid, out) if isinstance(u, DistField) else SpatialField(grid, out)


def _bv(grid: PhaseGrid, vals: np.ndarray, r: float) -> np.ndarray:
    if r == 0:
        return vals.copy()
    return ifft_v(fft_v(vals) * bessel_v_symbol(grid, r))


def bessel_v(u: DistField, r: float) -> DistField:
    """``<grad_v>^r u`` on the ``2 v_max``-periodic velocity box."""
    return DistField(u.grid, _bv(u.grid, u.values, r))


def weight(grid: PhaseGrid, m: float) -> np.ndarray:
    """``<v>^m`` on the velocity mesh."""
    return (1.0 + grid.speed_sq()) ** (0.5 * m)


@functools.lru_cache(maxsize=8)
def _sigma(grid: PhaseGrid) -> np.ndarray:
    s = sigma_on_grid(grid)
    s.flags.writeable = False
    return s


def _hsig(grid: PhaseGrid, vals: np.ndarray) -> np.ndarray:
    h = grid.dv
    g = np.gradient(vals, h, axis=(-3, -2, -1), edge_order=2)
    sig = _sigma(grid)
    q = 0.0
    for i in range(3):
        for j in range(3):
            q = q + sig[i, j] * g[i] * g[j]
    return np.sum(q, axis=(-3, -2, -1)) * grid.dvol_v


def h_sigma_seminorm(psi: DistField):
    """Squared seminorm ``int sigma_ij d_i psi d_j psi dv``.

    Centered second-order differences (one-sided at the faces).  Returns a
    float for velocity-only input and an x-array otherwise.
    """
    out = _hsig(psi.grid, psi.values)
    return float(out) if np.ndim(out) == 0 else out


def _l2(grid: PhaseGrid, a: np.ndarray) -> float:
    s = np.sum(a * a) * grid.dvol_v
    if a.ndim > 3:
        s *= grid.dvol_x
    return float(np.sqrt(s))


def _dnorm(grid: PhaseGrid, a: np.ndarray) -> float:
    q = _hsig(grid, a)
    s = np.sum(q) * (grid.dvol_x if np.ndim(q) else 1.0)
    return float(np.sqrt(max(s, 0.0)))


@dataclass
class NormReport:
    """``E``, ``D``, ``E'``, ``D'`` norms with their per-term breakdowns."""

    e: float
    d: float
    e_prime: float
    d_prime: float
    e_terms: Tuple[float, float, float] = field(default=(0.0, 0.0, 0.0))
    d_terms: Tuple[float, float, float] = field(default=(0.0, 0.0, 0.0))
    e_prime_terms: Tuple[float, float] = field(default=(0.0, 0.0))
    d_prime_terms: Tuple[float, float] = field(default=(0.0, 0.0))

    CSV_HEADER = ("t", "e", "d", "e_prime", "d_prime", "e_0", "e_1", "e_2", "d_0", "d_1", "d_2",
                  "ep_0", "ep_1", "dp_0", "dp_1")

    def csv_row(self, t: float = 0.0):
        return (t, self.e, self.d, self.e_prime, self.d_prime, *self.e_terms, *self.d_terms,
                *self.e_prime_terms, *self.d_prime_terms)


def _root_sum_sq(terms) -> float:
    return float(np.sqrt(sum(t * t for t in terms)))


def norm_report(u: DistField, p: NormParams = NormParams(), dissipation: bool = True) -> NormReport:
    """All four norms of ``u``.

    ``E^2 = |<v>^m2 u|^2 + |<v>^m1 <grad_x>^s u|^2 + |<grad_v>^r u|^2``;
    ``D`` replaces ``L^2_v`` by the ``H_sigma`` seminorm; the primed norms
    keep the first two terms with weights lowered to ``m1`` and ``m0``.
    Set ``dissipation=False`` to skip ``D`` and ``D'`` (reported as NaN).
    """
    g = u.grid
    vals = u.values
    bxu = _bx(g, vals, p.s, 3)
    bvu = _bv(g, vals, p.r)
    w0, w1, w2 = weight(g, p.m0), weight(g, p.m1), weight(g, p.m2)
    a = (w2 * vals, w1 * bxu, bvu)
    b = (w1 * vals, w0 * bxu)
    e_t = tuple(_l2(g, x) for x in a)
    ep_t = tuple(_l2(g, x) for x in b)
    if dissipation:
        d_t = tuple(_dnorm(g, x) for x in a)
        dp_t = tuple(_dnorm(g, x) for x in b)
    else:
        d_t = (np.nan,) * 3
        dp_t = (np.nan,) * 2
    return NormReport(_root_sum_sq(e_t), _root_sum_sq(d_t), _root_sum_sq(ep_t),
                      _root_sum_sq(dp_t), e_t, d_t, ep_t, dp_t)


def sobolev_x_norm(f: SpatialField, s: float) -> float:
    """``H^s`` norm of a spatial field, ``|<grad_x>^s f|_{L^2}``."""
    g = f.grid
    b = _bx(g, f.values, s, 0)
    return float(np.sqrt(np.sum(b * b) * g.dvol_x))


def _fourier_l1(u: DistField) -> float:
    """Discrete ``(2 pi)^-3 int |u_hat| d xi`` on the periodic velocity box.

    This dominates ``sup |u|``.
    """
    n3 = u.grid.n_v ** 3
    return float(np.sum(np.abs(fft_v(u.values))) / n3)


def commutator_check(u1: DistField, u2: DistField, m: float, r: float):
    """Sides of the weighted commutator estimate for velocity-only fields.

    Returns
    -------
    lhs : float
        ``|<v>^m [<grad_v>^r, u1] u2|_{L^2}``.
    rhs1 : float
        ``|<grad_v>^r u1|_{FL^1} |<v>^m u2|_{L^2}``.
    rhs2 : float
        ``|<grad_v>^(r + 3/2) u1|_{L^2} |<v>^m u2|_{L^2}``.
    """
    if m < 0:
        raise ValueError("m must be nonnegative")
    if not 0.0 < r <= 1.0:
        raise ValueError("r must lie in (0, 1]")
    g = u1.grid
    g.check_same(u2.grid)
    a, b = u1.values, u2.values
    w = weight(g, m)
    comm = _bv(g, a * b, r) - a * _bv(g, b, r)
    lhs = _l2(g, w * comm)
    wu2 = _l2(g, w * b)
    rhs1 = _fourier_l1(DistField(g, _bv(g, a, r))) * wu2
    rhs2 = _l2(g, _bv(g, a, r + 1.5)) * wu2
    return lhs, rhs1, rhs2
