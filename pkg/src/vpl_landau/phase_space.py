"""Phase-space grids, fields, velocity moments and FFT helpers.

Layout conventions
------------------
A distribution array has shape ``x_shape + (n_v, n_v, n_v)``: the leading
``dim_x`` axes index the periodic spatial grid and the trailing three axes
index the velocity box.  Homogeneous (x-independent) distributions may drop
the spatial axes and carry shape ``(n_v, n_v, n_v)`` only.

Velocity nodes are cell midpoints ``v_k = -v_max + (k + 1/2) dv``; spatial
nodes are ``x_i = i dx`` on the unit torus.  All quadratures use uniform
weights.
"""

from __future__ import annotations

import csv
import struct
import warnings
from dataclasses import dataclass
from typing import Dict, Iterable, Mapping, Sequence, Tuple

import numpy as np
import scipy.fft as sfft

__all__ = [
    "PhaseGrid",
    "DistField",
    "SpatialField",
    "CoeffField",
    "GridError",
    "BoundaryDecayWarning",
    "warn_boundary",
    "make_grid",
    "maxwellian",
    "moments",
    "fft_x",
    "ifft_x",
    "fft_v",
    "ifft_v",
    "set_workers",
    "get_workers",
    "boundary_fraction",
    "write_snapshot",
    "read_snapshot",
    "write_csv",
]

BOUNDARY_WARN = 1e-10

_WORKERS = 1


class GridError(ValueError):
    """Raised for invalid grid parameters or mismatched grids."""


class BoundaryDecayWarning(RuntimeWarning):
    """Field mass reaches the velocity-box faces."""


def set_workers(n: int) -> None:
    """Set the number of FFT worker threads used package-wide."""
    global _WORKERS
    if int(n) < 1:
        raise ValueError("thread count must be >= 1")
    _WORKERS = int(n)


def get_workers() -> int:
    return _WORKERS


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class PhaseGrid:
    """Periodic spatial grid times a truncated velocity box.

    Parameters
    ----------
    dim_x : int
        Number of periodic spatial dimensions (1, 2 or 3).
    n_x : int
        Points per spatial axis.
    n_v : int
        Points per velocity axis.
    v_max : float
        Half-width of the velocity box ``[-v_max, v_max)^3``.
    """

    dim_x: int
    n_x: int
    n_v: int
    v_max: float

    @property
    def dx(self) -> float:
        return 1.0 / self.n_x

    @property
    def dv(self) -> float:
        return 2.0 * self.v_max / self.n_v

    @property
    def x_shape(self) -> Tuple[int, ...]:
        return (self.n_x,) * self.dim_x

    @property
    def v_shape(self) -> Tuple[int, int, int]:
        return (self.n_v,) * 3

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.x_shape + self.v_shape

    @property
    def x_nodes(self) -> np.ndarray:
        return np.arange(self.n_x) * self.dx

    @property
    def v_nodes(self) -> np.ndarray:
        return -self.v_max + (np.arange(self.n_v) + 0.5) * self.dv

    @property
    def dvol_v(self) -> float:
        """Velocity quadrature weight ``dv^3``."""
        return self.dv ** 3

    @property
    def dvol_x(self) -> float:
        """Spatial quadrature weight ``dx^dim_x``."""
        return self.dx ** self.dim_x

    def velocity(self) -> np.ndarray:
        """Velocity mesh of shape ``(3, n_v, n_v, n_v)``."""
        v = self.v_nodes
        return np.stack(np.meshgrid(v, v, v, indexing="ij"))

    def speed_sq(self) -> np.ndarray:
        """``|v|^2`` on the velocity mesh."""
        v2 = self.v_nodes ** 2
        return v2[:, None, None] + v2[None, :, None] + v2[None, None, :]

    def position(self) -> np.ndarray:
        """Spatial mesh of shape ``(dim_x,) + x_shape``."""
        x = self.x_nodes
        return np.stack(np.meshgrid(*([x] * self.dim_x), indexing="ij"))

    def wavenumbers_x(self) -> np.ndarray:
        """Integer wavenumbers, shape ``(dim_x,) + x_shape``."""
        k = sfft.fftfreq(self.n_x, d=1.0 / self.n_x)
        return np.stack(np.meshgrid(*([k] * self.dim_x), indexing="ij"))

    def angular_v(self) -> np.ndarray:
        """1D angular frequencies of the ``2 v_max``-periodic velocity box."""
        return 2.0 * np.pi * sfft.fftfreq(self.n_v, d=self.dv)

    def check_same(self, other: "PhaseGrid") -> None:
        if self != other:
            raise GridError(f"grid mismatch: {self} vs {other}")


def make_grid(dim_x: int, n_x: int, n_v: int, v_max: float) -> PhaseGrid:
    """Validate parameters and build a :class:`PhaseGrid`.

    Raises
    ------
    GridError
        If ``dim_x`` is not 1, 2 or 3, a size is not a power of two at
        least 8, or ``v_max`` is not positive.
    """
    if int(dim_x) not in (1, 2, 3):
        raise GridError(f"dim_x must be 1, 2 or 3, got {dim_x}")
    for name, n in (("n_x", n_x), ("n_v", n_v)):
        if int(n) != n or not _is_pow2(int(n)) or int(n) < 8:
            raise GridError(f"{name} must be a power of two >= 8, got {n}")
    if not (np.isfinite(v_max) and v_max > 0):
        raise GridError(f"v_max must be positive, got {v_max}")
    return PhaseGrid(int(dim_x), int(n_x), int(n_v), float(v_max))


def _check_finite(values: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{what} contains non-finite values")


@dataclass(frozen=True)
class DistField:
    """Distribution function sampled on a :class:`PhaseGrid`.

    ``values`` has shape ``grid.shape`` or, for homogeneous data,
    ``grid.v_shape``.  ``nonneg`` records that the constructor produced
    physical (nonnegative) data.
    """

    grid: PhaseGrid
    values: np.ndarray
    nonneg: bool = False

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape not in (self.grid.shape, self.grid.v_shape):
            raise GridError(
                f"DistField shape {vals.shape} does not match grid {self.grid.shape}")
        _check_finite(vals, "DistField")
        object.__setattr__(self, "values", vals)

    @property
    def homogeneous(self) -> bool:
        return self.values.ndim == 3

    def with_values(self, values: np.ndarray, nonneg: bool | None = None) -> "DistField":
        return DistField(self.grid, values, self.nonneg if nonneg is None else nonneg)

    def __add__(self, other: "DistField") -> "DistField":
        self.grid.check_same(other.grid)
        return DistField(self.grid, self.values + other.values, self.nonneg and other.nonneg)

    def __sub__(self, other: "DistField") -> "DistField":
        self.grid.check_same(other.grid)
        return DistField(self.grid, self.values - other.values)

    def __mul__(self, a: float) -> "DistField":
        return DistField(self.grid, a * self.values, self.nonneg and a >= 0)

    __rmul__ = __mul__


@dataclass(frozen=True)
class SpatialField:
    """Real scalar field over the spatial grid (``values.shape == x_shape``)."""

    grid: PhaseGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.x_shape:
            raise GridError(
                f"SpatialField shape {vals.shape} does not match {self.grid.x_shape}")
        _check_finite(vals, "SpatialField")
        object.__setattr__(self, "values", vals)

    def mean(self) -> float:
        return float(np.mean(self.values))


@dataclass(frozen=True)
class CoeffField:
    """Collision coefficients ``mat = Phi*G`` and ``vec = d_i Phi_ij * G``.

    ``mat`` has shape ``(3, 3) + S`` and ``vec`` shape ``(3,) + S`` where
    ``S`` is the shape of the generating distribution array.
    """

    grid: PhaseGrid
    mat: np.ndarray
    vec: np.ndarray

    def __post_init__(self):
        if self.mat.shape[:2] != (3, 3) or self.vec.shape[0] != 3:
            raise GridError("CoeffField component axes must lead")
        if self.mat.shape[2:] != self.vec.shape[1:]:
            raise GridError("mat and vec field shapes differ")
        _check_finite(self.mat, "CoeffField.mat")
        _check_finite(self.vec, "CoeffField.vec")

    def asymmetry(self) -> float:
        return float(np.max(np.abs(self.mat - np.swapaxes(self.mat, 0, 1)), initial=0.0))


def boundary_fraction(values: np.ndarray) -> float:
    """Largest |value| on the velocity-box faces relative to the field max."""
    peak = float(np.max(np.abs(values), initial=0.0))
    if peak == 0.0:
        return 0.0
    faces = []
    for ax in (-3, -2, -1):
        faces.append(np.abs(np.take(values, [0, -1], axis=ax)).max())
    return float(max(faces) / peak)


def warn_boundary(values: np.ndarray, what: str = "field") -> None:
    frac = boundary_fraction(values)
    if frac > BOUNDARY_WARN:
        warnings.warn(
            f"{what}: velocity-box boundary values reach {frac:.2e} of the maximum",
            BoundaryDecayWarning, stacklevel=3)


def maxwellian(grid: PhaseGrid, density: float = 1.0, mean: Sequence[float] = (0.0, 0.0, 0.0),
               temperature: float = 1.0, homogeneous: bool = False) -> DistField:
    """Sampled Maxwellian ``n (2 pi T)^(-3/2) exp(-|v-u|^2 / (2T))``.

    Parameters
    ----------
    grid : PhaseGrid
    density, temperature : float
        Must be positive.
    mean : 3-sequence
        Bulk velocity.
    homogeneous : bool
        Return a velocity-only array instead of broadcasting over x.
    """
    if not density > 0:
        raise ValueError("density must be positive")
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    u = np.asarray(mean, dtype=float).reshape(3)
    v = grid.v_nodes
    g = [np.exp(-(v - u[d]) ** 2 / (2.0 * temperature)) for d in range(3)]
    vals = density * (2.0 * np.pi * temperature) ** -1.5 * (
        g[0][:, None, None] * g[1][None, :, None] * g[2][None, None, :])
    warn_boundary(vals, "maxwellian")
    if not homogeneous:
        vals = np.broadcast_to(vals, grid.shape).copy()
    return DistField(grid, vals, nonneg=True)


def _xsum(a: np.ndarray, grid: PhaseGrid, homogeneous: bool) -> float:
    if homogeneous:
        return float(np.sum(a))
    return float(np.sum(a) * grid.dvol_x)


def moments(F: DistField):
    """Velocity moments of ``F``.

    Returns
    -------
    mass : SpatialField or float
        ``int F dv`` (a float for homogeneous input).
    momentum : ndarray
        ``int v F dv`` with shape ``(3,) + x_shape``.
    kinetic_energy : float
        ``int int |v|^2/2 F dv dx``.
    """
    g = F.grid
    w = g.dvol_v
    vals = F.values
    v = g.v_nodes
    mass = vals.sum(axis=(-3, -2, -1)) * w
    mom = np.stack([
        np.tensordot(vals.sum(axis=(-2, -1)), v, axes=([-1], [0])),
        np.tensordot(vals.sum(axis=(-3, -1)), v, axes=([-1], [0])),
        np.tensordot(vals.sum(axis=(-3, -2)), v, axes=([-1], [0])),
    ]) * w
    ke_x = 0.5 * np.tensordot(vals, g.speed_sq(), axes=3) * w
    ke = _xsum(ke_x, g, F.homogeneous)
    if F.homogeneous:
        return float(mass), mom, ke
    return SpatialField(g, mass), mom, ke


def _x_axes(grid: PhaseGrid) -> Tuple[int, ...]:
    return tuple(range(grid.dim_x))


def fft_x(grid: PhaseGrid, u: np.ndarray) -> np.ndarray:
    """Unnormalized forward FFT over the leading spatial axes."""
    return sfft.fftn(u, axes=_x_axes(grid), workers=_WORKERS)


def ifft_x(grid: PhaseGrid, uh: np.ndarray) -> np.ndarray:
    """Inverse of :func:`fft_x` (real part)."""
    return sfft.ifftn(uh, axes=_x_axes(grid), workers=_WORKERS).real


def fft_v(u: np.ndarray) -> np.ndarray:
    """Unnormalized forward FFT over the trailing three velocity axes."""
    return sfft.fftn(u, axes=(-3, -2, -1), workers=_WORKERS)


def ifft_v(uh: np.ndarray) -> np.ndarray:
    """Inverse of :func:`fft_v` (real part)."""
    return sfft.ifftn(uh, axes=(-3, -2, -1), workers=_WORKERS).real


# --- snapshots -------------------------------------------------------------

MAGIC = b"VPLK"
VERSION = 1


def write_snapshot(path, grid: PhaseGrid, fields: Mapping[str, np.ndarray]) -> None:
    """Write a binary snapshot.

    Layout: magic ``VPLK``, u32 version, u32 dim_x, u32 n_x, u32 n_v,
    f64 v_max, u32 field count; then per field a u32 name length, UTF-8
    name, u32 ndim and u64 dims; then the arrays as little-endian f64 in
    row-major order.
    """
    items = [(str(k), np.ascontiguousarray(np.asarray(v, dtype="<f8"))) for k, v in fields.items()]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIIIdI", VERSION, grid.dim_x, grid.n_x, grid.n_v,
                             grid.v_max, len(items)))
        for name, arr in items:
            nb = name.encode("utf-8")
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        for _, arr in items:
            fh.write(arr.tobytes(order="C"))


def read_snapshot(path) -> Tuple[PhaseGrid, Dict[str, np.ndarray]]:
    """Read a snapshot written by :func:`write_snapshot`."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not a VPLK snapshot")
    off = 4
    version, dim_x, n_x, n_v, v_max, count = struct.unpack_from("<IIIIdI", data, off)
    off += struct.calcsize("<IIIIdI")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {version}")
    heads = []
    for _ in range(count):
        (ln,) = struct.unpack_from("<I", data, off)
        off += 4
        name = data[off:off + ln].decode("utf-8")
        off += ln
        (nd,) = struct.unpack_from("<I", data, off)
        off += 4
        shape = struct.unpack_from(f"<{nd}Q", data, off)
        off += 8 * nd
        heads.append((name, tuple(int(s) for s in shape)))
    out = {}
    for name, shape in heads:
        size = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f8", count=size, offset=off).reshape(shape)
        off += 8 * size
        out[name] = arr.astype(float)
    grid = make_grid(dim_x, n_x, n_v, v_max)
    return grid, out


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write rows with a fixed column order; floats use ``repr`` (``inf`` stays ``inf``), ``None`` is blank."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(header))
        for row in rows:
            w.writerow([_fmt(x) for x in row])
