"""Blow-up monitoring, conservation ledger, continuity residual and bound campaigns.

Every quantity is delegated to the module that owns it (``norm_report``,
``moments``, ``inv_density_sup``, ``verify_bounds``, ``commutator_check``)
so reports agree with direct calls on the same input.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .integrator import PlasmaState, inv_density_sup
from .landau_kernel import BoundReport, kernel_table, verify_bounds
from .norms import NormParams, commutator_check, norm_report
from .phase_space import DistField, PhaseGrid, fft_x, ifft_x, make_grid, moments, write_csv
from .poisson import field_energy

__all__ = [
    "BlowupParams",
    "BlowupReport",
    "blowup_monitor",
    "continuity_residual",
    "ConservationLedger",
    "total_energy",
    "entropy",
    "CorpusSpec",
    "CampaignReport",
    "default_corpus",
    "corpus_members",
    "campaign_verify",
]


# --- blow-up ------------------------------------------------------------------

@dataclass(frozen=True)
class BlowupParams:
    """Ceilings for the continuation quantities.

    ``None`` entries are filled by :meth:`from_initial` as ``factor`` times
    the initial value (``|ln beta|`` uses ``max(|ln beta_0|, 1)``).
    """

    e_ceiling: Optional[float] = None
    inv_density_ceiling: Optional[float] = None
    ln_beta_ceiling: Optional[float] = None
    norm_params: NormParams = NormParams()
    track_dissipation: bool = False

    def from_initial(self, state: PlasmaState, factor: float = 1e3) -> "BlowupParams":
        e0 = _e_norm(state, self.norm_params)
        inv0 = max(inv_density_sup(F) for F in state.species())
        lb = None
        if state.beta is not None:
            lb = factor * max(abs(math.log(state.beta)), 1.0)
        return BlowupParams(
            e_ceiling=self.e_ceiling if self.e_ceiling is not None else factor * e0,
            inv_density_ceiling=(self.inv_density_ceiling if self.inv_density_ceiling is not None
                                 else factor * inv0),
            ln_beta_ceiling=self.ln_beta_ceiling if self.ln_beta_ceiling is not None else lb,
            norm_params=self.norm_params,
            track_dissipation=self.track_dissipation,
        )


@dataclass
class BlowupReport:
    """Continuation quantities at time ``t``; infinite values stay IEEE ``inf``."""

    t: float
    e_norm: float
    inv_density_sup: Tuple[float, ...]
    ln_beta: Optional[float]
    triggered: bool
    flags: Tuple[str, ...] = ()
    d_norm: float = math.nan

    CSV_HEADER = ("t", "e_norm", "inv_density_plus", "inv_density_minus", "ln_beta", "d_norm",
                  "triggered", "flags")

    def csv_row(self):
        inv = tuple(self.inv_density_sup) + (None,) * (2 - len(self.inv_density_sup))
        d = None if math.isnan(self.d_norm) else self.d_norm
        return (self.t, self.e_norm, inv[0], inv[1], self.ln_beta, d, int(self.triggered),
                "|".join(self.flags))


def _e_norm(state: PlasmaState, p: NormParams, dissipation: bool = False):
    reps = [norm_report(F, p, dissipation=dissipation) for F in state.species()]
    e = math.sqrt(sum(r.e ** 2 for r in reps))
    if not dissipation:
        return e
    return e, math.sqrt(sum(r.d ** 2 for r in reps))


def blowup_monitor(state: PlasmaState, params: BlowupParams) -> BlowupReport:
    """Evaluate ``|F|_E``, ``|1/n|_inf`` per species and ``ln beta`` against ceilings.

    Ceilings left as ``None`` are not checked; use
    :meth:`BlowupParams.from_initial` to set the defaults.
    """
    if params.track_dissipation:
        e, d = _e_norm(state, params.norm_params, True)
    else:
        e, d = _e_norm(state, params.norm_params), math.nan
    inv = tuple(inv_density_sup(F) for F in state.species())
    lb = None if state.beta is None else math.log(state.beta)
    flags = []
    if not math.isfinite(e) or (params.e_ceiling is not None and e > params.e_ceiling):
        flags.append("e_norm")
    for i, val in enumerate(inv):
        if not math.isfinite(val) or (params.inv_density_ceiling is not None
                                      and val > params.inv_density_ceiling):
            flags.append(f"inv_density_{'plus' if i == 0 else 'minus'}")
    if lb is not None and params.ln_beta_ceiling is not None and abs(lb) > params.ln_beta_ceiling:
        flags.append("ln_beta")
    return BlowupReport(state.t, e, inv, lb, bool(flags), tuple(flags), d)


# --- continuity -----------------------------------------------------------------

def _divergence_x(grid: PhaseGrid, j: np.ndarray) -> np.ndarray:
    k = 2.0 * np.pi * grid.wavenumbers_x()
    out = 0.0
    for d in range(grid.dim_x):
        kd = np.where(np.abs(grid.wavenumbers_x()[d]) == grid.n_x // 2, 0.0, k[d])
        out = out + 1j * kd * fft_x(grid, j[d])
    return ifft_x(grid, out)


def continuity_residual(prev: PlasmaState, nxt: PlasmaState, dt: float) -> float:
    """``|(n_next - n_prev)/dt + div_x int v F_mid dv|_{L^2_x}``, summed over species in quadrature.

    ``F_mid`` is the average of the two states.  Only the first ``dim_x``
    momentum components enter the divergence.
    """
    prev.grid.check_same(nxt.grid)
    if not dt > 0:
        raise ValueError("dt must be positive")
    g = prev.grid
    total = 0.0
    for Fa, Fb in zip(prev.species(), nxt.species()):
        na, _, _ = moments(Fa)
        nb, _, _ = moments(Fb)
        if Fa.homogeneous:
            r = (nb - na) / dt
            total += r * r
            continue
        _, j, _ = moments((Fa + Fb) * 0.5)
        r = (nb.values - na.values) / dt + _divergence_x(g, j[:g.dim_x])
        total += float(np.sum(r * r) * g.dvol_x)
    return math.sqrt(total)


# --- conservation ledger ---------------------------------------------------------

def entropy(F: DistField) -> float:
    """``int int F log F``; nonpositive samples contribute zero."""
    v = F.values
    pos = v > 0
    s = np.zeros_like(v)
    s[pos] = v[pos] * np.log(v[pos])
    tot = float(np.sum(s) * F.grid.dvol_v)
    return tot if F.homogeneous else tot * F.grid.dvol_x


def total_energy(state: PlasmaState) -> float:
    """Variant-appropriate conserved energy.

    Two species: kinetic of both plus ``(1/8pi) int |E|^2``.  Massless:
    ``3/(2 beta)`` plus ion kinetic plus field.  Homogeneous: kinetic.
    """
    ke = sum(moments(F)[2] for F in state.species())
    if state.variant == "landau_homogeneous":
        return ke
    fe = field_energy(state.phi) if state.phi is not None else 0.0
    if state.variant == "massless":
        return 1.5 / state.beta + ke + fe
    return ke + fe


def _total(a, F: DistField) -> float:
    return float(a) if F.homogeneous else float(np.sum(a.values) * F.grid.dvol_x)


@dataclass
class ConservationLedger:
    """Time series of conserved and monitored quantities, one row per record."""

    rows: List[tuple] = field(default_factory=list)

    CSV_HEADER = ("t", "mass_plus", "mass_minus", "momentum_1", "momentum_2", "momentum_3",
                  "energy", "entropy", "min_f", "min_rel")

    def record(self, state: PlasmaState) -> tuple:
        """Append a row; ``t`` must not decrease."""
        if self.rows and state.t < self.rows[-1][0]:
            raise ValueError(f"ledger times must be monotone: {state.t} < {self.rows[-1][0]}")
        masses = []
        mom = np.zeros(3)
        ent = 0.0
        mins, rels = [], []
        for F in state.species():
            n, j, _ = moments(F)
            masses.append(_total(n, F))
            jj = j if F.homogeneous else j.reshape(3, -1).sum(axis=1) * F.grid.dvol_x
            mom += np.asarray(jj, float).reshape(3)
            ent += entropy(F)
            mx = float(F.values.max())
            mins.append(float(F.values.min()))
            rels.append(mins[-1] / mx if mx > 0 else -math.inf)
        if len(masses) == 1:
            masses.append(math.nan)
        row = (state.t, masses[0], masses[1], *mom.tolist(), total_energy(state), ent,
               min(mins), min(rels))
        self.rows.append(row)
        return row

    def column(self, name: str) -> np.ndarray:
        i = self.CSV_HEADER.index(name)
        return np.array([r[i] for r in self.rows], float)

    def to_csv(self, path) -> None:
        write_csv(path, self.CSV_HEADER, self.rows)


# --- bound campaigns --------------------------------------------------------------

@dataclass(frozen=True)
class CorpusSpec:
    """Fixed-seed corpus of Gaussian mixtures on a velocity grid.

    Member ``0`` is the unit Maxwellian when ``include_maxwellian`` is set;
    the rest draw 1 to 3 components with means in ``[-1.5, 1.5]^3``,
    per-axis temperatures in ``[0.6, 2]`` and weights in ``[0.2, 1]``.
    """

    seed: int = 20240611
    size: int = 12
    n_v: int = 32
    v_max: float = 6.0
    sample_dirs: int = 32
    include_maxwellian: bool = True
    comm_m: float = 5.0
    comm_r: float = 0.5

    def __post_init__(self):
        if self.size < 0:
            raise ValueError("corpus size must be nonnegative")


def default_corpus() -> CorpusSpec:
    return CorpusSpec()


def _mixture(grid: PhaseGrid, comps) -> np.ndarray:
    v = grid.v_nodes
    out = np.zeros(grid.v_shape)
    for w, u, T in comps:
        g = [np.exp(-(v - u[a]) ** 2 / (2 * T[a])) / np.sqrt(2 * np.pi * T[a]) for a in range(3)]
        out += w * g[0][:, None, None] * g[1][None, :, None] * g[2][None, None, :]
    return out / (out.sum() * grid.dvol_v)


def corpus_members(spec: CorpusSpec) -> Tuple[PhaseGrid, List[np.ndarray]]:
    """Generate the corpus; deterministic in ``spec``."""
    grid = make_grid(1, 8, spec.n_v, spec.v_max)
    rng = np.random.default_rng(spec.seed)
    members = []
    for i in range(spec.size):
        if i == 0 and spec.include_maxwellian:
            comps = [(1.0, (0.0, 0.0, 0.0), (1.0, 1.0, 1.0))]
        else:
            k = int(rng.integers(1, 4))
            comps = [(float(rng.uniform(0.2, 1.0)), tuple(rng.uniform(-1.5, 1.5, 3)),
                      tuple(rng.uniform(0.6, 2.0, 3))) for _ in range(k)]
        vals = _mixture(grid, comps)
        if not (np.all(np.isfinite(vals)) and np.all(vals >= 0)):
            raise RuntimeError(f"corpus member {i} failed to generate")
        members.append(vals)
    return grid, members


def _hermite_partner(grid: PhaseGrid, i: int) -> np.ndarray:
    """Hermite-type ``H_k(v_a) mu`` with ``k = 1 + i mod 3`` and ``a = i mod 3``."""
    V = grid.velocity()
    mu = np.exp(-0.5 * grid.speed_sq()) * (2 * np.pi) ** -1.5
    x = V[i % 3]
    k = 1 + i % 3
    h = {1: x, 2: x * x - 1.0, 3: x ** 3 - 3.0 * x}[k]
    return h * mu


@dataclass
class CampaignReport:
    """Worst-case constants over a corpus.

    ``worst_const_upper`` is the largest ``c_upper / |<v>^5 G|_2`` and
    ``worst_const_lower`` the smallest ``c_lower / lower_expr``.
    """

    bounds: List[BoundReport]
    commutators: List[Tuple[float, float, float]]
    worst_const_upper: float
    worst_const_lower: float
    min_c_lower: float
    max_comm_ratio: float
    ok: bool

    SUMMARY_HEADER = ("members", "worst_const_upper", "worst_const_lower", "min_c_lower",
                      "max_comm_ratio", "ok")

    def summary_row(self):
        return (len(self.bounds), self.worst_const_upper, self.worst_const_lower,
                self.min_c_lower, self.max_comm_ratio, int(self.ok))


def campaign_verify(spec: CorpusSpec = CorpusSpec(), out_dir: Optional[str] = None,
                    members: Optional[Sequence[DistField]] = None) -> CampaignReport:
    """Run ``verify_bounds`` and ``commutator_check`` over a corpus.

    Parameters
    ----------
    spec : CorpusSpec
        Generator settings (ignored for generation when ``members`` is given).
    out_dir : str, optional
        Receives ``bounds.csv``, ``commutators.csv`` and ``summary.csv``.
    members : sequence of DistField, optional
        Explicit velocity-only fields instead of the generated corpus.

    Raises
    ------
    ValueError
        On an empty corpus.
    """
    if members is not None:
        fields = list(members)
        if not fields:
            raise ValueError("empty corpus")
        grid = fields[0].grid
        for f in fields:
            grid.check_same(f.grid)
    else:
        if spec.size == 0:
            raise ValueError("empty corpus")
        grid, vals = corpus_members(spec)
        fields = [DistField(grid, v, nonneg=True) for v in vals]
    table = kernel_table(grid, "spectral")
    bounds, comms = [], []
    for i, G in enumerate(fields):
        bounds.append(verify_bounds(G, spec.sample_dirs, lower=True, table=table))
        u2 = DistField(grid, _hermite_partner(grid, i))
        comms.append(commutator_check(G, u2, spec.comm_m, spec.comm_r))
    ratios = [c[0] / c[2] if c[2] > 0 else math.inf for c in comms]
    rep = CampaignReport(
        bounds=bounds,
        commutators=comms,
        worst_const_upper=max(b.const_upper for b in bounds),
        worst_const_lower=min(b.const_lower for b in bounds),
        min_c_lower=min(b.c_lower for b in bounds),
        max_comm_ratio=max(ratios),
        ok=all(b.c_lower > 0 for b in bounds) and all(math.isfinite(r) for r in ratios),
    )
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_csv(os.path.join(out_dir, "bounds.csv"), ("member",) + BoundReport.CSV_HEADER,
                  [(i,) + b.csv_row() for i, b in enumerate(bounds)])
        write_csv(os.path.join(out_dir, "commutators.csv"),
                  ("member", "m", "r", "lhs", "rhs1", "rhs2", "ratio"),
                  [(i, spec.comm_m, spec.comm_r, *c, q) for i, (c, q) in enumerate(zip(comms, ratios))])
        write_csv(os.path.join(out_dir, "summary.csv"), CampaignReport.SUMMARY_HEADER,
                  [rep.summary_row()])
    return rep
