"""Command-line entry point: ``vpl-landau <subcommand> [options]``.

Subcommands: ``simulate``, ``verify-bounds``, ``commutators``, ``norms``
and ``solve-pb``.  Exit codes: 0 success, 2 configuration error, 3
numerical abort.

Run configuration is an INI file with flat sections::

    [grid]      dim_x, n_x, n_v, v_max
    [norms]     s, r, m0, m1, m2
    [step]      dt, lambda, transport_scheme, collision_mode, cfl_safety, cg_tol, cg_maxiter
    [picard]    enabled, max_iter, tol_e_prime, n_checkpoints
    [run]       variant, horizon
    [massless]  beta_in, energy0
    [output]    dir, log_every, snapshot_every
    [ceilings]  factor, density_growth, e_norm, inv_density, ln_beta
    [species.plus.1], [species.minus.1], ...
                weight, mean, temperature, density_amp, mode, flow_amp
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import math
import os
import re
import sys
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .diagnostics import (BlowupParams, ConservationLedger, CorpusSpec, blowup_monitor,
                          campaign_verify, continuity_residual, corpus_members, total_energy)
from .integrator import (BlowupError, CFLError, CGError, ComponentSpec, InitialSpec, PicardConfig,
                         PicardError, StepConfig, advance, force, inv_density_sup, make_initial,
                         massless_coupling, picard_solve, self_coupling, two_species_coupling)
from .norms import NormParams, NormReport, commutator_check, norm_report
from .phase_space import (DistField, GridError, SpatialField, make_grid, moments, read_snapshot,
                          set_workers, write_csv, write_snapshot)
from .poisson import (EnergyPositivityError, InternalConsistencyError, PBError, SolvabilityError,
                      field_energy, solve_coupled, solve_pb)

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "main"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

_NUMERIC_ERRORS = (BlowupError, EnergyPositivityError, PBError, CGError, PicardError,
                   InternalConsistencyError, FloatingPointError, SolvabilityError)


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is the 1-based source line when known."""

    def __init__(self, msg: str, line: Optional[int] = None, path: Optional[str] = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + msg)


class NumericalAbort(RuntimeError):
    """A monitored quantity crossed its ceiling."""


# --- configuration --------------------------------------------------------------

@dataclass(frozen=True)
class SpeciesComponent:
    weight: float = 1.0
    mean: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    temperature: Tuple[float, ...] = (1.0,)
    density_amp: float = 0.0
    mode: int = 1
    flow_amp: float = 0.0

    def to_spec(self) -> ComponentSpec:
        T = self.temperature[0] if len(self.temperature) == 1 else tuple(self.temperature)
        return ComponentSpec(self.weight, tuple(self.mean), T, self.density_amp, self.mode,
                             self.flow_amp)


@dataclass(frozen=True)
class RunConfig:
    """Effective run configuration after defaults."""

    dim_x: int = 1
    n_x: int = 32
    n_v: int = 16
    v_max: float = 6.0
    s: float = 2.6
    r: float = 0.5
    m0: float = 5.0
    m1: float = 10.0
    m2: float = 15.0
    dt: float = 0.004
    lam: float = 0.0
    transport_scheme: str = "spectral_x_upwind_v"
    collision_mode: str = "explicit"
    cfl_safety: float = 0.9
    cg_tol: float = 1e-12
    cg_maxiter: int = 1000
    picard_enabled: bool = False
    picard_max_iter: int = 10
    picard_tol: float = 1e-10
    picard_checkpoints: int = 8
    variant: str = "two_species"
    horizon: float = 0.1
    beta_in: float = 1.5
    energy0: Optional[float] = None
    output_dir: str = "out"
    log_every: int = 1
    snapshot_every: int = 0
    ceiling_factor: float = 1e3
    density_growth: float = 2.0
    e_ceiling: Optional[float] = None
    inv_density_ceiling: Optional[float] = None
    ln_beta_ceiling: Optional[float] = None
    plus: Tuple[SpeciesComponent, ...] = (SpeciesComponent(),)
    minus: Tuple[SpeciesComponent, ...] = (SpeciesComponent(),)

    def grid(self):
        return make_grid(self.dim_x, self.n_x, self.n_v, self.v_max)

    def norm_params(self) -> NormParams:
        return NormParams(self.s, self.r, self.m0, self.m1, self.m2)

    def step_config(self) -> StepConfig:
        return StepConfig(self.dt, self.lam, self.transport_scheme, self.collision_mode,
                          self.cfl_safety, self.cg_tol, self.cg_maxiter)

    def picard_config(self) -> PicardConfig:
        return PicardConfig(self.picard_max_iter, self.picard_tol, self.horizon,
                            self.picard_checkpoints, self.norm_params())

    def initial_spec(self) -> InitialSpec:
        return InitialSpec(self.variant, self.grid(), tuple(c.to_spec() for c in self.plus),
                           tuple(c.to_spec() for c in self.minus), self.beta_in, self.energy0)

    def blowup_params(self) -> BlowupParams:
        return BlowupParams(self.e_ceiling, self.inv_density_ceiling, self.ln_beta_ceiling,
                            self.norm_params())


# (section, key) -> (attribute, type)
_SCALAR_KEYS = {
    ("grid", "dim_x"): ("dim_x", int),
    ("grid", "n_x"): ("n_x", int),
    ("grid", "n_v"): ("n_v", int),
    ("grid", "v_max"): ("v_max", float),
    ("norms", "s"): ("s", float),
    ("norms", "r"): ("r", float),
    ("norms", "m0"): ("m0", float),
    ("norms", "m1"): ("m1", float),
    ("norms", "m2"): ("m2", float),
    ("step", "dt"): ("dt", float),
    ("step", "lambda"): ("lam", float),
    ("step", "transport_scheme"): ("transport_scheme", str),
    ("step", "collision_mode"): ("collision_mode", str),
    ("step", "cfl_safety"): ("cfl_safety", float),
    ("step", "cg_tol"): ("cg_tol", float),
    ("step", "cg_maxiter"): ("cg_maxiter", int),
    ("picard", "enabled"): ("picard_enabled", bool),
    ("picard", "max_iter"): ("picard_max_iter", int),
    ("picard", "tol_e_prime"): ("picard_tol", float),
    ("picard", "n_checkpoints"): ("picard_checkpoints", int),
    ("run", "variant"): ("variant", str),
    ("run", "horizon"): ("horizon", float),
    ("massless", "beta_in"): ("beta_in", float),
    ("massless", "energy0"): ("energy0", "optfloat"),
    ("output", "dir"): ("output_dir", str),
    ("output", "log_every"): ("log_every", int),
    ("output", "snapshot_every"): ("snapshot_every", int),
    ("ceilings", "factor"): ("ceiling_factor", float),
    ("ceilings", "density_growth"): ("density_growth", float),
    ("ceilings", "e_norm"): ("e_ceiling", "optfloat"),
    ("ceilings", "inv_density"): ("inv_density_ceiling", "optfloat"),
    ("ceilings", "ln_beta"): ("ln_beta_ceiling", "optfloat"),
}

_SPECIES_KEYS = ("weight", "mean", "temperature", "density_amp", "mode", "flow_amp")
_SPECIES_RE = re.compile(r"^species\.(plus|minus)\.(\d+)$")

_UNITS = {
    "v_max": "velocity box half-width (thermal units)",
    "dt": "time step (collision times)",
    "horizon": "final time (collision times)",
    "lambda": "regularization coefficient",
    "temperature": "thermal units; one value or three per-axis values",
    "mean": "drift velocity, three comma-separated values",
}


def _line_index(text: str) -> Dict[Tuple[str, Optional[str]], int]:
    """Map ``(section, key)`` and ``(section, None)`` to 1-based line numbers."""
    out: Dict[Tuple[str, Optional[str]], int] = {}
    sec = None
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"^\[([^\]]+)\]", line)
        if m:
            sec = m.group(1).strip()
            out.setdefault((sec, None), i)
            continue
        m = re.match(r"^([^=:]+?)\s*[=:]", line)
        if m and sec is not None:
            out.setdefault((sec, m.group(1).strip().lower()), i)
    return out


def _conv(raw: str, kind, what: str):
    s = raw.strip()
    if kind is bool:
        low = s.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{what}: expected a boolean, got {raw!r}")
    if kind == "optfloat":
        if s.lower() in ("", "none", "auto"):
            return None
        return float(s)
    if kind is int:
        return int(s)
    if kind is float:
        v = float(s)
        if not math.isfinite(v):
            raise ValueError(f"{what}: must be finite")
        return v
    return s


def _floats(raw: str, sizes: Sequence[int], what: str) -> Tuple[float, ...]:
    vals = tuple(float(p) for p in raw.replace(",", " ").split())
    if len(vals) not in sizes:
        raise ValueError(f"{what}: expected {' or '.join(map(str, sizes))} values, got {len(vals)}")
    return vals


def parse_config(text: str, path: Optional[str] = None) -> RunConfig:
    """Parse and validate configuration text.

    Raises
    ------
    ConfigError
        With the offending line for syntax errors, unknown keys and failed
        module preconditions.
    """
    lines = _line_index(text)
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__",
                                   inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=path or "<config>")
    except configparser.Error as exc:
        ln = getattr(exc, "lineno", None)
        msg = re.sub(r"^While reading from .*?\[line\s*\d+\]: ", "", str(exc).splitlines()[0])
        raise ConfigError(msg, ln, path) from None

    kw = {}
    src: Dict[str, int] = {}
    species: Dict[str, Dict[int, SpeciesComponent]] = {"plus": {}, "minus": {}}
    for sec in cp.sections():
        m = _SPECIES_RE.match(sec)
        if m:
            comp = {}
            for key, raw in cp.items(sec):
                ln = lines.get((sec, key))
                try:
                    if key == "mean":
                        comp["mean"] = _floats(raw, (3,), key)
                    elif key == "temperature":
                        comp["temperature"] = _floats(raw, (1, 3), key)
                    elif key == "mode":
                        comp["mode"] = int(raw)
                    elif key in _SPECIES_KEYS:
                        comp[key] = float(raw)
                    else:
                        raise ValueError(f"unknown key {key!r} in [{sec}]")
                except ValueError as exc:
                    raise ConfigError(str(exc), ln, path) from None
            species[m.group(1)][int(m.group(2))] = SpeciesComponent(**comp)
            continue
        known = {k for (s, k) in _SCALAR_KEYS if s == sec}
        if not known:
            raise ConfigError(f"unknown section [{sec}]", lines.get((sec, None)), path)
        for key, raw in cp.items(sec):
            ln = lines.get((sec, key))
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in [{sec}]", ln, path)
            attr, kind = _SCALAR_KEYS[(sec, key)]
            try:
                kw[attr] = _conv(raw, kind, key)
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}", ln, path) from None
            src[attr] = ln
    for name in ("plus", "minus"):
        if species[name]:
            kw[name] = tuple(species[name][k] for k in sorted(species[name]))
    cfg = RunConfig(**kw)
    _validate(cfg, src, lines, path)
    return cfg


def _validate(cfg: RunConfig, src: Dict[str, int], lines, path) -> None:
    def fail(msg, *attrs, sec=None):
        ln = next((src[a] for a in attrs if a in src), None)
        if ln is None and sec is not None:
            ln = lines.get((sec, None))
        raise ConfigError(msg, ln, path)

    try:
        cfg.grid()
    except (GridError, ValueError) as exc:
        fail(str(exc), "n_v", "n_x", "dim_x", "v_max", sec="grid")
    try:
        cfg.norm_params()
    except ValueError as exc:
        fail(str(exc), "s", "r", "m0", "m1", "m2", sec="norms")
    try:
        cfg.step_config()
    except ValueError as exc:
        fail(str(exc), "dt", "lam", "transport_scheme", "collision_mode", "cfl_safety", sec="step")
    if cfg.variant not in ("two_species", "massless", "landau_homogeneous"):
        fail(f"unknown variant {cfg.variant!r}", "variant", sec="run")
    if not cfg.horizon > 0:
        fail("horizon must be positive", "horizon", sec="run")
    if cfg.log_every < 1 or cfg.snapshot_every < 0:
        fail("log_every must be >= 1 and snapshot_every >= 0", "log_every", "snapshot_every",
             sec="output")
    if not cfg.beta_in > 0:
        fail("beta_in must be positive", "beta_in", sec="massless")
    if not cfg.ceiling_factor > 1 or not cfg.density_growth > 1:
        fail("ceiling factor and density_growth must exceed 1", "ceiling_factor",
             "density_growth", sec="ceilings")
    try:
        PicardConfig(cfg.picard_max_iter, cfg.picard_tol, cfg.horizon, cfg.picard_checkpoints)
    except ValueError as exc:
        fail(str(exc), "picard_max_iter", "picard_tol", "picard_checkpoints", sec="picard")
    g = cfg.grid()
    if (cfg.collision_mode == "explicit" and cfg.variant != "landau_homogeneous"
            and cfg.dt > cfg.cfl_safety * g.dx / g.v_max):
        fail(f"dt = {cfg.dt:g} exceeds the advection CFL bound "
             f"{cfg.cfl_safety * g.dx / g.v_max:g}", "dt", sec="step")


def load_config(path: str) -> RunConfig:
    """Read and validate a configuration file."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, path) from None
    return parse_config(text, path)


def _fmt(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    return str(v)


def config_to_ini(cfg: RunConfig) -> str:
    """Serialize the effective configuration; :func:`parse_config` reloads it unchanged."""
    out: List[str] = ["# effective configuration (all defaults filled in)"]
    cur = None
    for (sec, key), (attr, _) in _SCALAR_KEYS.items():
        if sec != cur:
            out.append(f"\n[{sec}]")
            cur = sec
        unit = _UNITS.get(key)
        if unit:
            out.append(f"# {key}: {unit}")
        out.append(f"{key} = {_fmt(getattr(cfg, attr))}")
    for name in ("plus", "minus"):
        for i, c in enumerate(getattr(cfg, name), start=1):
            out.append(f"\n[species.{name}.{i}]")
            for f_ in dataclasses.fields(c):
                out.append(f"{f_.name} = {_fmt(getattr(c, f_.name))}")
    return "\n".join(out) + "\n"


# --- simulate --------------------------------------------------------------------

RUN_LOG_HEADER = ("step", "t", "mass_plus", "mass_minus", "momentum_1", "momentum_2",
                  "momentum_3", "kinetic", "field_energy", "energy", "entropy", "e_norm",
                  "inv_density_plus", "inv_density_minus", "beta", "min_f", "min_rel",
                  "continuity")


def _log_row(k, state, ledger: ConservationLedger, rep, cont):
    row = ledger.record(state)
    ke = sum(moments(F)[2] for F in state.species())
    fe = field_energy(state.phi) if state.phi is not None else 0.0
    inv = tuple(rep.inv_density_sup) + (None,) * (2 - len(rep.inv_density_sup))
    mm = None if state.F_minus is None else row[2]
    return (k, row[0], row[1], mm, row[3], row[4], row[5], ke, fe, row[6], row[7],
            rep.e_norm, inv[0], inv[1], state.beta, row[8], row[9], cont)


def _snapshot(out_dir, k, state):
    fields = {"F_plus": state.F_plus.values}
    if state.F_minus is not None:
        fields["F_minus"] = state.F_minus.values
    if state.phi is not None:
        fields["phi"] = state.phi.values
    fields["t"] = np.array([state.t])
    if state.beta is not None:
        fields["beta"] = np.array([state.beta])
    write_snapshot(os.path.join(out_dir, f"snap_{k:05d}.bin"), state.grid, fields)


def _coupling(state, variant):
    if variant == "two_species":
        return two_species_coupling()
    if variant == "massless":
        return massless_coupling(state.E0)
    return self_coupling()


def run_simulation(cfg: RunConfig, out_dir: str, echo=print) -> int:
    """Drive one run; returns the exit code."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "effective_config.ini"), "w") as fh:
        fh.write(config_to_ini(cfg))
    step = cfg.step_config()
    log_rows = []
    ledger = ConservationLedger()
    code = EXIT_OK
    reason = ""
    state = None
    rep = None
    try:
        with np.errstate(over="raise", invalid="raise", divide="raise"):
            state = make_initial(cfg.initial_spec())
            bp = cfg.blowup_params().from_initial(state, cfg.ceiling_factor)
            inv0 = [inv_density_sup(F) for F in state.species()]
            acc = force(state.phi)
            if acc is not None:
                amax = float(np.max(np.abs(acc)))
                if amax > 0 and step.dt > step.cfl_safety * state.grid.dv / amax:
                    raise ConfigError(f"dt = {step.dt:g} exceeds the force CFL bound "
                                      f"{step.cfl_safety * state.grid.dv / amax:g}")
            rep = blowup_monitor(state, bp)
            log_rows.append(_log_row(0, state, ledger, rep, 0.0))
            if cfg.snapshot_every:
                _snapshot(out_dir, 0, state)
            if cfg.picard_enabled:
                code = _run_picard(cfg, state, step, out_dir, echo)
                return code
            n_steps = max(1, int(math.ceil(cfg.horizon / step.dt - 1e-9)))
            step = dataclasses.replace(step, dt=cfg.horizon / n_steps)
            for k in range(1, n_steps + 1):
                prev = state
                state = advance(state, step)
                for i, F in enumerate(state.species()):
                    if not np.all(np.isfinite(F.values)):
                        raise NumericalAbort(f"non-finite values in species {i} at step {k}")
                    if inv_density_sup(F) > cfg.density_growth * inv0[i]:
                        raise NumericalAbort(
                            f"|1/n|_inf = {inv_density_sup(F):.4g} exceeded "
                            f"{cfg.density_growth:g} x its initial value {inv0[i]:.4g} at "
                            f"t = {state.t:.6g}")
                rep = blowup_monitor(state, bp)
                if k % cfg.log_every == 0 or k == n_steps or rep.triggered:
                    cont = continuity_residual(prev, state, step.dt)
                    log_rows.append(_log_row(k, state, ledger, rep, cont))
                if cfg.snapshot_every and (k % cfg.snapshot_every == 0 or k == n_steps):
                    _snapshot(out_dir, k, state)
                if rep.triggered:
                    raise NumericalAbort(f"blow-up ceiling crossed ({', '.join(rep.flags)}) "
                                         f"at t = {state.t:.6g}")
    except ConfigError:
        raise
    except (NumericalAbort, CFLError) + _NUMERIC_ERRORS as exc:
        code = EXIT_NUMERIC
        reason = f"{type(exc).__name__}: {exc}"
    finally:
        write_csv(os.path.join(out_dir, "run_log.csv"), RUN_LOG_HEADER, log_rows)
        if rep is not None:
            write_csv(os.path.join(out_dir, "blowup_report.csv"), rep.CSV_HEADER,
                      [rep.csv_row()])
    if code == EXIT_NUMERIC:
        echo(f"numerical abort: {reason}", file=sys.stderr)
    else:
        echo(f"completed t = {state.t:.6g}; energy = {total_energy(state)!r}")
    return code


def _run_picard(cfg, state, step, out_dir, echo) -> int:
    fields = state.species()
    coupling = _coupling(state, cfg.variant)
    log = None
    try:
        final, log = picard_solve(fields if len(fields) > 1 else fields[0], coupling,
                                  cfg.picard_config(), step, density_growth=cfg.density_growth)
    except PicardError as exc:
        log = exc.log
        raise
    finally:
        if log is not None:
            rows = [(i + 1, d, log.ratios[i - 1] if i > 0 else None)
                    for i, d in enumerate(log.diffs)]
            write_csv(os.path.join(out_dir, "picard.csv"), ("iteration", "diff_e_prime", "ratio"),
                      rows)
    echo(f"picard converged in {log.iterations} iterations")
    return EXIT_OK


# --- subcommands ------------------------------------------------------------------

def _out_dir(args, default="out") -> str:
    d = args.output_dir or default
    os.makedirs(d, exist_ok=True)
    return d


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.horizon is not None:
        cfg = dataclasses.replace(cfg, horizon=args.horizon)
    return run_simulation(cfg, args.output_dir or cfg.output_dir)


def _corpus_spec(args) -> CorpusSpec:
    if args.corpus not in ("default", "maxwellian"):
        raise ConfigError(f"unknown corpus {args.corpus!r}")
    size = 1 if args.corpus == "maxwellian" else args.size
    return CorpusSpec(seed=args.seed, size=size, n_v=args.n_v, v_max=args.v_max,
                      sample_dirs=args.dirs)


def cmd_verify_bounds(args) -> int:
    spec = _corpus_spec(args)
    rep = campaign_verify(spec, _out_dir(args))
    w = _csv_stdout()
    w.writerow(rep.SUMMARY_HEADER)
    w.writerow([_fmt_cell(x) for x in rep.summary_row()])
    return EXIT_OK if rep.ok else EXIT_NUMERIC


def cmd_commutators(args) -> int:
    spec = dataclasses.replace(_corpus_spec(args), comm_m=args.m, comm_r=args.r)
    from .diagnostics import _hermite_partner
    grid, members = corpus_members(spec)
    rows = []
    for i, vals in enumerate(members):
        lhs, r1, r2 = commutator_check(DistField(grid, vals), DistField(grid, _hermite_partner(grid, i)),
                                       spec.comm_m, spec.comm_r)
        rows.append((i, spec.comm_m, spec.comm_r, lhs, r1, r2, lhs / r2 if r2 > 0 else math.inf))
    header = ("member", "m", "r", "lhs", "rhs1", "rhs2", "ratio")
    write_csv(os.path.join(_out_dir(args), "commutators.csv"), header, rows)
    w = _csv_stdout()
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt_cell(x) for x in r])
    return EXIT_OK


def _norm_params(args) -> NormParams:
    base = load_config(args.config).norm_params() if args.config else NormParams()
    over = {k: getattr(args, k) for k in ("s", "r", "m0", "m1", "m2") if getattr(args, k) is not None}
    try:
        return dataclasses.replace(base, **over)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _read_field(path: str, name: str):
    try:
        grid, fields = read_snapshot(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read snapshot {path}: {exc}") from None
    if name not in fields:
        raise ConfigError(f"snapshot {path} has no field {name!r} (has {sorted(fields)})")
    return grid, fields


def cmd_norms(args) -> int:
    p = _norm_params(args)
    grid, fields = _read_field(args.field, args.name)
    t = float(fields["t"][0]) if "t" in fields else 0.0
    rep = norm_report(DistField(grid, fields[args.name]), p, dissipation=not args.no_dissipation)
    write_csv(os.path.join(_out_dir(args), "norms.csv"), NormReport.CSV_HEADER, [rep.csv_row(t)])
    w = _csv_stdout()
    w.writerow(NormReport.CSV_HEADER)
    w.writerow([_fmt_cell(x) for x in rep.csv_row(t)])
    return EXIT_OK


def cmd_solve_pb(args) -> int:
    grid, fields = _read_field(args.n, args.name)
    vals = fields[args.name]
    if vals.shape == grid.shape:
        n = moments(DistField(grid, vals))[0]
    elif vals.shape == grid.x_shape:
        n = SpatialField(grid, vals)
    else:
        raise ConfigError(f"field {args.name!r} has shape {vals.shape}; expected a density "
                          f"{grid.x_shape} or a distribution {grid.shape}")
    if (args.energy is None) == (args.beta is None):
        raise ConfigError("give exactly one of --energy and --beta")
    if args.energy is not None:
        beta = solve_coupled(n, args.energy).beta
    else:
        beta = args.beta
    # Newton history at the final beta, from a cold start.
    hist: list = []
    phi = solve_pb(n, beta, history=hist)
    bound = float(np.max(np.abs(np.log(n.values))))
    print(f"beta = {beta!r}")
    print(f"field_energy = {field_energy(phi)!r}")
    print(f"beta*|phi|_inf = {beta * float(np.max(np.abs(phi.values)))!r} (bound |ln n|_inf = {bound!r})")
    out = _out_dir(args)
    write_csv(os.path.join(out, "pb_convergence.csv"), ("iteration", "residual"), enumerate(hist))
    write_snapshot(os.path.join(out, "pb_solution.bin"), grid,
                   {"phi": phi.values, "beta": np.array([beta]), "n": n.values})
    return EXIT_OK


def _csv_stdout():
    import csv
    return csv.writer(sys.stdout, lineterminator="\n")


def _fmt_cell(x):
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=1, help="FFT worker threads (default 1)")
    common.add_argument("--output-dir", default=None, help="directory for outputs")

    corpus = argparse.ArgumentParser(add_help=False)
    corpus.add_argument("--corpus", default="default", help="'default' or 'maxwellian'")
    corpus.add_argument("--seed", type=int, default=CorpusSpec.seed)
    corpus.add_argument("--size", type=int, default=CorpusSpec.size)
    corpus.add_argument("--n-v", type=int, default=CorpusSpec.n_v)
    corpus.add_argument("--v-max", type=float, default=CorpusSpec.v_max)
    corpus.add_argument("--dirs", type=int, default=CorpusSpec.sample_dirs)

    ap = argparse.ArgumentParser(prog="vpl-landau", description="Vlasov-Poisson-Landau solver "
                                 "and verification tools.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="run a configured simulation")
    p.add_argument("--config", required=True)
    p.add_argument("--horizon", type=float, default=None, help="override [run] horizon")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify-bounds", parents=[common, corpus], help="kernel sandwich campaign")
    p.set_defaults(func=cmd_verify_bounds)

    p = sub.add_parser("commutators", parents=[common, corpus], help="weighted commutator sweep")
    p.add_argument("--m", type=float, default=5.0)
    p.add_argument("--r", type=float, default=0.5)
    p.set_defaults(func=cmd_commutators)

    p = sub.add_parser("norms", parents=[common], help="norm report of a snapshot field")
    p.add_argument("--field", required=True, help="snapshot file")
    p.add_argument("--name", default="F_plus")
    p.add_argument("--config", default=None, help="take [norms] from this config")
    for k in ("s", "r", "m0", "m1", "m2"):
        p.add_argument(f"--{k}", type=float, default=None)
    p.add_argument("--no-dissipation", action="store_true")
    p.set_defaults(func=cmd_norms)

    p = sub.add_parser("solve-pb", parents=[common], help="Poisson-Boltzmann / energy solve")
    p.add_argument("--n", required=True, help="snapshot with a density or distribution")
    p.add_argument("--name", default="n")
    p.add_argument("--energy", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.set_defaults(func=cmd_solve_pb)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    set_workers(args.threads)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CFLError,) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERIC_ERRORS as exc:
        print(f"numerical abort: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
