"""Experiment configuration, single runs, sweeps and spectrum probes.

A configuration is a JSON document::

    {"schema": "lssmg.experiment/1",
     "dynamics":   {"s": 10, "r": 28, "b": 2.6666666666666665, "which": "r", "qoi": "z"},
     "trajectory": {"dt": 0.01, "T": 20, "m": null, "spinup": 100, "seed": 0},
     "solver":     {"scheme": "direct", "alpha2": 40, "rel_tol": 1e-12,
                    "max_iterations": 10000, "mg": {...}},
     "output":     {"dir": "lssmg-out", "name": "run", "history_csv": true,
                    "report_json": true, "trajectory_csv": false}}

Every section and key is optional; unknown keys are rejected. Exactly one of
``trajectory.m`` and ``trajectory.T`` may be set; giving ``m`` alone (or
overriding either) clears the other.
"""
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
import copy
import csv
import json
import math
import os
import re
import time

import numpy as np

from . import _accel
from .cyclic_reduction import solve_cr
from .dynamics import PARAMETERS, LorenzParams, integrate, random_initial_condition
from .errors import BreakdownError, ConfigError, DivergenceError, GuardError
from .kkt import assemble_blocks, schur_apply_flops, schur_blocks
from .multigrid import (CLASSIC_OPERATORS, COARSE_SOLVERS, MgConfig, assemble_dense,
                        build_hierarchy, count_coarsenings, mg_solve)
from .report import SolveReport
from .sensitivity import QOIS, direct_solve, gradient, recover_tangent, time_average
from .smoothers import SMOOTHER_KINDS, SmootherSpec, conjugate_gradient, minres

SCHEMA = "lssmg.experiment/1"
SOLVER_SCHEMES = ("direct", "minres", "cg", "classic-mg", "matrix-mg", "solution-mg",
                  "cyclic-reduction")
MG_SCHEMES = {"classic-mg": "classic", "matrix-mg": "matrix-restriction",
              "solution-mg": "solution-restriction"}
SPECTRUM_GUARD = 1024 * 3
U64_MAX = 2 ** 64 - 1
# vector updates per Krylov iteration, in units of m*n flops
_KRYLOV_VECTOR_WORK = {"cg": 10, "minres": 16}


@dataclass(frozen=True)
class DynamicsSection:
    s: float = 10.0
    r: float = 28.0
    b: float = 8.0 / 3.0
    which: str = "r"
    qoi: str = "z"


@dataclass(frozen=True)
class TrajectorySection:
    dt: float = 0.01
    T: float = 20.0
    m: int = None
    spinup: float = 100.0
    seed: int = 0


@dataclass(frozen=True)
class MgSection:
    smoother: str = "minres"
    omega: float = 1.0
    nu1: int = 30
    nu2: int = 30
    averaging_order: int = 3
    dt_c: float = 0.2
    max_cycles: int = 30
    coarse_solver: str = "direct"
    classic_operator: str = "reassemble"
    coarse_relaxation: bool = False
    divergence_factor: float = 1e6


@dataclass(frozen=True)
class SolverSection:
    scheme: str = "direct"
    alpha2: float = 40.0
    rel_tol: float = 1e-12
    max_iterations: int = 10000
    mg: MgSection = field(default_factory=MgSection)


@dataclass(frozen=True)
class OutputSection:
    dir: str = "lssmg-out"
    name: str = "run"
    history_csv: bool = True
    report_json: bool = True
    trajectory_csv: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    schema: str = SCHEMA
    dynamics: DynamicsSection = field(default_factory=DynamicsSection)
    trajectory: TrajectorySection = field(default_factory=TrajectorySection)
    solver: SolverSection = field(default_factory=SolverSection)
    output: OutputSection = field(default_factory=OutputSection)

    @property
    def params(self):
        d = self.dynamics
        return LorenzParams(d.s, d.r, d.b)

    @property
    def steps(self):
        t = self.trajectory
        if t.m is not None:
            return t.m
        return int(round(t.T / t.dt))

    @property
    def mg_scheme(self):
        return MG_SCHEMES.get(self.solver.scheme)

    def mg_config(self):
        s, g = self.solver, self.solver.mg
        return MgConfig(scheme=MG_SCHEMES.get(s.scheme, "solution-restriction"),
                        smoother=SmootherSpec(g.smoother, max(g.nu1, g.nu2), g.omega),
                        nu1=g.nu1, nu2=g.nu2, averaging_order=g.averaging_order,
                        dt_c=g.dt_c, alpha2=s.alpha2, max_cycles=g.max_cycles,
                        rel_tol=s.rel_tol, coarse_solver=g.coarse_solver,
                        classic_operator=g.classic_operator,
                        coarse_relaxation=g.coarse_relaxation,
                        divergence_factor=g.divergence_factor)

    def to_dict(self):
        return asdict(self)


# ------------------------------------------------------------ loading


def _typed(value, default, path):
    """Check ``value`` against the type of the field default."""
    kind = type(default)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true or false")
        return value
    if isinstance(default, int) or default is None:
        # only integer fields default to None (trajectory.m)
        if value is None and default is None:
            return None
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(f"{path}: expected an integer")
        return value
    if isinstance(default, float):
        if value is None and path == "trajectory.T":
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string")
        return value
    raise ConfigError(f"{path}: unsupported field type {kind.__name__}")


def _build(cls, data, prefix=""):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'}: expected an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        where = f" in {prefix}" if prefix else ""
        raise ConfigError(f"unknown key{'s' if len(unknown) > 1 else ''}{where}: "
                          + ", ".join(unknown))
    kwargs = {}
    defaults = cls()
    for name, value in data.items():
        path = f"{prefix}.{name}" if prefix else name
        default = getattr(defaults, name)
        if is_dataclass(default):
            kwargs[name] = _build(type(default), value, path)
        else:
            kwargs[name] = _typed(value, default, path)
    return cls(**kwargs)


def _finite(x):
    return x is not None and math.isfinite(x)


def validate(cfg):
    """Range checks on every field; raises :class:`ConfigError`."""
    if cfg.schema != SCHEMA:
        raise ConfigError(f"unsupported schema {cfg.schema!r}, expected {SCHEMA!r}")
    d, t, s, g = cfg.dynamics, cfg.trajectory, cfg.solver, cfg.solver.mg
    for name in PARAMETERS:
        if not _finite(getattr(d, name)):
            raise ConfigError(f"dynamics.{name} must be finite")
    if d.which not in PARAMETERS:
        raise ConfigError(f"dynamics.which must be one of {', '.join(PARAMETERS)}")
    if d.qoi not in QOIS:
        raise ConfigError(f"dynamics.qoi must be one of {', '.join(QOIS)}")
    if not (_finite(t.dt) and t.dt > 0):
        raise ConfigError("trajectory.dt must be positive")
    if (t.m is None) == (t.T is None):
        raise ConfigError("set exactly one of trajectory.m and trajectory.T")
    if t.m is not None and t.m < 1:
        raise ConfigError("trajectory.m must be >= 1")
    if t.T is not None:
        if not (_finite(t.T) and t.T > 0):
            raise ConfigError("trajectory.T must be positive")
        steps = round(t.T / t.dt)
        if steps < 1 or abs(steps * t.dt - t.T) > 1e-9 * t.T:
            raise ConfigError("trajectory.T must be a whole number of steps dt")
    if not (_finite(t.spinup) and t.spinup >= 0):
        raise ConfigError("trajectory.spinup must be >= 0")
    if not 0 <= t.seed <= U64_MAX:
        raise ConfigError("trajectory.seed must be an unsigned 64-bit integer")
    if s.scheme not in SOLVER_SCHEMES:
        raise ConfigError(f"solver.scheme must be one of {', '.join(SOLVER_SCHEMES)}")
    if not (_finite(s.alpha2) and s.alpha2 > 0):
        raise ConfigError("solver.alpha2 must be positive")
    if not (_finite(s.rel_tol) and 0 <= s.rel_tol < 1):
        raise ConfigError("solver.rel_tol must lie in [0, 1)")
    if s.max_iterations < 1:
        raise ConfigError("solver.max_iterations must be >= 1")
    if g.smoother not in SMOOTHER_KINDS:
        raise ConfigError(f"solver.mg.smoother must be one of {', '.join(SMOOTHER_KINDS)}")
    if not 0 < g.omega <= 1:
        raise ConfigError("solver.mg.omega must lie in (0, 1]")
    if g.coarse_solver not in COARSE_SOLVERS:
        raise ConfigError(f"solver.mg.coarse_solver must be one of {', '.join(COARSE_SOLVERS)}")
    if g.classic_operator not in CLASSIC_OPERATORS:
        raise ConfigError("solver.mg.classic_operator must be one of "
                          + ", ".join(CLASSIC_OPERATORS))
    if not (_finite(g.dt_c) and g.dt_c > 0):
        raise ConfigError("solver.mg.dt_c must be positive")
    if not (_finite(g.divergence_factor) and g.divergence_factor > 1):
        raise ConfigError("solver.mg.divergence_factor must exceed 1")
    if not re.fullmatch(r"[A-Za-z0-9_.-]+", cfg.output.name):
        raise ConfigError("output.name may only use letters, digits, '_', '-' and '.'")
    try:
        cfg.mg_config()   # MgConfig re-checks nu, order and cycle counts
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"solver.mg: {exc}") from exc
    m = cfg.steps
    if s.scheme == "classic-mg" and m & (m - 1):
        raise ConfigError(f"classic-mg needs a power-of-two step count, got {m}")
    if s.scheme in ("matrix-mg", "solution-mg"):
        depth = count_coarsenings(t.dt, g.dt_c)
        if depth == 0:
            raise ConfigError("solver.mg.dt_c must exceed trajectory.dt")
        if m % 2 ** depth:
            raise ConfigError(f"m = {m} is not divisible by 2^{depth} "
                              f"(dt {t.dt} coarsened to dt_c {g.dt_c})")
    return cfg


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(data, key, value):
    """Set ``data[a][b][c] = value`` for ``key = "a.b.c"``; returns a new dict."""
    data = copy.deepcopy(data)
    parts = key.split(".")
    if not all(parts):
        raise ConfigError(f"malformed override key {key!r}")
    node = data
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"override {key!r}: {part!r} is not a section")
        node = child
    node[parts[-1]] = value
    # m and T are alternatives: setting one clears the other
    if parts[:1] == ["trajectory"] and len(parts) == 2 and value is not None:
        other = {"m": "T", "T": "m"}.get(parts[1])
        if other:
            node[other] = None
    return data


def _normalize(data):
    traj = data.get("trajectory") if isinstance(data, dict) else None
    if isinstance(traj, dict) and traj.get("m") is not None and "T" not in traj:
        data = copy.deepcopy(data)
        data["trajectory"]["T"] = None
    return data


def parse_override(item):
    if "=" not in item:
        raise ConfigError(f"override must look like key=value, got {item!r}")
    key, text = item.split("=", 1)
    return key.strip(), _parse_value(text)


def load_config(source=None, overrides=(), seed=None):
    """Build a validated config from a path, a dict or ``None`` (defaults)."""
    if source is None:
        data = {}
    elif isinstance(source, dict):
        data = source
    else:
        try:
            with open(source, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {source}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    data = _normalize(data)
    for key, value in overrides:
        data = apply_override(data, key, value)
    if seed is not None:
        data = apply_override(data, "trajectory.seed", seed)
    return validate(_build(ExperimentConfig, data))


# ------------------------------------------------------------ output


def _g(x):
    return format(float(x), ".17g")


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if v is None else _g(v) if isinstance(v, float) else v
                             for v in row])


def write_history(path, report):
    rows = [(i, float(r), float(g)) for i, (r, g) in
            enumerate(zip(report.residual_history, report.gradient_history))]
    write_csv(path, ("cycle", "residual", "gradient"), rows)


def _json_safe(x):
    if isinstance(x, dict):
        return {str(k): _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_json_safe(obj), fh, indent=2, allow_nan=False)
        fh.write("\n")


def persist(report, cfg, out_dir, traj=None):
    """Write the history CSV, JSON report and optional trajectory; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    o = cfg.output
    paths = {}
    if o.history_csv:
        paths["history"] = os.path.join(out_dir, f"{o.name}_history.csv")
        write_history(paths["history"], report)
    if o.report_json:
        paths["report"] = os.path.join(out_dir, f"{o.name}_report.json")
        write_json(paths["report"], report.to_dict())
    if o.trajectory_csv and traj is not None:
        paths["trajectory"] = os.path.join(out_dir, f"{o.name}_trajectory.csv")
        write_csv(paths["trajectory"], ("t", "x", "y", "z"),
                  [(float(t), *map(float, u)) for t, u in zip(traj.times, traj.states)])
    return paths


# ------------------------------------------------------------ runs


def make_trajectory(cfg):
    t = cfg.trajectory
    return integrate(random_initial_condition(t.seed), t.dt, cfg.steps, t.spinup,
                     cfg.params)


def _krylov(kind, blocks, traj, qoi, s):
    b = blocks.b
    report = SolveReport(method=kind)
    zero = np.zeros_like(b)
    report.residual_history.append(float(np.linalg.norm(b)))
    report.gradient_history.append(gradient(traj, recover_tangent(blocks, zero), qoi))
    per_iter = schur_apply_flops(blocks.m, blocks.n) + _KRYLOV_VECTOR_WORK[kind] * b.size

    def record(_, x):
        r = float(np.linalg.norm(b - blocks.matvec(x)))
        report.residual_history.append(r)
        report.gradient_history.append(gradient(traj, recover_tangent(blocks, x), qoi))
        report.estimated_flops += per_iter
        if not math.isfinite(r):
            raise DivergenceError(f"{kind}: non-finite residual", report)

    solver = minres if kind == "minres" else conjugate_gradient
    try:
        w, trace = solver(blocks, zero, b, s.max_iterations, s.rel_tol, callback=record)
    except BreakdownError as exc:
        raise DivergenceError(f"{kind}: {exc}", report) from exc
    report.extra["recurrence_residual"] = trace.residual_norms[-1]
    converged = trace.residual_norms[-1] <= s.rel_tol * report.residual_history[0]
    return w, report, converged


def _one_shot(method, blocks, traj, qoi, solve):
    b = blocks.b
    report = SolveReport(method=method)
    report.residual_history.append(float(np.linalg.norm(b)))
    report.gradient_history.append(
        gradient(traj, recover_tangent(blocks, np.zeros_like(b)), qoi))
    w, inner = solve()
    report.residual_history.append(float(np.linalg.norm(b - blocks.matvec(w))))
    report.gradient_history.append(gradient(traj, recover_tangent(blocks, w), qoi))
    report.estimated_flops = inner
    report.extra["note"] = "direct method: history holds the initial and final states"
    return w, report


def _thomas_flops(m, n):
    return m * (14 * n ** 3 // 3 + 4 * n * n)


def solve_config(cfg, traj=None):
    """Run the configured solver on the trajectory; returns ``(w, report)``.

    A :class:`DivergenceError` carries the partial report.
    """
    t0 = time.perf_counter()
    traj = make_trajectory(cfg) if traj is None else traj
    p, which, qoi = cfg.params, cfg.dynamics.which, QOIS[cfg.dynamics.qoi]
    s = cfg.solver
    converged = True
    if s.scheme in MG_SCHEMES:
        try:
            w, report = mg_solve(traj, p, which, cfg.mg_config(), qoi=qoi)
        except DivergenceError as exc:
            _annotate(exc.report, cfg, traj, t0)
            raise
        converged = report.converged
    else:
        blocks = assemble_blocks(traj, p, which, s.alpha2)
        if s.scheme in ("minres", "cg"):
            try:
                w, report, converged = _krylov(s.scheme, blocks, traj, qoi, s)
            except DivergenceError as exc:
                _annotate(exc.report, cfg, traj, t0)
                exc.report.finish(time.perf_counter() - t0, converged=False)
                raise
        else:
            A = schur_blocks(blocks)
            if s.scheme == "direct":
                def solve():
                    return direct_solve(A, blocks.b), float(_thomas_flops(A.m, A.n))
            else:
                def solve():
                    w, rep = solve_cr(A, blocks.b)
                    return w, rep.estimated_flops
            w, report = _one_shot(s.scheme, blocks, traj, qoi, solve)
    report.finish(time.perf_counter() - t0, converged)
    _annotate(report, cfg, traj, t0)
    return w, report


def _annotate(report, cfg, traj, t0):
    report.config = cfg.to_dict()
    report.extra.update({
        "steps": traj.steps,
        "duration": traj.duration,
        "time_average": time_average(traj, QOIS[cfg.dynamics.qoi]),
        "backend": _accel.backend(),
    })
    if not report.wall_time:
        report.wall_time = time.perf_counter() - t0


def run_experiment(cfg, out_dir=None):
    """Solve and persist; divergence still writes the partial report before re-raising."""
    out_dir = cfg.output.dir if out_dir is None else out_dir
    traj = make_trajectory(cfg)
    try:
        _, report = solve_config(cfg, traj)
    except DivergenceError as exc:
        if exc.report is not None:
            persist(exc.report, cfg, out_dir)
        raise
    report.extra["files"] = persist(report, cfg, out_dir, traj)
    return report


def run_integrate(cfg, out_dir=None):
    """Integrate only; writes the trajectory CSV and a short JSON summary."""
    out_dir = cfg.output.dir if out_dir is None else out_dir
    t0 = time.perf_counter()
    traj = make_trajectory(cfg)
    summary = {
        "method": "integrate",
        "steps": traj.steps,
        "dt": traj.dt,
        "t0": traj.t0,
        "duration": traj.duration,
        "time_average": time_average(traj, QOIS[cfg.dynamics.qoi]),
        "final_state": traj.states[-1].tolist(),
        "wall_time": time.perf_counter() - t0,
        "backend": _accel.backend(),
        "config": cfg.to_dict(),
    }
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{cfg.output.name}_trajectory.csv")
    write_csv(path, ("t", "x", "y", "z"),
              [(float(t), *map(float, u)) for t, u in zip(traj.times, traj.states)])
    write_json(os.path.join(out_dir, f"{cfg.output.name}_integrate.json"), summary)
    return traj, summary


# ------------------------------------------------------------ sweeps


SWEEP_HEADER = ("value", "gamma", "C", "cycles_to_tol", "iterations",
                "final_relative_residual", "final_gradient", "estimated_flops", "error")


def _check_axis(cfg, axis):
    node = cfg.to_dict()
    for part in axis.split("."):
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"sweep axis {axis!r} is not a config field")
        node = node[part]
    if isinstance(node, dict):
        raise ConfigError(f"sweep axis {axis!r} names a section, not a field")


def cycles_to_tol(report, rel_tol):
    rel = report.relative_residuals()
    hits = np.flatnonzero(rel <= rel_tol)
    return int(hits[0]) if hits.size else None


def _slug(value):
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", json.dumps(value))


def sweep(cfg, axis, values, out_dir=None, persist_runs=True):
    """One run per value of the dotted config field ``axis``; returns the table rows.

    A failing run (bad value, divergence, singular block) becomes a row with an
    error marker and the sweep moves on. The table goes to ``sweep.csv``.
    """
    _check_axis(cfg, axis)
    out_dir = cfg.output.dir if out_dir is None else out_dir
    base = cfg.to_dict()
    rows = []
    trajectories = {}
    for i, value in enumerate(values):
        row = {"value": value, "error": None}
        try:
            run_cfg = validate(_build(ExperimentConfig, apply_override(base, axis, value)))
            key = json.dumps([asdict(run_cfg.trajectory), asdict(run_cfg.dynamics)],
                             sort_keys=True)
            if key not in trajectories:
                trajectories[key] = make_trajectory(run_cfg)
            traj = trajectories[key]
            try:
                _, report = solve_config(run_cfg, traj)
            except DivergenceError as exc:
                report = exc.report
                row["error"] = f"diverged: {exc}"
            if report is not None:
                rel = report.relative_residuals()
                row.update(gamma=report.gamma, C=report.C,
                           cycles_to_tol=cycles_to_tol(report, run_cfg.solver.rel_tol),
                           iterations=report.iterations,
                           final_relative_residual=float(rel[-1]),
                           final_gradient=report.final_gradient,
                           estimated_flops=report.estimated_flops)
                if persist_runs:
                    run_cfg = replace(run_cfg, output=replace(
                        run_cfg.output, name=f"{i:03d}_{_slug(value)}"))
                    persist(report, run_cfg, os.path.join(out_dir, "runs"))
        except (ConfigError, GuardError, ArithmeticError, ValueError) as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
        except Exception as exc:   # noqa: BLE001  sweep rows never abort the table
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    os.makedirs(out_dir, exist_ok=True)
    write_csv(os.path.join(out_dir, "sweep.csv"), SWEEP_HEADER,
              [[_cell(row.get(k)) for k in SWEEP_HEADER] for row in rows])
    return rows


def _cell(v):
    if isinstance(v, (list, dict)):
        return json.dumps(v)
    if isinstance(v, bool):
        return str(v).lower()
    return v


# ------------------------------------------------------------ spectra


def operator_spectrum(A):
    """Extreme eigenvalues and condition number of a dense symmetric matrix."""
    A = np.asarray(A, dtype=float)
    lam = np.linalg.eigvalsh(0.5 * (A + A.T))
    lmin, lmax = float(lam[0]), float(lam[-1])
    kappa = abs(lmax / lmin) if lmin != 0 else math.inf
    return lmin, lmax, kappa


def _dense_level(level):
    if level.tridiag is not None:
        return level.tridiag.to_dense()
    return assemble_dense(level.apply, level.m, level.n)


SPECTRUM_HEADER = ("level", "dt", "m", "lambda_min", "lambda_max", "kappa")


def spectrum_probe(cfg, coarsen_levels, out_dir=None, traj=None):
    """Dense spectra of the fine system and ``coarsen_levels`` coarsened systems.

    Uses the coarse operators of the configured multigrid scheme. Raises
    :class:`GuardError` when the fine system exceeds ``1024 * 3`` unknowns.
    """
    if cfg.mg_scheme is None:
        raise ConfigError("spectrum needs solver.scheme set to one of "
                          + ", ".join(MG_SCHEMES))
    if coarsen_levels < 0:
        raise ConfigError("coarsen_levels must be >= 0")
    n = 3
    m = cfg.steps
    if m * n > SPECTRUM_GUARD:
        raise GuardError(f"dense eigensolve limited to {SPECTRUM_GUARD} unknowns, "
                         f"got {m * n}")
    if m % 2 ** coarsen_levels:
        raise ConfigError(f"m = {m} cannot be halved {coarsen_levels} times")
    traj = make_trajectory(cfg) if traj is None else traj
    mg = cfg.mg_config()
    dt = cfg.trajectory.dt
    if mg.scheme != "classic":
        mg = replace(mg, dt_c=dt * 2 ** coarsen_levels if coarsen_levels else dt * 1.5)
    hier = build_hierarchy(traj, cfg.params, cfg.dynamics.which, mg)
    if hier.depth < coarsen_levels:
        raise ConfigError(f"scheme provides only {hier.depth} coarsenings")
    rows = []
    for k, level in enumerate(hier.levels[:coarsen_levels + 1]):
        lmin, lmax, kappa = operator_spectrum(_dense_level(level))
        rows.append({"level": k, "dt": level.dt, "m": level.m, "lambda_min": lmin,
                     "lambda_max": lmax, "kappa": kappa})
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_csv(os.path.join(out_dir, "spectrum.csv"), SPECTRUM_HEADER,
                  [[row[k] for k in SPECTRUM_HEADER] for row in rows])
    return rows
