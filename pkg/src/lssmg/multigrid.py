"""Multigrid in time for the Schur system.

Three ways to build the coarse problems:

``classic``
    injection restriction, linear-interpolation prolongation and block
    Gauss-Seidel smoothing, coarsened down to a single block row. The coarse
    systems are re-assembled from the trajectory sampled at every second node
    (``classic_operator="reassemble"``) or taken as the injected submatrix of
    the fine block matrix (``"submatrix"``).
``matrix-restriction``
    Galerkin coarse operators ``R A P`` applied matrix-free, with ``P = 2 R^T``
    and ``R`` a higher-order averaging stencil.
``solution-restriction``
    the trajectory itself is averaged onto the coarse grid and the KKT system
    is re-assembled there; the same stencil pair moves residuals and
    corrections.

The multiplier ``w`` lives on step midpoints, so coarse unknown ``j`` sits
between fine unknowns ``2j`` and ``2j+1``. Values beyond either end are the
homogeneous boundary values and count as zero.
"""
from dataclasses import dataclass, field, replace
from fractions import Fraction
import math
import time

import numpy as np
import scipy.linalg

from . import kernels
from .dynamics import Trajectory
from .errors import ConfigError, DivergenceError, GuardError
from .kkt import BlockTridiag, assemble_blocks, schur_apply_flops, schur_blocks
from .report import SolveReport
from .sensitivity import ZCoordinate, direct_solve, gradient, recover_tangent
from .smoothers import (
    SmootherSpec,
    conjugate_gradient,
    invert_diagonal,
    minres,
    smooth,
    under_relaxation,
)

SCHEMES = ("classic", "matrix-restriction", "solution-restriction")
CLASSIC_OPERATORS = ("reassemble", "submatrix")
COARSE_SOLVERS = ("direct", "krylov")
DENSE_COARSE_LIMIT = 3072
COARSE_C = 0.5


_WEIGHTS = {
    1: (1, 1),
    2: (1, 2, 1),
    3: (1, 3, 3, 1),
    4: (1, 4, 6, 4, 1),
    5: (1, 5, 10, 10, 5, 1),
}


@dataclass(frozen=True)
class AveragingStencil:
    order: int
    weights: tuple

    @property
    def staggered(self):
        """Odd orders produce half-point values."""
        return len(self.weights) % 2 == 0

    @property
    def array(self):
        return np.array([float(x) for x in self.weights])

    @property
    def vector_offset(self):
        """First fine index touched by coarse unknown 0."""
        size = len(self.weights)
        return -(size // 2 - 1) if self.staggered else -(size // 2)

    def solution_offsets(self):
        """Fine-node offsets around coarse node ``2j`` used for trajectory averaging."""
        size = len(self.weights)
        if self.staggered:
            return np.arange(-(size - 1), size, 2)
        return np.arange(size) - size // 2


def averaging_weights(order):
    if order not in _WEIGHTS:
        raise ValueError(f"averaging order must be 1..5, got {order}")
    raw = _WEIGHTS[order]
    total = sum(raw)
    return AveragingStencil(order, tuple(Fraction(x, total) for x in raw))


# ------------------------------------------------------------------ transfers


def _check_even(m):
    if m % 2:
        raise ValueError(f"cannot coarsen an odd number ({m}) of block rows")


def restrict_vector(fine, stencil):
    """Average a block vector onto the coarse grid (zero beyond the ends)."""
    fine = np.asarray(fine, dtype=float)
    squeeze = fine.ndim == 1
    fine2 = fine[:, None] if squeeze else fine
    _check_even(fine2.shape[0])
    out = kernels.restrict_blocks(fine2, stencil.array, stencil.vector_offset)
    return out[:, 0] if squeeze else out


def prolong_vector(coarse, stencil, m=None):
    """``(1/c) R^T`` with ``c = 1/2``."""
    coarse = np.asarray(coarse, dtype=float)
    squeeze = coarse.ndim == 1
    coarse2 = coarse[:, None] if squeeze else coarse
    m = 2 * coarse2.shape[0] if m is None else m
    if m != 2 * coarse2.shape[0]:
        raise ValueError("fine length must be twice the coarse length")
    out = kernels.prolong_blocks(coarse2, stencil.array, stencil.vector_offset, m,
                                 1.0 / COARSE_C)
    return out[:, 0] if squeeze else out


def restriction_matrix(m, stencil):
    """Dense ``R`` for ``m`` fine scalar unknowns; verification only."""
    return restrict_vector(np.eye(m), stencil)


def prolongation_matrix(m, stencil):
    return prolong_vector(np.eye(m // 2), stencil, m)


def restrict_solution(traj, stencil):
    """Average the trajectory onto every second node; ``dt`` doubles.

    Stencil taps falling outside the trajectory are dropped and the remaining
    weights renormalized. Both endpoints are copied.
    """
    u = traj.states
    m = u.shape[0] - 1
    if m % 2:
        raise ValueError(f"trajectory step count must be even, got {m}")
    mc = m // 2
    w = stencil.array
    offs = stencil.solution_offsets()
    coarse = np.zeros((mc + 1, u.shape[1]))
    wsum = np.zeros(mc + 1)
    centers = 2 * np.arange(mc + 1)
    for wk, off in zip(w, offs):
        idx = centers + off
        ok = (idx >= 0) & (idx <= m)
        coarse[ok] += wk * u[idx[ok]]
        wsum[ok] += wk
    coarse /= wsum[:, None]
    coarse[0] = u[0]
    coarse[-1] = u[-1]
    return Trajectory(coarse, 2.0 * traj.dt, traj.t0)


def inject_solution(traj):
    """Trajectory sampled at every second node; ``dt`` doubles."""
    if traj.steps % 2:
        raise ValueError(f"trajectory step count must be even, got {traj.steps}")
    return Trajectory(traj.states[::2].copy(), 2.0 * traj.dt, traj.t0)


def inject(fine):
    """Keep fine unknowns 1, 3, 5, ... (0-based)."""
    fine = np.asarray(fine)
    _check_even(fine.shape[0])
    return fine[1::2].copy()


def interpolate_linear(coarse, m=None):
    """Linear interpolation back from injected points, zero boundary values."""
    coarse = np.asarray(coarse, dtype=float)
    m = 2 * coarse.shape[0] if m is None else m
    fine = np.zeros((m,) + coarse.shape[1:])
    fine[1::2] = coarse
    fine[0::2] = 0.5 * coarse
    fine[2::2] += 0.5 * coarse[:-1]
    return fine


def classic_coarsen(A, rhs=None):
    """Injection of the block matrix: keep every second block row and column."""
    _check_even(A.m)
    keep = np.arange(1, A.m, 2)
    D = A.D[keep].copy()
    mc = len(keep)
    # entries (2j+1, 2j+3) of a block-tridiagonal matrix are zero
    L = np.zeros((max(mc - 1, 0), A.n, A.n))
    coarse = BlockTridiag(L, D, L.copy())
    if rhs is None:
        return coarse
    return coarse, inject(np.asarray(rhs).reshape(A.m, A.n))


def galerkin_coarse_apply(fine_apply, stencil, w_coarse):
    """``R (A_h (P w_coarse))`` without assembling the coarse matrix."""
    w_coarse = np.asarray(w_coarse, dtype=float)
    return restrict_vector(fine_apply(prolong_vector(w_coarse, stencil)), stencil)


def assemble_dense(apply, m, n):
    """Columns of an operator on ``m`` block rows; verification and coarse solves."""
    if m * n > DENSE_COARSE_LIMIT * 4:
        raise GuardError("operator too large for dense assembly")
    A = np.empty((m * n, m * n))
    e = np.zeros((m, n))
    for col in range(m * n):
        e.flat[col] = 1.0
        A[:, col] = np.asarray(apply(e)).ravel()
        e.flat[col] = 0.0
    return A


# -------------------------------------------------------------------- config


@dataclass(frozen=True)
class MgConfig:
    scheme: str = "solution-restriction"
    smoother: SmootherSpec = SmootherSpec("minres", 30)
    nu1: int = 30
    nu2: int = 30
    averaging_order: int = 3
    dt_c: float = 0.2
    alpha2: float = 40.0
    max_cycles: int = 30
    rel_tol: float = 1e-12
    coarse_solver: str = "direct"
    classic_operator: str = "reassemble"
    coarse_relaxation: bool = False
    divergence_factor: float = 1e6

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.classic_operator not in CLASSIC_OPERATORS:
            raise ConfigError(f"unknown classic operator {self.classic_operator!r}")
        if self.coarse_solver not in COARSE_SOLVERS:
            raise ConfigError(f"unknown coarse solver {self.coarse_solver!r}")
        if self.nu1 < 0 or self.nu2 < 0 or self.nu1 + self.nu2 < 1:
            raise ConfigError("need nu1, nu2 >= 0 and nu1 + nu2 >= 1")
        if self.max_cycles < 1:
            raise ConfigError("max_cycles must be >= 1")
        if self.averaging_order not in _WEIGHTS:
            raise ConfigError("averaging_order must be 1..5")
        if not self.alpha2 > 0:
            raise ConfigError("alpha2 must be positive")
        if not self.dt_c > 0:
            raise ConfigError("dt_c must be positive")


# ----------------------------------------------------------------- hierarchy


@dataclass
class Level:
    m: int
    n: int
    dt: float
    apply: object
    tridiag: BlockTridiag = None
    blocks: object = None
    traj: Trajectory = None
    omega: float = 1.0
    work: float = 1.0          # cost of one apply, in fine-grid m*n units
    _Dinv: np.ndarray = field(default=None, repr=False)
    _coarse: object = field(default=None, repr=False)

    @property
    def Dinv(self):
        if self._Dinv is None:
            self._Dinv = invert_diagonal(self.tridiag)
        return self._Dinv


@dataclass
class GridHierarchy:
    scheme: str
    stencil: AveragingStencil
    levels: list

    @property
    def depth(self):
        return len(self.levels) - 1


def count_coarsenings(dt_f, dt_c):
    k = 0
    dt = dt_f
    while dt < dt_c * (1 - 1e-12):
        dt *= 2.0
        k += 1
    return k


def _galerkin_level(prev, stencil):
    fine_apply = prev.apply

    def apply(x):
        return galerkin_coarse_apply(fine_apply, stencil, x)

    return Level(prev.m // 2, prev.n, 2 * prev.dt, apply, work=prev.work)


def build_hierarchy(traj, p, which, cfg):
    m = traj.steps
    blocks = assemble_blocks(traj, p, which, cfg.alpha2)
    stencil = averaging_weights(cfg.averaging_order)
    fine_tri = schur_blocks(blocks) if cfg.scheme != "matrix-restriction" else None
    if cfg.smoother.kind == "block-gauss-seidel" and fine_tri is None:
        fine_tri = schur_blocks(blocks)
    levels = [Level(m, blocks.n, traj.dt, blocks.matvec, fine_tri, blocks, traj,
                    omega=cfg.smoother.omega)]
    if cfg.scheme == "classic":
        depth = int(round(math.log2(m))) if m > 0 else 0
        if 2 ** depth != m:
            raise ConfigError(f"classic multigrid needs a power-of-two step count, got {m}")
    else:
        depth = count_coarsenings(traj.dt, cfg.dt_c)
        if depth == 0:
            raise ConfigError("dt_c must exceed the fine step for at least one coarsening")
    if m % (2 ** depth):
        raise ConfigError(f"m = {m} is not divisible by 2^{depth}")

    for _ in range(depth):
        prev = levels[-1]
        dt = 2 * prev.dt
        if cfg.scheme == "classic":
            omega = cfg.smoother.omega
            if cfg.coarse_relaxation:
                omega = under_relaxation(dt, traj.dt, cfg.smoother.omega)
            if cfg.classic_operator == "submatrix":
                tri, ctraj = classic_coarsen(prev.tridiag), None
            else:
                ctraj = inject_solution(prev.traj)
                tri = schur_blocks(assemble_blocks(ctraj, p, which, cfg.alpha2))
            levels.append(Level(tri.m, tri.n, dt, tri.matvec, tri, traj=ctraj,
                                omega=omega, work=prev.work / 2))
        elif cfg.scheme == "matrix-restriction":
            levels.append(_galerkin_level(prev, stencil))
        else:
            ctraj = restrict_solution(prev.traj, stencil)
            cblocks = assemble_blocks(ctraj, p, which, cfg.alpha2)
            ctri = schur_blocks(cblocks)
            levels.append(Level(ctraj.steps, cblocks.n, ctraj.dt, cblocks.matvec, ctri,
                                cblocks, ctraj, omega=cfg.smoother.omega,
                                work=prev.work / 2))
    return GridHierarchy(cfg.scheme, stencil, levels)


# ------------------------------------------------------------------- cycling


def _coarse_solve(level, rhs, cfg):
    if cfg.coarse_solver == "krylov":
        x, _ = conjugate_gradient(level.apply, np.zeros_like(rhs), rhs,
                                  max_iters=20 * level.m * level.n + 100, rel_tol=1e-12)
        return x
    if level.tridiag is not None:
        return direct_solve(level.tridiag, rhs)
    if level._coarse is None:
        if level.m * level.n > DENSE_COARSE_LIMIT:
            x, _ = conjugate_gradient(level.apply, np.zeros_like(rhs), rhs,
                                      max_iters=20 * level.m * level.n, rel_tol=1e-12)
            return x
        A = assemble_dense(level.apply, level.m, level.n)
        level._coarse = scipy.linalg.cho_factor(0.5 * (A + A.T))
    return scipy.linalg.cho_solve(level._coarse, rhs.ravel()).reshape(rhs.shape)


def _smooth(level, cfg, w, rhs, sweeps):
    spec = replace(cfg.smoother, iterations=sweeps)
    if spec.kind == "block-gauss-seidel":
        return smooth(spec, level.apply, w, rhs, tridiag=level.tridiag,
                      omega=level.omega, Dinv=level.Dinv)
    return smooth(spec, level.apply, w, rhs)


def _transfer_down(hier, r):
    if hier.scheme == "classic":
        return inject(r)
    return restrict_vector(r, hier.stencil)


def _transfer_up(hier, e, m):
    if hier.scheme == "classic":
        return interpolate_linear(e, m)
    return prolong_vector(e, hier.stencil, m)


def v_cycle(hier, level, w, rhs, cfg):
    lev = hier.levels[level]
    if level == hier.depth:
        return _coarse_solve(lev, np.asarray(rhs, dtype=float), cfg)
    w = _smooth(lev, cfg, w, rhs, cfg.nu1)
    r = rhs - lev.apply(w)
    rc = _transfer_down(hier, r)
    ec = v_cycle(hier, level + 1, np.zeros_like(rc), rc, cfg)
    w = w + _transfer_up(hier, ec, lev.m)
    return _smooth(lev, cfg, w, rhs, cfg.nu2)


def cycle_work(hier, cfg):
    """Smoothing work of one V-cycle in units of fine-grid ``m*n`` operations."""
    return (cfg.nu1 + cfg.nu2) * sum(lev.work for lev in hier.levels[:-1])


def mg_solve(traj, p, which, cfg, qoi=None, hierarchy=None, rhs=None):
    """Repeat V-cycles from ``w = 0`` until ``rel_tol`` or ``max_cycles``."""
    qoi = ZCoordinate() if qoi is None else qoi
    t0 = time.perf_counter()
    hier = build_hierarchy(traj, p, which, cfg) if hierarchy is None else hierarchy
    fine = hier.levels[0]
    b = fine.blocks.b.copy() if rhs is None else np.asarray(rhs, dtype=float)
    w = np.zeros_like(b)
    r0 = float(np.linalg.norm(b))
    report = SolveReport(method=cfg.scheme, config={"mg": cfg.__dict__ | {
        "smoother": cfg.smoother.__dict__}})
    report.residual_history.append(r0)
    report.gradient_history.append(gradient(traj, recover_tangent(fine.blocks, w), qoi))
    work = cycle_work(hier, cfg)
    apply_flops = schur_apply_flops(fine.m, fine.n)
    for _ in range(cfg.max_cycles):
        w = v_cycle(hier, 0, w, b, cfg)
        res = float(np.linalg.norm(b - fine.apply(w)))
        report.residual_history.append(res)
        report.gradient_history.append(
            gradient(traj, recover_tangent(fine.blocks, w), qoi))
        report.estimated_flops += work * apply_flops
        if not math.isfinite(res) or res > cfg.divergence_factor * r0:
            report.finish(time.perf_counter() - t0, converged=False)
            raise DivergenceError(
                f"{cfg.scheme} multigrid diverged: residual {res:.3e} from {r0:.3e}",
                report)
        if res <= cfg.rel_tol * r0:
            break
    report.finish(time.perf_counter() - t0, converged=report.residual_history[-1]
                  <= cfg.rel_tol * r0)
    report.extra["levels"] = hier.depth + 1
    report.extra["cycle_work_mn"] = work
    return w, report
