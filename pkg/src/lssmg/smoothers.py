"""Block Gauss-Seidel, CG and MINRES on the Schur system.

The Krylov methods take any ``apply(x) -> A x`` callable (or an object with a
``matvec``) acting on block vectors of shape ``(m, n)``; Gauss-Seidel needs
the explicit blocks of a :class:`~lssmg.kkt.BlockTridiag`.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from . import kernels
from .errors import BreakdownError, SingularBlockError

SMOOTHER_KINDS = ("block-gauss-seidel", "conjugate-gradient", "minres")


@dataclass(frozen=True)
class SmootherSpec:
    kind: str = "conjugate-gradient"
    iterations: int = 30
    omega: float = 1.0

    def __post_init__(self):
        if self.kind not in SMOOTHER_KINDS:
            raise ValueError(f"unknown smoother {self.kind!r}")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if not 0.0 < self.omega <= 1.0:
            raise ValueError("omega must lie in (0, 1]")


@dataclass
class IterationTrace:
    residual_norms: list = field(default_factory=list)
    iterations_run: int = 0


def as_apply(op):
    return op.matvec if hasattr(op, "matvec") else op


def _dot(a, b):
    return float(np.vdot(a, b))


def invert_diagonal(A):
    """Dense inverses of the diagonal blocks; raises on the first singular one."""
    Dinv = np.empty_like(A.D)
    for k in range(A.m):
        D = A.D[k]
        if not np.all(np.isfinite(D)) or np.linalg.cond(D) > 1e14:
            raise SingularBlockError(k)
        Dinv[k] = np.linalg.inv(D)
    return Dinv


def block_gauss_seidel(A, w, rhs, sweeps, omega=1.0, Dinv=None):
    """Forward block Gauss-Seidel with under-relaxation ``omega``.

    Each block row solves its ``n x n`` diagonal block exactly; the result is
    blended with the previous iterate. Works on a copy of ``w``.
    """
    if not 0.0 < omega <= 1.0:
        raise ValueError("omega must lie in (0, 1]")
    if Dinv is None:
        Dinv = invert_diagonal(A)
    x = np.array(w, dtype=float).reshape(A.m, A.n)
    rhs = np.asarray(rhs, dtype=float).reshape(A.m, A.n)
    trace = IterationTrace([float(np.linalg.norm(rhs - A.matvec(x)))])
    for _ in range(sweeps):
        kernels.gs_sweep(A.L, Dinv, A.U, x, rhs, omega, 1)
        trace.residual_norms.append(float(np.linalg.norm(rhs - A.matvec(x))))
        trace.iterations_run += 1
    return x.reshape(np.shape(w)), trace


def under_relaxation(dt, dt_f, omega_f=1.0):
    """Relaxation factor for a grid of step ``dt`` given the finest step ``dt_f``.

    ``omega_f * dt_f / dt`` clamped to ``[0.05, omega_f]``.
    """
    if not dt_f > 0 or dt < dt_f:
        raise ValueError("need dt >= dt_f > 0")
    return min(omega_f, max(0.05, omega_f * dt_f / dt))


def conjugate_gradient(apply, w0, rhs, max_iters, rel_tol=0.0, callback=None):
    """Unpreconditioned CG; stops after ``max_iters`` or at ``||r|| <= rel_tol ||rhs||``."""
    apply = as_apply(apply)
    x = np.array(w0, dtype=float)
    r = np.asarray(rhs, dtype=float) - apply(x)
    target = rel_tol * float(np.linalg.norm(rhs))
    rr = _dot(r, r)
    trace = IterationTrace([math.sqrt(rr)])
    p = r.copy()
    for k in range(max_iters):
        if math.sqrt(rr) <= target or rr == 0.0:
            break
        Ap = apply(p)
        pAp = _dot(p, Ap)
        if pAp <= 0.0:
            raise BreakdownError(f"p^T A p = {pAp:.3e} <= 0 at iteration {k}")
        a = rr / pAp
        x += a * p
        r -= a * Ap
        rr_new = _dot(r, r)
        p *= rr_new / rr
        p += r
        rr = rr_new
        trace.residual_norms.append(math.sqrt(rr))
        trace.iterations_run += 1
        if callback is not None:
            callback(trace.iterations_run, x)
    return x, trace


def minres(apply, w0, rhs, max_iters, rel_tol=0.0, callback=None):
    """Unpreconditioned MINRES (Paige-Saunders recurrences) for symmetric operators.

    The recorded residual norms are the recurrence estimates, which are
    monotone non-increasing by construction.
    """
    apply = as_apply(apply)
    x = np.array(w0, dtype=float)
    b = np.asarray(rhs, dtype=float)
    r1 = b - apply(x)
    beta1 = float(np.linalg.norm(r1))
    trace = IterationTrace([beta1])
    target = rel_tol * float(np.linalg.norm(b))
    if beta1 == 0.0:
        return x, trace
    eps = np.finfo(float).eps
    r2 = r1.copy()
    y = r1.copy()
    oldb = 0.0
    beta = beta1
    dbar = 0.0
    epsln = 0.0
    phibar = beta1
    cs, sn = -1.0, 0.0
    w = np.zeros_like(x)
    w2 = np.zeros_like(x)
    for k in range(max_iters):
        if phibar <= target or beta == 0.0:
            break
        v = y / beta
        y = apply(v)
        if k > 0:
            y -= (beta / oldb) * r1
        alfa = _dot(v, y)
        y -= (alfa / beta) * r2
        r1, r2 = r2, y
        oldb = beta
        beta = float(np.linalg.norm(y))
        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = max(math.hypot(gbar, beta), eps)
        cs, sn = gbar / gamma, beta / gamma
        phi = cs * phibar
        phibar = sn * phibar
        w1, w2 = w2, w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x += phi * w
        trace.residual_norms.append(phibar)
        trace.iterations_run += 1
        if callback is not None:
            callback(trace.iterations_run, x)
    return x, trace


def smooth(spec, op, w, rhs, tridiag=None, omega=None, Dinv=None):
    """Run ``spec.iterations`` smoothing steps from ``w``; returns the new iterate."""
    if spec.iterations == 0:
        return np.array(w, dtype=float)
    if spec.kind == "conjugate-gradient":
        return conjugate_gradient(op, w, rhs, spec.iterations)[0]
    if spec.kind == "minres":
        return minres(op, w, rhs, spec.iterations)[0]
    if tridiag is None:
        raise ValueError("block Gauss-Seidel needs explicit blocks")
    omega = spec.omega if omega is None else omega
    if Dinv is None:
        Dinv = invert_diagonal(tridiag)
    x = np.array(w, dtype=float)
    kernels.gs_sweep(tridiag.L, Dinv, tridiag.U, x, np.asarray(rhs, dtype=float),
                     omega, spec.iterations)
    return x
