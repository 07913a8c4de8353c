"""Block cyclic reduction of the Schur system.

A level with ``M = 2^k - 1`` block rows is reduced by eliminating the rows
with even 0-based index, leaving ``(M - 1) / 2`` rows. Recursing to a single
row, solving it and back-substituting gives the exact solution in one pass.
"""
from dataclasses import dataclass, field
import time

import numpy as np
import sympy

from .errors import InnerSolveError, SingularBlockError
from .kkt import BlockTridiag
from .report import SolveReport
from .smoothers import minres

COND_LIMIT = 1e14


@dataclass
class CrLevel:
    tridiag: BlockTridiag
    rhs: np.ndarray
    depth: int = 0
    # inverses applied to [L | U | b] of the eliminated rows, filled by reduce_level
    factors: dict = field(default=None, repr=False)

    @property
    def rows(self):
        return self.tridiag.m


def _row_blocks(A):
    """Per-row coupling blocks padded with zeros at the ends."""
    m, n = A.m, A.n
    Lrow = np.zeros((m, n, n))
    Urow = np.zeros((m, n, n))
    Lrow[1:] = A.L
    Urow[:-1] = A.U
    return Lrow, Urow


def _check_blocks(D, indices, depth):
    cond = np.linalg.cond(D)
    bad = np.flatnonzero(~np.isfinite(cond) | (cond > COND_LIMIT))
    if bad.size:
        raise SingularBlockError(int(indices[bad[0]]), f"cyclic reduction level {depth}")


def reduce_level(level):
    A = level.tridiag
    M = A.m
    if M < 3 or M % 2 == 0:
        raise ValueError(f"reduce_level needs an odd row count >= 3, got {M}")
    Lrow, Urow = _row_blocks(A)
    b = np.asarray(level.rhs, dtype=float).reshape(M, A.n)
    elim = np.arange(0, M, 2)
    keep = np.arange(1, M, 2)
    _check_blocks(A.D[elim], elim, level.depth)
    # D_e^{-1} [L_e, U_e, b_e] for every eliminated row in one batched solve
    stacked = np.concatenate([Lrow[elim], Urow[elim], b[elim][:, :, None]], axis=2)
    solved = np.linalg.solve(A.D[elim], stacked)
    n = A.n
    DinvL, DinvU, Dinvb = solved[:, :, :n], solved[:, :, n:2 * n], solved[:, :, 2 * n]
    level.factors = {"elim": elim, "DinvL": DinvL, "DinvU": DinvU, "Dinvb": Dinvb}

    left = keep - 1   # eliminated neighbours, as positions within elim
    right = keep + 1
    li, ri = left // 2, right // 2
    Li, Ui = Lrow[keep], Urow[keep]
    Dc = (A.D[keep] - np.einsum("kij,kjl->kil", Li, DinvU[li])
          - np.einsum("kij,kjl->kil", Ui, DinvL[ri]))
    bc = (b[keep] - np.einsum("kij,kj->ki", Li, Dinvb[li])
          - np.einsum("kij,kj->ki", Ui, Dinvb[ri]))
    Lc = -np.einsum("kij,kjl->kil", Li[1:], DinvL[li[1:]])
    Uc = -np.einsum("kij,kjl->kil", Ui[:-1], DinvU[ri[:-1]])
    return CrLevel(BlockTridiag(Lc, Dc, Uc), bc, level.depth + 1)


def back_substitute(coarse_solution, level):
    """Recover the full solution of ``level`` from the solution on its kept rows."""
    if level.factors is None:
        raise ValueError("level has not been reduced")
    A = level.tridiag
    M, n = A.m, A.n
    xc = np.asarray(coarse_solution, dtype=float).reshape(-1, n)
    f = level.factors
    x = np.zeros((M, n))
    x[1::2] = xc
    # w_e = D_e^{-1} (b_e - L_e w_{e-1} - U_e w_{e+1})
    xpad = np.zeros((M + 2, n))
    xpad[1:-1] = x
    elim = f["elim"]
    x[elim] = (f["Dinvb"] - np.einsum("kij,kj->ki", f["DinvL"], xpad[elim])
               - np.einsum("kij,kj->ki", f["DinvU"], xpad[elim + 2]))
    return x


def _pad(A, rhs):
    m, n = A.m, A.n
    k = 1
    while 2 ** k - 1 < m:
        k += 1
    M = 2 ** k - 1
    if M == m:
        return A, rhs, m
    extra = M - m
    eye = np.broadcast_to(np.eye(n), (extra, n, n))
    zeros = np.zeros((extra, n, n))
    D = np.concatenate([A.D, eye])
    L = np.concatenate([A.L, zeros])
    U = np.concatenate([A.U, zeros])
    b = np.concatenate([rhs, np.zeros((extra, n))])
    return BlockTridiag(L, D, U), b, m


def cr_pass_flops(m, n):
    """Leading-order flops of one dense reduction/back-substitution pass.

    Every eliminated row factors its diagonal block and solves for ``2n + 1``
    right-hand sides; each kept row then takes four ``n x n`` products.
    """
    total = 0
    rows = m
    while rows > 1:
        elim = (rows + 1) // 2
        total += elim * (2 * n ** 3 // 3 + 2 * n * n * (2 * n + 1))
        total += (rows // 2) * (8 * n ** 3 + 4 * n * n)
        total += elim * 4 * n * n   # back substitution
        rows //= 2
    return total + 2 * n ** 3 // 3 + 2 * n * n


def solve_cr(A, rhs):
    """One cyclic-reduction pass; the row count is padded with identity rows to ``2^k - 1``."""
    t0 = time.perf_counter()
    rhs = np.asarray(rhs, dtype=float)
    shape = rhs.shape
    b = rhs.reshape(A.m, A.n)
    Ap, bp, m = _pad(A, b)
    levels = [CrLevel(Ap, bp)]
    while levels[-1].rows > 1:
        levels.append(reduce_level(levels[-1]))
    last = levels[-1]
    _check_blocks(last.tridiag.D, np.array([0]), last.depth)
    x = np.linalg.solve(last.tridiag.D[0], last.rhs[0])[None, :]
    for level in reversed(levels[:-1]):
        x = back_substitute(x, level)
    w = x[:m]
    report = SolveReport(method="cyclic-reduction",
                         estimated_flops=float(cr_pass_flops(Ap.m, Ap.n)))
    report.residual_history = [float(np.linalg.norm(b)),
                               float(np.linalg.norm(b - A.matvec(w)))]
    report.finish(time.perf_counter() - t0, converged=True)
    report.extra["levels"] = len(levels)
    report.extra["padded_rows"] = Ap.m - m
    return w.reshape(shape), report


# ------------------------------------------------------ inversion-free variant


def _batched_cg(D, rhs, tol, max_iters):
    """CG on many small SPD systems at once; returns (x, residual norms, breakdown mask)."""
    x = np.zeros_like(rhs)
    r = rhs.copy()
    p = r.copy()
    rr = np.einsum("ki,ki->k", r, r)
    target = tol * np.sqrt(np.einsum("ki,ki->k", rhs, rhs))
    broken = np.zeros(len(rhs), dtype=bool)
    for _ in range(max_iters):
        active = (np.sqrt(rr) > target) & ~broken
        if not active.any():
            break
        Ap = np.einsum("kij,kj->ki", D, p)
        pAp = np.einsum("ki,ki->k", p, Ap)
        broken |= active & (pAp <= 0)
        active &= ~broken
        a = np.where(active, rr / np.where(active, pAp, 1.0), 0.0)
        x += a[:, None] * p
        r -= a[:, None] * Ap
        rr_new = np.einsum("ki,ki->k", r, r)
        beta = np.where(active, rr_new / np.where(rr > 0, rr, 1.0), 0.0)
        p = np.where(active[:, None], r + beta[:, None] * p, p)
        rr = rr_new
    return x, np.sqrt(rr), broken


def _inner_solve(D, y, tol, max_iters, depth, indices):
    z, res, broken = _batched_cg(D, y, tol, max_iters)
    for k in np.flatnonzero(broken):
        # indefinite block: fall back to MINRES
        z[k], trace = minres(lambda v, Dk=D[k]: Dk @ v, np.zeros(y.shape[1]), y[k],
                             max_iters, tol)
        res[k] = trace.residual_norms[-1]
    scale = np.linalg.norm(y, axis=1)
    bad = np.flatnonzero(res > tol * np.maximum(scale, np.finfo(float).tiny) * 10)
    if bad.size:
        k = bad[0]
        raise InnerSolveError(depth, int(indices[k]), float(res[k]))
    return z


def inversion_free_apply(level, x, tol=1e-10, max_iters=None):
    """Coarse-operator action of ``level`` after one reduction, without inverses.

    For each eliminated row ``e`` the product ``D_e^{-1} s_e`` is obtained by
    an inner iterative solve of ``D_e z = s_e``. ``x`` lives on the kept rows.
    """
    A = level.tridiag
    M, n = A.m, A.n
    if M < 3 or M % 2 == 0:
        raise ValueError("level needs an odd row count >= 3")
    max_iters = 20 * n if max_iters is None else max_iters
    x = np.asarray(x, dtype=float).reshape(-1, n)
    Lrow, Urow = _row_blocks(A)
    elim = np.arange(0, M, 2)
    keep = np.arange(1, M, 2)
    full = np.zeros((M + 2, n))
    full[keep + 1] = x
    # s_e = L_e x_{e-1} + U_e x_{e+1}
    s = (np.einsum("kij,kj->ki", Lrow[elim], full[elim])
         + np.einsum("kij,kj->ki", Urow[elim], full[elim + 2]))
    z = np.zeros_like(s)
    nz = np.linalg.norm(s, axis=1) > 0
    if nz.any():
        z[nz] = _inner_solve(A.D[elim][nz], s[nz], tol, max_iters, level.depth, elim[nz])
    li, ri = (keep - 1) // 2, (keep + 1) // 2
    return (np.einsum("kij,kj->ki", A.D[keep], x)
            - np.einsum("kij,kj->ki", Lrow[keep], z[li])
            - np.einsum("kij,kj->ki", Urow[keep], z[ri]))


# ------------------------------------------------------------ operation count

p_sym, q_sym, n_sym = sympy.symbols("p q n", positive=True)


@dataclass(frozen=True)
class FlopModel:
    p: int   # flops for one Jacobian-block product
    q: int   # inner iterations per inverse-block product
    l: int   # reduction levels
    n: int   # state dimension

    def __post_init__(self):
        for name in ("p", "q", "l", "n"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")


@dataclass(frozen=True)
class FlopEstimate:
    cr: sympy.Expr          # leading term of one coarse-grid iteration
    jacobi: sympy.Expr      # one Jacobi iteration on the fine system
    cr_full: sympy.Expr     # every term of the recursion
    cr_value: int = None
    jacobi_value: int = None


def _levels_for(m):
    l = 0
    while 2 ** l + 1 < m:
        l += 1
    if m < 3 or 2 ** l + 1 != m:
        raise ValueError(f"m must be of the form 2^l + 1 with l >= 1, got {m}")
    return l


def _block_costs(levels):
    """Flops to multiply a vector by L, D, U blocks after ``levels`` reductions."""
    cL = cU = 2 * p_sym
    cD = 4 * p_sym + 2 * n_sym
    for _ in range(levels):
        inv = q_sym * cD
        cL, cU, cD = (2 * cL + inv,
                      2 * cU + inv,
                      cD + 2 * (cL + cU + inv) + 2 * n_sym)
    return sympy.expand(cL), sympy.expand(cD), sympy.expand(cU)


def flop_estimate(model, m):
    """Operation-count model for cyclic reduction versus one Jacobi sweep.

    ``m = 2^l + 1``. The cyclic-reduction figure is the cost of ``q``
    products with the single remaining coarse block; its leading term is
    ``2^(l+2) p q^(l+1)``. The Jacobi figure counts the ``m`` diagonal and
    ``2(m-1)`` off-diagonal block products plus the vector updates of one
    residual evaluation: ``(8m - 4) p + (5m - 2) n``.
    """
    l = _levels_for(m)
    _, cD, _ = _block_costs(l)
    full = sympy.expand(q_sym * cD)
    poly = sympy.Poly(full, q_sym)
    top = poly.degree()
    coeff = sympy.expand(poly.coeff_monomial(q_sym ** top))
    cr = sympy.expand(coeff.coeff(p_sym) * p_sym * q_sym ** top)
    jacobi = (8 * m - 4) * p_sym + (5 * m - 2) * n_sym
    subs = {p_sym: model.p, q_sym: model.q, n_sym: model.n}
    return FlopEstimate(cr, jacobi, full, int(cr.subs(subs)), int(jacobi.subs(subs)))
