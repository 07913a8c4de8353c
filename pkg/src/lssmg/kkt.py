"""Discrete LSS KKT blocks and the block-tridiagonal Schur complement.

The tangent constraint on step ``k`` (between nodes ``k`` and ``k+1``) reads

    F_k v_k + G_{k+1} v_{k+1} + f_k eta_k = -b_k

with ``F_i = I/dt + J(u_i)/2`` and ``G_i = -I/dt + J(u_i)/2``. Eliminating
``v = -B^T w`` and ``eta = -C^T w / alpha^2`` leaves ``A w = b`` with
``A = B B^T + C C^T / alpha^2``. The multiplier ``w`` has one block per step;
its boundary values ``w(0) = w(T) = 0`` are never stored.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import GuardError
from .dynamics import jacobian_u, jacobian_xi, rhs

DENSE_GUARD = 256


@dataclass(frozen=True)
class KktBlocks:
    F: np.ndarray      # (m, n, n), F[k] = F_k
    G: np.ndarray      # (m, n, n), G[k] = G_{k+1}
    f: np.ndarray      # (m, n), step-midpoint vector field
    b: np.ndarray      # (m, n), step-midpoint parameter derivative
    alpha2: float
    dt: float

    def __post_init__(self):
        m = self.F.shape[0]
        if not (self.G.shape[0] == self.f.shape[0] == self.b.shape[0] == m):
            raise ValueError("inconsistent block sequence lengths")
        if not self.alpha2 > 0:
            raise ValueError("alpha2 must be positive")

    @property
    def m(self):
        return self.F.shape[0]

    @property
    def n(self):
        return self.F.shape[1]

    def matvec(self, w):
        return apply_schur(self, w)


@dataclass(frozen=True)
class BlockTridiag:
    """Block-tridiagonal matrix; ``L[k]`` sits at (k+1, k), ``U[k]`` at (k, k+1)."""

    L: np.ndarray
    D: np.ndarray
    U: np.ndarray

    def __post_init__(self):
        m = self.D.shape[0]
        if self.L.shape[0] != max(m - 1, 0) or self.U.shape[0] != max(m - 1, 0):
            raise ValueError("off-diagonal block counts must be m - 1")

    @property
    def m(self):
        return self.D.shape[0]

    @property
    def n(self):
        return self.D.shape[1]

    def matvec(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.ndim == 1
        y = kernels.tridiag_matvec(self.L, self.D, self.U, x.reshape(self.m, self.n))
        return y.ravel() if flat else y

    def to_dense(self):
        if self.m > 4 * DENSE_GUARD:
            raise GuardError(f"refusing dense assembly of {self.m} block rows")
        m, n = self.m, self.n
        A = np.zeros((m * n, m * n))
        for k in range(m):
            A[k * n:(k + 1) * n, k * n:(k + 1) * n] = self.D[k]
            if k < m - 1:
                A[k * n:(k + 1) * n, (k + 1) * n:(k + 2) * n] = self.U[k]
                A[(k + 1) * n:(k + 2) * n, k * n:(k + 1) * n] = self.L[k]
        return A

    @classmethod
    def block_diagonal(cls, D):
        D = np.asarray(D, dtype=float)
        m, n = D.shape[0], D.shape[1]
        z = np.zeros((max(m - 1, 0), n, n))
        return cls(z, D, z.copy())


def assemble_blocks(traj, p, which, alpha2):
    u = traj.states
    if u.shape[0] < 2:
        raise ValueError("trajectory must have at least two states")
    dt = traj.dt
    n = u.shape[1]
    J = jacobian_u(u, p)
    eye = np.eye(n) / dt
    F = eye + 0.5 * J[:-1]
    G = -eye + 0.5 * J[1:]
    fu = rhs(u, p)
    f = 0.5 * (fu[:-1] + fu[1:])
    dxi = jacobian_xi(u, p, which)
    b = 0.5 * (dxi[:-1] + dxi[1:])
    return KktBlocks(F, G, f, b, float(alpha2), dt)


def schur_blocks(blocks):
    F, G, f = blocks.F, blocks.G, blocks.f
    D = (np.einsum("kij,klj->kil", F, F) + np.einsum("kij,klj->kil", G, G)
         + np.einsum("ki,kj->kij", f, f) / blocks.alpha2)
    U = np.einsum("kij,klj->kil", G[:-1], F[1:])
    L = np.ascontiguousarray(np.transpose(U, (0, 2, 1)))
    return BlockTridiag(L, D, U)


def _as_blocks(w, m, n):
    w = np.asarray(w, dtype=float)
    if w.size != m * n:
        raise ValueError(f"expected a vector of length {m * n}, got {w.size}")
    return w.reshape(m, n)


def apply_schur(blocks, w):
    """Matrix-free Schur product; accepts flat ``(m*n,)`` or ``(m, n)`` input."""
    w = np.asarray(w, dtype=float)
    y = kernels.schur_matvec(blocks.F, blocks.G, blocks.f, 1.0 / blocks.alpha2,
                             _as_blocks(w, blocks.m, blocks.n))
    return y.ravel() if w.ndim == 1 else y


def schur_apply_flops(m, n):
    """Floating-point operations of one matrix-free Schur product.

    Per step: ``F^T w`` and ``G^T w`` (2n^2 each), ``f^T w`` (2n), then the
    forward products with ``F``, ``G`` and ``f`` plus the additions.
    """
    return m * (8 * n * n + 6 * n)


def rhs_vector(blocks):
    return blocks.b.copy()


def residual_norm(op, w, rhs):
    """``||rhs - A w||_2`` for any object with a ``matvec``."""
    r = np.asarray(rhs) - op.matvec(w)
    return float(np.linalg.norm(r))


def dense_constraint_matrices(blocks):
    """Explicit ``B`` (mn x (m+1)n) and ``C`` (mn x m); verification only."""
    m, n = blocks.m, blocks.n
    if m > DENSE_GUARD:
        raise GuardError(f"dense KKT assembly limited to m <= {DENSE_GUARD}")
    B = np.zeros((m * n, (m + 1) * n))
    C = np.zeros((m * n, m))
    for k in range(m):
        B[k * n:(k + 1) * n, k * n:(k + 1) * n] = blocks.F[k]
        B[k * n:(k + 1) * n, (k + 1) * n:(k + 2) * n] = blocks.G[k]
        C[k * n:(k + 1) * n, k] = blocks.f[k]
    return B, C


def dense_kkt(blocks):
    """Full symmetric KKT matrix and right-hand side over ``(v, eta, w)``."""
    B, C = dense_constraint_matrices(blocks)
    nv, ne, nw = B.shape[1], C.shape[1], B.shape[0]
    K = np.zeros((nv + ne + nw,) * 2)
    K[:nv, :nv] = np.eye(nv)
    K[nv:nv + ne, nv:nv + ne] = blocks.alpha2 * np.eye(ne)
    K[:nv, nv + ne:] = B.T
    K[nv:nv + ne, nv + ne:] = C.T
    K[nv + ne:, :nv] = B
    K[nv + ne:, nv:nv + ne] = C
    rhs = np.zeros(nv + ne + nw)
    rhs[nv + ne:] = -blocks.b.ravel()
    return K, rhs
