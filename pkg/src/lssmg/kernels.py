"""Hot inner loops.

Every kernel exists twice: a loop form compiled with numba and a vectorized
(or plain-Python, where the recurrence is inherently sequential) numpy form.
The public names dispatch on :data:`lssmg._accel.USE_NUMBA`.

Array conventions used throughout the package (0-based, ``m`` block rows,
block size ``n``):

* block vectors have shape ``(m, n)``
* ``D`` has shape ``(m, n, n)``; ``U[k]`` is block ``(k, k+1)`` and ``L[k]``
  is block ``(k+1, k)``, both of shape ``(m-1, n, n)``
* ``F[k]`` multiplies ``v_k`` and ``G[k]`` multiplies ``v_{k+1}`` in
  constraint row ``k``
"""
import numpy as np

from ._accel import USE_NUMBA, njit

# ---------------------------------------------------------------- Lorenz RK4


@njit
def _lorenz(x, y, z, s, r, b):
    return s * (y - x), x * (r - z) - y, x * y - b * z


@njit
def _rk4_run_nb(u0, dt, steps, s, r, b, out):
    x, y, z = u0[0], u0[1], u0[2]
    if out.shape[0] > 0:
        out[0, 0], out[0, 1], out[0, 2] = x, y, z
    h = 0.5 * dt
    for i in range(steps):
        k1x, k1y, k1z = _lorenz(x, y, z, s, r, b)
        k2x, k2y, k2z = _lorenz(x + h * k1x, y + h * k1y, z + h * k1z, s, r, b)
        k3x, k3y, k3z = _lorenz(x + h * k2x, y + h * k2y, z + h * k2z, s, r, b)
        k4x, k4y, k4z = _lorenz(x + dt * k3x, y + dt * k3y, z + dt * k3z, s, r, b)
        x += dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        y += dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        z += dt / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z)
        if not (np.isfinite(x) and np.isfinite(y) and np.isfinite(z)):
            return i + 1, x, y, z
        if out.shape[0] > 0:
            out[i + 1, 0], out[i + 1, 1], out[i + 1, 2] = x, y, z
    return -1, x, y, z


def _rk4_run_np(u0, dt, steps, s, r, b, out):
    def f(u):
        x, y, z = u
        return np.array([s * (y - x), x * (r - z) - y, x * y - b * z])

    u = np.array(u0, dtype=float)
    if out.shape[0] > 0:
        out[0] = u
    # overflow is detected below, so silence numpy's warnings about it
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(steps):
            k1 = f(u)
            k2 = f(u + 0.5 * dt * k1)
            k3 = f(u + 0.5 * dt * k2)
            k4 = f(u + dt * k3)
            u = u + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(u)):
                return i + 1, u[0], u[1], u[2]
            if out.shape[0] > 0:
                out[i + 1] = u
    return -1, u[0], u[1], u[2]


def rk4_run(u0, dt, steps, s, r, b, record=True):
    """Integrate the Lorenz system with classical RK4.

    Returns ``(states, bad_step, last_state)``. ``states`` has shape
    ``(steps+1, 3)`` when ``record`` is set, else ``(0, 3)``. ``bad_step`` is
    -1 on success, otherwise the index of the first non-finite state.
    """
    out = np.empty((steps + 1 if record else 0, 3))
    u0 = np.ascontiguousarray(u0, dtype=float)
    fn = _rk4_run_nb if USE_NUMBA else _rk4_run_np
    bad, x, y, z = fn(u0, float(dt), int(steps), float(s), float(r), float(b), out)
    return out, int(bad), np.array([x, y, z])


# ------------------------------------------------------ block-tridiagonal ops


@njit
def _tridiag_matvec_nb(L, D, U, x):
    m, n = x.shape
    y = np.zeros((m, n))
    for k in range(m):
        for a in range(n):
            acc = 0.0
            for c in range(n):
                acc += D[k, a, c] * x[k, c]
            if k > 0:
                for c in range(n):
                    acc += L[k - 1, a, c] * x[k - 1, c]
            if k < m - 1:
                for c in range(n):
                    acc += U[k, a, c] * x[k + 1, c]
            y[k, a] = acc
    return y


def _tridiag_matvec_np(L, D, U, x):
    y = np.einsum("kij,kj->ki", D, x)
    if x.shape[0] > 1:
        y[1:] += np.einsum("kij,kj->ki", L, x[:-1])
        y[:-1] += np.einsum("kij,kj->ki", U, x[1:])
    return y


def tridiag_matvec(L, D, U, x):
    """``y = A x`` for a block-tridiagonal ``A``; ``x`` has shape (m, n)."""
    if USE_NUMBA:
        return _tridiag_matvec_nb(L, D, U, np.ascontiguousarray(x))
    return _tridiag_matvec_np(L, D, U, x)


@njit
def _schur_matvec_nb(F, G, f, inv_alpha2, w):
    m, n = w.shape
    # y = B^T w on the m+1 nodes
    y = np.zeros((m + 1, n))
    for k in range(m):
        for a in range(n):
            acc_f = 0.0
            acc_g = 0.0
            for c in range(n):
                acc_f += F[k, c, a] * w[k, c]
                acc_g += G[k, c, a] * w[k, c]
            y[k, a] += acc_f
            y[k + 1, a] += acc_g
    out = np.empty((m, n))
    for k in range(m):
        fw = 0.0
        for c in range(n):
            fw += f[k, c] * w[k, c]
        for a in range(n):
            acc = 0.0
            for c in range(n):
                acc += F[k, a, c] * y[k, c] + G[k, a, c] * y[k + 1, c]
            out[k, a] = acc + inv_alpha2 * f[k, a] * fw
    return out


def _schur_matvec_np(F, G, f, inv_alpha2, w):
    m, n = w.shape
    y = np.zeros((m + 1, n))
    y[:-1] += np.einsum("kca,kc->ka", F, w)
    y[1:] += np.einsum("kca,kc->ka", G, w)
    out = np.einsum("kac,kc->ka", F, y[:-1]) + np.einsum("kac,kc->ka", G, y[1:])
    out += inv_alpha2 * f * np.einsum("kc,kc->k", f, w)[:, None]
    return out


def schur_matvec(F, G, f, inv_alpha2, w):
    """Matrix-free ``(B B^T + C C^T / alpha^2) w``."""
    if USE_NUMBA:
        return _schur_matvec_nb(F, G, f, float(inv_alpha2), np.ascontiguousarray(w))
    return _schur_matvec_np(F, G, f, inv_alpha2, w)


@njit
def _gs_sweep_nb(L, Dinv, U, x, rhs, omega, sweeps):
    m, n = x.shape
    r = np.empty(n)
    for _ in range(sweeps):
        for k in range(m):
            for a in range(n):
                acc = rhs[k, a]
                if k > 0:
                    for c in range(n):
                        acc -= L[k - 1, a, c] * x[k - 1, c]
                if k < m - 1:
                    for c in range(n):
                        acc -= U[k, a, c] * x[k + 1, c]
                r[a] = acc
            for a in range(n):
                acc = 0.0
                for c in range(n):
                    acc += Dinv[k, a, c] * r[c]
                x[k, a] = (1.0 - omega) * x[k, a] + omega * acc
    return x


def _gs_sweep_np(L, Dinv, U, x, rhs, omega, sweeps):
    m = x.shape[0]
    for _ in range(sweeps):
        for k in range(m):
            r = rhs[k].copy()
            if k > 0:
                r -= L[k - 1] @ x[k - 1]
            if k < m - 1:
                r -= U[k] @ x[k + 1]
            x[k] = (1.0 - omega) * x[k] + omega * (Dinv[k] @ r)
    return x


def gs_sweep(L, Dinv, U, x, rhs, omega, sweeps=1):
    """Forward block Gauss-Seidel sweeps, in place on ``x``."""
    fn = _gs_sweep_nb if USE_NUMBA else _gs_sweep_np
    return fn(L, Dinv, U, x, np.ascontiguousarray(rhs), float(omega), int(sweeps))


@njit
def _block_thomas_nb(L, D, U, rhs):
    m, n = rhs.shape
    Dp = np.empty((m, n, n))
    Up = np.empty((max(m - 1, 0), n, n))
    y = np.empty((m, n))
    Dp[0] = D[0]
    y[0] = rhs[0]
    for k in range(1, m):
        # L[k-1] Dp[k-1]^{-1} via solve on the transpose
        Mt = np.linalg.solve(Dp[k - 1].T, L[k - 1].T)
        M = Mt.T
        Dp[k] = D[k] - M @ U[k - 1]
        y[k] = rhs[k] - M @ y[k - 1]
    x = np.empty((m, n))
    x[m - 1] = np.linalg.solve(Dp[m - 1], y[m - 1])
    for k in range(m - 2, -1, -1):
        x[k] = np.linalg.solve(Dp[k], y[k] - U[k] @ x[k + 1])
    return x


def _block_thomas_np(L, D, U, rhs):
    m = rhs.shape[0]
    Dp = np.empty_like(D)
    y = np.empty_like(rhs)
    Dp[0] = D[0]
    y[0] = rhs[0]
    for k in range(1, m):
        M = np.linalg.solve(Dp[k - 1].T, L[k - 1].T).T
        Dp[k] = D[k] - M @ U[k - 1]
        y[k] = rhs[k] - M @ y[k - 1]
    x = np.empty_like(rhs)
    x[m - 1] = np.linalg.solve(Dp[m - 1], y[m - 1])
    for k in range(m - 2, -1, -1):
        x[k] = np.linalg.solve(Dp[k], y[k] - U[k] @ x[k + 1])
    return x


def block_thomas(L, D, U, rhs):
    """Block LU (Thomas) solve of a block-tridiagonal system."""
    if USE_NUMBA:
        return _block_thomas_nb(
            np.ascontiguousarray(L), np.ascontiguousarray(D),
            np.ascontiguousarray(U), np.ascontiguousarray(rhs, dtype=float))
    return _block_thomas_np(L, D, U, rhs)


# --------------------------------------------------------- stencil transfers


@njit
def _restrict_nb(fine, weights, offset):
    m, n = fine.shape
    mc = m // 2
    out = np.zeros((mc, n))
    for j in range(mc):
        base = 2 * j + offset
        for k in range(weights.shape[0]):
            i = base + k
            if 0 <= i < m:
                for a in range(n):
                    out[j, a] += weights[k] * fine[i, a]
    return out


@njit
def _prolong_nb(coarse, weights, offset, m, scale):
    mc, n = coarse.shape
    out = np.zeros((m, n))
    for j in range(mc):
        base = 2 * j + offset
        for k in range(weights.shape[0]):
            i = base + k
            if 0 <= i < m:
                for a in range(n):
                    out[i, a] += scale * weights[k] * coarse[j, a]
    return out


def _restrict_np(fine, weights, offset):
    m, n = fine.shape
    mc = m // 2
    out = np.zeros((mc, n))
    base = 2 * np.arange(mc) + offset
    for k, wk in enumerate(weights):
        i = base + k
        ok = (i >= 0) & (i < m)
        out[ok] += wk * fine[i[ok]]
    return out


def _prolong_np(coarse, weights, offset, m, scale):
    mc, n = coarse.shape
    out = np.zeros((m, n))
    base = 2 * np.arange(mc) + offset
    for k, wk in enumerate(weights):
        i = base + k
        ok = (i >= 0) & (i < m)
        np.add.at(out, i[ok], scale * wk * coarse[ok])
    return out


def restrict_blocks(fine, weights, offset):
    """``coarse[j] = sum_k weights[k] * fine[2j + offset + k]``, zero outside."""
    fine = np.ascontiguousarray(fine, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if USE_NUMBA:
        return _restrict_nb(fine, weights, int(offset))
    return _restrict_np(fine, weights, int(offset))


def prolong_blocks(coarse, weights, offset, m, scale):
    """Transpose of :func:`restrict_blocks` times ``scale``; output length ``m``."""
    coarse = np.ascontiguousarray(coarse, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if USE_NUMBA:
        return _prolong_nb(coarse, weights, int(offset), int(m), float(scale))
    return _prolong_np(coarse, weights, int(offset), int(m), float(scale))
