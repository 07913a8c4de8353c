"""Tangent recovery, the shadowing gradient and the direct block solve."""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import GuardError, SingularBlockError

DIRECT_GUARD = 4096


@dataclass(frozen=True)
class TangentSolution:
    v: np.ndarray     # (m+1, n) node values
    eta: np.ndarray   # (m,) step values


class QuantityOfInterest:
    """A time-averaged objective ``J(u)`` and its state gradient."""

    def evaluate(self, u):
        raise NotImplementedError

    def gradient_u(self, u):
        raise NotImplementedError


class ZCoordinate(QuantityOfInterest):
    def evaluate(self, u):
        return np.asarray(u)[..., 2]

    def gradient_u(self, u):
        g = np.zeros(np.shape(u))
        g[..., 2] = 1.0
        return g


class Component(QuantityOfInterest):
    """``J(u) = u[index]``."""

    def __init__(self, index):
        self.index = index

    def evaluate(self, u):
        return np.asarray(u)[..., self.index]

    def gradient_u(self, u):
        g = np.zeros(np.shape(u))
        g[..., self.index] = 1.0
        return g


QOIS = {"x": Component(0), "y": Component(1), "z": ZCoordinate()}


def recover_tangent(blocks, w):
    """``v = -B^T w`` and ``eta = -C^T w / alpha^2``."""
    w = np.asarray(w, dtype=float).reshape(blocks.m, blocks.n)
    v = np.zeros((blocks.m + 1, blocks.n))
    v[:-1] -= np.einsum("kca,kc->ka", blocks.F, w)
    v[1:] -= np.einsum("kca,kc->ka", blocks.G, w)
    eta = -np.einsum("kc,kc->k", blocks.f, w) / blocks.alpha2
    return TangentSolution(v, eta)


def _trapezoid_mean(values):
    values = np.asarray(values, dtype=float)
    return (0.5 * (values[0] + values[-1]) + values[1:-1].sum(axis=0)) / (len(values) - 1)


def time_average(traj, qoi):
    """Trapezoidal finite-time average of ``J`` over the trajectory."""
    return float(_trapezoid_mean(qoi.evaluate(traj.states)))


def gradient(traj, tangent, qoi):
    """mean<dJ/du, v> + mean(eta J) - mean(eta) mean(J)."""
    u = traj.states
    dJdu_v = np.einsum("ka,ka->k", qoi.gradient_u(u), tangent.v)
    J_nodes = qoi.evaluate(u)
    J_mid = 0.5 * (J_nodes[:-1] + J_nodes[1:])
    eta = tangent.eta
    return float(_trapezoid_mean(dJdu_v) + np.mean(eta * J_mid)
                 - np.mean(eta) * _trapezoid_mean(J_nodes))


def direct_solve(A, rhs):
    """Block Thomas elimination; ``A`` is a :class:`~lssmg.kkt.BlockTridiag`."""
    if A.m > DIRECT_GUARD:
        raise GuardError(f"direct solve limited to {DIRECT_GUARD} block rows")
    rhs = np.asarray(rhs, dtype=float)
    shape = rhs.shape
    try:
        x = kernels.block_thomas(A.L, A.D, A.U, rhs.reshape(A.m, A.n))
    except np.linalg.LinAlgError as exc:
        raise SingularBlockError(-1, "block Thomas pivot") from exc
    if not np.all(np.isfinite(x)):
        raise SingularBlockError(-1, "block Thomas pivot")
    return x.reshape(shape)
