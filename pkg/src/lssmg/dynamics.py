"""Lorenz system: right-hand side, Jacobians, RK4 trajectories."""
from dataclasses import dataclass
import math

import numpy as np

from . import kernels
from .errors import NonFiniteStateError

PARAMETERS = ("s", "r", "b")


@dataclass(frozen=True)
class LorenzParams:
    s: float = 10.0
    r: float = 28.0
    b: float = 8.0 / 3.0

    def __post_init__(self):
        for name in PARAMETERS:
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"parameter {name} must be finite")


@dataclass(frozen=True)
class Trajectory:
    """States ``u_0..u_m`` sampled every ``dt`` starting at ``t0``."""

    states: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        if states.ndim != 2 or states.shape[0] < 2:
            raise ValueError("a trajectory needs at least two states")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "states", states)

    @property
    def steps(self):
        return self.states.shape[0] - 1

    @property
    def duration(self):
        return self.steps * self.dt

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.steps + 1)


def rhs(u, p):
    """Lorenz vector field; ``u`` may be a single state or a stack ``(..., 3)``."""
    u = np.asarray(u, dtype=float)
    x, y, z = u[..., 0], u[..., 1], u[..., 2]
    return np.stack([p.s * (y - x), x * (p.r - z) - y, x * y - p.b * z], axis=-1)


def jacobian_u(u, p):
    u = np.asarray(u, dtype=float)
    x, y, z = u[..., 0], u[..., 1], u[..., 2]
    J = np.zeros(u.shape[:-1] + (3, 3))
    J[..., 0, 0] = -p.s
    J[..., 0, 1] = p.s
    J[..., 1, 0] = p.r - z
    J[..., 1, 1] = -1.0
    J[..., 1, 2] = -x
    J[..., 2, 0] = y
    J[..., 2, 1] = x
    J[..., 2, 2] = -p.b
    return J


def jacobian_xi(u, p, which):
    """Derivative of the vector field with respect to one parameter."""
    u = np.asarray(u, dtype=float)
    x, y, z = u[..., 0], u[..., 1], u[..., 2]
    out = np.zeros(u.shape)
    if which == "s":
        out[..., 0] = y - x
    elif which == "r":
        out[..., 1] = x
    elif which == "b":
        out[..., 2] = -z
    else:
        raise ValueError(f"unknown parameter {which!r}; expected one of {PARAMETERS}")
    return out


def rk4_step(u, dt, p):
    if not dt > 0:
        raise ValueError("dt must be positive")
    u = np.asarray(u, dtype=float)
    k1 = rhs(u, p)
    k2 = rhs(u + 0.5 * dt * k1, p)
    k3 = rhs(u + 0.5 * dt * k2, p)
    k4 = rhs(u + dt * k3, p)
    return u + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def random_initial_condition(seed):
    """Uniform draw from [-10, 10]^3; reproducible for a given seed."""
    return np.random.default_rng(seed).uniform(-10.0, 10.0, size=3)


def integrate(u0, dt, steps, spinup=0.0, p=LorenzParams()):
    """Spin up for ``spinup`` time units (same ``dt``), then record ``steps`` steps."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if spinup < 0:
        raise ValueError("spinup must be >= 0")
    n_spin = int(round(spinup / dt))
    u = np.asarray(u0, dtype=float)
    if n_spin:
        _, bad, u = kernels.rk4_run(u, dt, n_spin, p.s, p.r, p.b, record=False)
        if bad >= 0:
            raise NonFiniteStateError(bad)
    states, bad, _ = kernels.rk4_run(u, dt, steps, p.s, p.r, p.b)
    if bad >= 0:
        raise NonFiniteStateError(n_spin + bad)
    return Trajectory(states, dt, t0=n_spin * dt)
