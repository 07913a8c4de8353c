"""Solve reports and convergence-rate fitting."""
from dataclasses import dataclass, field
import math

import numpy as np


def fit_convergence_rate(residuals, skip_first=True):
    """Fit ``log10 ||r|| = gamma log10 N + log10 C`` over cycles ``N = 1, 2, ...``.

    ``residuals[0]`` is the initial residual (cycle 0) and is dropped when
    ``skip_first`` is set. Only the positive prefix is used. Returns
    ``(gamma, C, info)`` where ``info`` records the cycle range and whether
    the series had to be truncated.
    """
    r = np.asarray(residuals, dtype=float)
    cycles = np.arange(len(r), dtype=float)
    if skip_first:
        r, cycles = r[1:], cycles[1:]
    else:
        cycles = cycles + 1
    bad = np.flatnonzero(~(r > 0))
    truncated = bad.size > 0
    if truncated:
        r, cycles = r[:bad[0]], cycles[:bad[0]]
    if r.size < 3:
        raise ValueError("need at least three positive residuals to fit a rate")
    slope, intercept = np.polyfit(np.log10(cycles), np.log10(r), 1)
    info = {"first_cycle": int(cycles[0]), "last_cycle": int(cycles[-1]),
            "truncated": bool(truncated)}
    return float(slope), float(10.0 ** intercept), info


@dataclass
class SolveReport:
    method: str = ""
    residual_history: list = field(default_factory=list)
    gradient_history: list = field(default_factory=list)
    estimated_flops: float = 0.0
    wall_time: float = 0.0
    converged: bool = False
    gamma: float = None
    C: float = None
    fit_range: dict = None
    config: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def final_gradient(self):
        return self.gradient_history[-1] if self.gradient_history else None

    @property
    def iterations(self):
        return len(self.residual_history) - 1

    def relative_residuals(self):
        r = np.asarray(self.residual_history, dtype=float)
        return r / r[0] if r.size and r[0] > 0 else r

    def finish(self, wall_time, converged):
        self.wall_time = wall_time
        self.converged = bool(converged)
        if len(self.residual_history) >= 4:
            try:
                self.gamma, self.C, self.fit_range = fit_convergence_rate(
                    self.residual_history)
            except ValueError:
                pass
        return self

    def to_dict(self):
        def clean(x):
            if isinstance(x, float) and not math.isfinite(x):
                return None
            return x

        return {
            "method": self.method,
            "converged": self.converged,
            "iterations": self.iterations,
            "final_gradient": clean(self.final_gradient),
            "final_residual": clean(self.residual_history[-1]) if self.residual_history else None,
            "gamma": self.gamma,
            "C": self.C,
            "fit_range": self.fit_range,
            "estimated_flops": self.estimated_flops,
            "wall_time": self.wall_time,
            "config": self.config,
            "extra": self.extra,
        }
