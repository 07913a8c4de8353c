import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lssmg.report import SolveReport, fit_convergence_rate


class TestFit:
    def test_cubic_decay(self):
        r = [1.0] + [n ** -3.0 for n in range(1, 11)]
        gamma, C, info = fit_convergence_rate(r)
        assert gamma == pytest.approx(-3.0, abs=1e-12)
        assert C == pytest.approx(1.0, rel=1e-12)
        assert info == {"first_cycle": 1, "last_cycle": 10, "truncated": False}

    def test_constant(self):
        gamma, C, _ = fit_convergence_rate([5.0] * 8)
        assert gamma == pytest.approx(0.0, abs=1e-12) and C == pytest.approx(5.0)

    def test_keep_first(self):
        r = [n ** -2.0 for n in range(1, 6)]
        gamma, _, info = fit_convergence_rate(r, skip_first=False)
        assert gamma == pytest.approx(-2.0) and info["first_cycle"] == 1

    def test_truncates_at_first_nonpositive(self):
        r = [1.0, 1.0, 0.5, 1 / 3, 0.0, 7.0]
        gamma, _, info = fit_convergence_rate(r)
        assert gamma == pytest.approx(-1.0) and info["truncated"] and info["last_cycle"] == 3

    @pytest.mark.parametrize("r", [[1.0, 0.5, 0.2], [1.0, 0.5, 0.0, 0.1], []])
    def test_too_short(self, r):
        with pytest.raises(ValueError):
            fit_convergence_rate(r)


@settings(max_examples=60, deadline=None)
@given(gamma=st.floats(-12, 2), logC=st.floats(-5, 5), n=st.integers(3, 60))
def test_recovers_planted_power_law(gamma, logC, n):
    C = 10.0 ** logC
    r = [1.0] + [C * k ** gamma for k in range(1, n + 1)]
    g, c, _ = fit_convergence_rate(r)
    assert abs(g - gamma) < 1e-10 * max(1.0, abs(gamma))
    assert abs(math.log10(c) - logC) < 1e-9


class TestSolveReport:
    def test_properties(self):
        rep = SolveReport(residual_history=[2.0, 1.0, 0.5], gradient_history=[0.0, 0.9, 1.0])
        assert rep.iterations == 2 and rep.final_gradient == 1.0
        np.testing.assert_allclose(rep.relative_residuals(), [1, 0.5, 0.25])

    def test_finish_fits_when_long_enough(self):
        rep = SolveReport(residual_history=[1.0] + [k ** -4.0 for k in range(1, 6)])
        rep.finish(0.1, True)
        assert rep.gamma == pytest.approx(-4.0) and rep.converged

    def test_finish_skips_short_history(self):
        rep = SolveReport(residual_history=[1.0, 1e-15]).finish(0.0, True)
        assert rep.gamma is None and rep.C is None

    def test_to_dict_key_order_and_nan(self):
        rep = SolveReport(method="x", residual_history=[1.0, math.nan],
                          gradient_history=[0.0, math.inf])
        d = rep.to_dict()
        assert list(d) == ["method", "converged", "iterations", "final_gradient",
                           "final_residual", "gamma", "C", "fit_range", "estimated_flops",
                           "wall_time", "config", "extra"]
        assert d["final_gradient"] is None and d["final_residual"] is None
