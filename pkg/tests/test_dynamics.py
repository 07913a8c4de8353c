import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lssmg.dynamics import (LorenzParams, Trajectory, integrate, jacobian_u, jacobian_xi,
                            random_initial_condition, rhs, rk4_step)
from lssmg.errors import NonFiniteStateError

from _util import P, trajectory

coords = st.floats(-30, 30, allow_nan=False)
points = st.tuples(coords, coords, st.floats(0, 60, allow_nan=False)).map(np.array)


def fd_jacobian(u, p, h=1e-5):
    cols = []
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        cols.append((rhs(u + e, p) - rhs(u - e, p)) / (2 * h))
    return np.stack(cols, axis=1)


def fd_param(u, p, which, h=1e-5):
    up = LorenzParams(**{**p.__dict__, which: getattr(p, which) + h})
    dn = LorenzParams(**{**p.__dict__, which: getattr(p, which) - h})
    return (rhs(u, up) - rhs(u, dn)) / (2 * h)


class TestRhs:
    def test_origin_is_fixed(self):
        assert np.all(rhs(np.zeros(3), LorenzParams(3.0, 7.0, 1.5)) == 0)

    def test_unit_point(self):
        np.testing.assert_allclose(rhs(np.ones(3), P), [0.0, 26.0, -5.0 / 3.0], rtol=1e-15)

    def test_nontrivial_fixed_point(self):
        c = math.sqrt(P.b * (P.r - 1))
        np.testing.assert_allclose(rhs(np.array([c, c, P.r - 1]), P), 0.0, atol=1e-12)

    def test_vectorized_matches_pointwise(self):
        u = trajectory(16).states
        np.testing.assert_array_equal(rhs(u, P), np.stack([rhs(x, P) for x in u]))

    def test_params_must_be_finite(self):
        with pytest.raises(ValueError):
            LorenzParams(s=math.inf)


class TestJacobians:
    def test_jacobian_at_origin(self):
        np.testing.assert_array_equal(jacobian_u(np.zeros(3), P),
                                      [[-P.s, P.s, 0], [P.r, -1, 0], [0, 0, -P.b]])

    def test_jacobian_fd_at_123(self):
        u = np.array([1.0, 2.0, 3.0])
        np.testing.assert_allclose(jacobian_u(u, P), fd_jacobian(u, P), atol=1e-6)

    def test_x_column(self):
        np.testing.assert_allclose(jacobian_u(np.array([0.0, 1.0, 0.0]), P)[:, 0],
                                   [-P.s, P.r, 1.0])

    def test_xi_examples(self):
        np.testing.assert_array_equal(jacobian_xi(np.ones(3), P, "s"), 0.0)
        np.testing.assert_array_equal(jacobian_xi(np.array([2.0, 0, 0]), P, "r"), [0, 2, 0])
        np.testing.assert_array_equal(jacobian_xi(np.array([1.0, 2, 3]), P, "b"), [0, 0, -3])

    @pytest.mark.parametrize("which", ["s", "r", "b"])
    def test_xi_fd(self, which):
        u = np.array([1.3, -2.0, 17.0])
        np.testing.assert_allclose(jacobian_xi(u, P, which), fd_param(u, P, which), atol=1e-6)

    def test_unknown_parameter(self):
        with pytest.raises(ValueError):
            jacobian_xi(np.ones(3), P, "q")

    def test_attractor_points_match_fd(self):
        u = trajectory(2000).states
        idx = np.random.default_rng(1).choice(len(u), 100, replace=False)
        for x in u[idx]:
            J, Jfd = jacobian_u(x, P), fd_jacobian(x, P)
            assert np.linalg.norm(J - Jfd) <= 1e-5 * np.linalg.norm(J)
            for which in "srb":
                a, b = jacobian_xi(x, P, which), fd_param(x, P, which)
                assert np.linalg.norm(a - b) <= 1e-5 * max(np.linalg.norm(a), 1e-12)

    @given(points)
    def test_jacobian_fd_property(self, u):
        J = jacobian_u(u, P)
        assert np.linalg.norm(J - fd_jacobian(u, P)) <= 1e-5 * np.linalg.norm(J)


class TestRk4:
    def test_fixed_point(self):
        c = math.sqrt(P.b * (P.r - 1))
        u = np.array([c, c, P.r - 1])
        np.testing.assert_allclose(rk4_step(u, 0.01, P), u, atol=1e-13)

    @staticmethod
    def _decay(dt, steps=1):
        # x = y = 0 decouples z' = -b z; b = 1 gives the scalar test u' = -u
        p = LorenzParams(10.0, 28.0, 1.0)
        u = np.array([0.0, 0.0, 1.0])
        for _ in range(steps):
            u = rk4_step(u, dt, p)
        return u

    def test_one_step_local_error(self):
        errs = [abs(self._decay(dt)[2] - math.exp(-dt)) for dt in (0.1, 0.05)]
        assert errs[0] < 1e-6
        assert math.log2(errs[0] / errs[1]) > 4.8   # O(dt^5) local error

    def test_global_order(self):
        errs = [abs(self._decay(1.0 / n, n)[2] - math.exp(-1.0)) for n in (10, 20, 40)]
        orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
        assert min(orders) >= 3.9

    def test_richardson_on_lorenz(self):
        # one time unit from four attractor points, reference at dt/8
        n = 400
        ratios = []
        for seed in range(4):
            u0 = trajectory(1, seed=seed).states[0]
            ref = integrate(u0, 1.0 / (8 * n), 8 * n).states[-1]
            e1 = np.linalg.norm(integrate(u0, 1.0 / n, n).states[-1] - ref)
            e2 = np.linalg.norm(integrate(u0, 0.5 / n, 2 * n).states[-1] - ref)
            ratios.append(e1 / e2)
        assert 13 < np.median(ratios) < 19

    def test_kernel_matches_step(self):
        tr = integrate(np.array([1.0, 2.0, 3.0]), 0.01, 50)
        for k in range(50):
            np.testing.assert_allclose(tr.states[k + 1], rk4_step(tr.states[k], 0.01, P),
                                       rtol=1e-14, atol=1e-14)


class TestIntegrate:
    def test_single_step(self):
        u0 = np.array([1.0, 1.0, 1.0])
        tr = integrate(u0, 0.01, 1)
        np.testing.assert_array_equal(tr.states[0], u0)
        np.testing.assert_allclose(tr.states[1], rk4_step(u0, 0.01, P), rtol=1e-15)

    def test_shape_contract(self):
        tr = integrate(np.ones(3), 0.02, 37)
        assert tr.states.shape == (38, 3) and tr.dt == 0.02 and tr.steps == 37
        np.testing.assert_allclose(tr.duration, 0.74)

    def test_on_attractor_after_spinup(self):
        z = trajectory(2000).states[:, 2]
        assert z.min() > 0 and z.max() < 60

    def test_spinup_uses_same_dt(self):
        u0 = random_initial_condition(3)
        a = integrate(u0, 0.01, 20, spinup=0.5)
        b = integrate(u0, 0.01, 70)
        np.testing.assert_array_equal(a.states, b.states[50:])
        assert a.t0 == pytest.approx(0.5)

    def test_blowup_reports_step(self):
        with pytest.raises(NonFiniteStateError) as info:
            integrate(np.array([1e5, 1e5, 1e5]), 0.5, 100)
        assert 0 <= info.value.step < 100

    @pytest.mark.parametrize("kw", [dict(dt=0.0), dict(steps=0), dict(spinup=-1.0)])
    def test_preconditions(self, kw):
        args = dict(u0=np.ones(3), dt=0.01, steps=5, spinup=0.0) | kw
        with pytest.raises(ValueError):
            integrate(**args)

    def test_seeded_initial_condition(self):
        a, b = random_initial_condition(7), random_initial_condition(7)
        np.testing.assert_array_equal(a, b)
        assert np.all(np.abs(a) <= 10)
        random_initial_condition(2 ** 64 - 1)

    def test_trajectory_invariants(self):
        with pytest.raises(ValueError):
            Trajectory(np.zeros((1, 3)), 0.1)
        with pytest.raises(ValueError):
            Trajectory(np.zeros((3, 3)), -0.1)

    def test_ergodic_average(self):
        long_run = integrate(random_initial_condition(99), 0.01, 100000, 100.0)
        zbar = long_run.states[:, 2].mean()
        assert 22.5 < zbar < 24.5
        for seed in range(5):
            z = trajectory(2000, seed=seed).states[:, 2]
            assert abs(z.mean() - zbar) <= 2.0


@settings(max_examples=25, deadline=None)
@given(st.floats(0.001, 0.02), st.integers(1, 40), st.integers(0, 2 ** 32))
def test_integrate_consecutive_states_are_rk4(dt, steps, seed):
    tr = integrate(random_initial_condition(seed), dt, steps, 1.0)
    k = steps // 2
    np.testing.assert_allclose(tr.states[k + 1], rk4_step(tr.states[k], dt, P),
                               rtol=1e-13, atol=1e-12)
