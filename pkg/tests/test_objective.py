import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from boolcd.exceptions import ConvergenceError, DimensionError
from boolcd.objective import (
    Objective, TheoryConstants, bool_of, check_spins, default_eta, grad_phi, lambda_max, mse,
    phi_real, phi_spin, power_iteration, readout, round_to_hypercube, spin_of,
)

E2 = np.array([[1.0, 2.0], [3.0, 4.0]])


def all_bool(n):
    return [np.array(w, dtype=np.uint8) for w in itertools.product([0, 1], repeat=n)]


def random_obj(rng, n=6, t=10, eta=None):
    e = rng.random((t, n))
    return Objective.build(e, rng.standard_normal(t), eta)


class TestReadoutAndMse:
    def test_column_selection(self):
        np.testing.assert_array_equal(readout(E2, [1, 0]), [1, 3])
        np.testing.assert_array_equal(readout(E2, [0, 0]), [0, 0])
        np.testing.assert_array_equal(readout(E2, [1, 1]), [3, 7])

    def test_mse_examples(self):
        assert mse(E2, [1, 0], [1, 3]) == 0.0
        assert mse(E2, [1, 0], [1, 0]) == 4.5
        assert mse(E2, [0, 0], [1, 1]) == 1.0

    def test_dimension_errors(self):
        with pytest.raises(DimensionError):
            readout(E2, [1, 0, 1])
        with pytest.raises(DimensionError):
            mse(E2, [1, 0], [1, 2, 3])
        with pytest.raises(ValueError):
            readout(E2, [1, 2])


class TestSpins:
    @given(arrays(np.uint8, st.integers(1, 20), elements=st.integers(0, 1)))
    def test_roundtrip(self, w):
        np.testing.assert_array_equal(bool_of(spin_of(w)), w)
        x = spin_of(w)
        np.testing.assert_array_equal(spin_of(bool_of(x)), x)

    def test_rejects_zero_spin(self):
        with pytest.raises(ValueError):
            check_spins([1, 0, -1])


class TestPhi:
    def test_bridge_exhaustive_small(self):
        obj = Objective(E2, np.array([1.0, 0.0]), eta=0.3)
        for w in all_bool(2):
            assert phi_spin(obj, spin_of(w)) == pytest.approx(2 * obj.mse(w) + 0.3, rel=1e-12)

    @pytest.mark.parametrize("n", [1, 5, 12])
    def test_bridge_exhaustive(self, rng, n):
        obj = random_obj(rng, n, 3 * n)
        for w in all_bool(n):
            want = obj.t * obj.mse(w) + obj.eta * n / 2
            assert phi_spin(obj, spin_of(w)) == pytest.approx(want, rel=1e-9)

    def test_exact_solution_gives_zero(self):
        obj = Objective(E2, readout(E2, [0, 1]), eta=0.0)
        assert phi_spin(obj, [-1, 1]) == 0.0

    @given(st.integers(0, 2**31), st.floats(0, 5))
    def test_lower_bound(self, seed, eta):
        rng = np.random.default_rng(seed)
        obj = random_obj(rng, 5, 7, eta)
        x = np.where(rng.random(5) < 0.5, 1, -1)
        assert phi_spin(obj, x) >= eta * 5 / 2

    def test_offset_and_half_matrix_consistent(self, rng):
        obj = random_obj(rng)
        np.testing.assert_allclose(obj.offset, obj.target - 0.5 * obj.state.sum(axis=1))
        np.testing.assert_allclose(obj.half_matrix, 0.5 * obj.state)
        with pytest.raises(ValueError):
            obj.offset[0] = 1.0

    def test_default_eta(self, rng):
        e = rng.random((10, 6))
        obj = Objective.build(e, np.zeros(10))
        assert obj.eta == pytest.approx(1e-3 * np.linalg.eigvalsh(e.T @ e)[-1] / 6, rel=1e-7)
        assert default_eta(10.0, 5) == pytest.approx(2e-3)


class TestGradient:
    def test_finite_differences(self, rng):
        obj = random_obj(rng, 8, 12)
        h = 1e-5
        for _ in range(100):
            x = rng.uniform(-2, 2, 8)
            g = grad_phi(obj, x)
            for i in range(8):
                e = np.zeros(8)
                e[i] = h
                fd = (phi_real(obj, x + e) - phi_real(obj, x - e)) / (2 * h)
                assert abs(fd - g[i]) <= 1e-5

    def test_zero_at_unconstrained_minimum(self, rng):
        obj = random_obj(rng, 5, 9, eta=0.2)
        a, m = obj.offset, obj.half_matrix
        x = np.linalg.solve(2 * m.T @ m + obj.eta * np.eye(5), 2 * m.T @ a)
        np.testing.assert_allclose(grad_phi(obj, x), 0, atol=1e-10)

    def test_zero_when_everything_vanishes(self):
        e = np.ones((2, 2))
        obj = Objective(e, e.sum(axis=1) / 2, eta=0.0)  # a = 0
        np.testing.assert_array_equal(grad_phi(obj, np.zeros(2)), 0)


class TestLambda:
    def test_identity_and_diagonal(self):
        assert lambda_max(np.eye(2)).raw == pytest.approx(1.0, rel=1e-8)
        assert lambda_max(np.diag([3.0, 4.0])).raw == pytest.approx(16.0, rel=1e-8)

    def test_hessian_bound(self):
        lm = lambda_max(np.diag([3.0, 4.0]), eta=0.5)
        assert lm.hessian == pytest.approx(8.5, rel=1e-8)

    def test_matches_dense_solver(self, rng):
        e = rng.random((50, 50))
        assert lambda_max(e).raw == pytest.approx(np.linalg.eigvalsh(e.T @ e)[-1], rel=1e-6)

    def test_nonconvergence_keeps_estimate(self):
        m = np.diag([1.0, 0.999999])
        with pytest.raises(ConvergenceError) as info:
            power_iteration(lambda v: m @ v, 2, tol=1e-30, max_iter=5)
        assert info.value.estimate > 0 and info.value.iterations == 5

    def test_smoothness_and_strong_convexity(self, rng):
        obj = random_obj(rng, 6, 10, eta=0.05)
        lam = lambda_max(obj.state).raw
        for _ in range(10_000):
            x, y = rng.uniform(-2, 2, (2, 6))
            gx, gy = grad_phi(obj, x), grad_phi(obj, y)
            assert np.linalg.norm(gx - gy) <= lam * np.linalg.norm(x - y) * (1 + 1e-12)
            fx, fy = phi_real(obj, x), phi_real(obj, y)
            d = y - x
            assert fy <= fx + gx @ d + 0.5 * lam * d @ d + 1e-9
            assert fy >= fx + gx @ d + 0.5 * obj.eta * d @ d - 1e-9


class TestRounding:
    def test_examples(self):
        np.testing.assert_array_equal(round_to_hypercube([0.3, -2.0]), [1, -1])
        np.testing.assert_array_equal(round_to_hypercube([0.0, 0.0]), [1, 1])
        with pytest.raises(ValueError):
            round_to_hypercube([np.nan])

    def test_is_nearest_vertex(self, rng):
        cube = np.array(list(itertools.product([-1, 1], repeat=8)))
        for _ in range(50):
            a = rng.standard_normal(8)
            best = cube[np.argmin(((cube - a) ** 2).sum(axis=1))]
            np.testing.assert_array_equal(round_to_hypercube(a), best)


class TestTheoryConstants:
    def test_json_roundtrip(self):
        c = TheoryConstants(2.0, 0.1, 0.5, 0.9, 0.0, 1.0)
        assert set(c.to_json()) == {"lambda", "eta", "kappa", "rho", "alpha", "beta"}
        assert TheoryConstants.from_json(c.to_json()) == c

    def test_invariants(self):
        with pytest.raises(ValueError):
            TheoryConstants(-1.0, 0.0)
        with pytest.raises(ValueError):
            TheoryConstants(1.0, 0.0, kappa=1.5)
