import numpy as np
import pytest
from hypothesis import given, strategies as st
from sklearn.base import clone

from boolcd.exceptions import DegenerateReservoirError, DimensionError, InputLengthError
from boolcd.objective import lambda_max
from boolcd.reservoir import (
    DISTRIBUTION_MOMENTS, DISTRIBUTIONS, EchoStateReservoir, ReservoirConfig, StateMatrix,
    drive_reservoir, random_state_matrix, reservoir_weights,
)
from boolcd.tasks import mackey_glass


def scalar_esn(cfg, inp, washout):
    # straight-line re-simulation with explicit loops
    w, w_in, b = reservoir_weights(cfg)
    n = cfg.n_nodes
    x = [0.0] * n
    rows = []
    for t, u in enumerate(inp):
        new = []
        for i in range(n):
            acc = b[i] + w_in[i] * u
            for j in range(n):
                acc += w[i, j] * x[j]
            new.append((1 - cfg.leak_rate) * x[i] + cfg.leak_rate * np.tanh(acc))
        x = new
        if t >= washout:
            rows.append([v * v for v in x])
    return np.array(rows), max(abs(v) for r in rows for v in r) ** 0.5


class TestConfig:
    @pytest.mark.parametrize("kw", [{"n_nodes": 0}, {"n_nodes": 4, "leak_rate": 0.0},
                                    {"n_nodes": 4, "leak_rate": 1.5}, {"n_nodes": 4, "connectivity": 0.0},
                                    {"n_nodes": 4, "spectral_radius": -1.0}, {"n_nodes": 4, "seed": -1}])
    def test_rejects_invalid(self, kw):
        with pytest.raises(ValueError):
            ReservoirConfig(**kw)

    def test_spectral_radius_is_applied(self):
        w, _, _ = reservoir_weights(ReservoirConfig(50, spectral_radius=0.7, connectivity=0.3, seed=3))
        assert np.max(np.abs(np.linalg.eigvals(w))) == pytest.approx(0.7, rel=1e-10)


class TestStateMatrix:
    def test_rejects_negative_and_nonfinite(self):
        with pytest.raises(ValueError):
            StateMatrix([[1.0, -0.1]])
        with pytest.raises(ValueError):
            StateMatrix([[1.0, np.nan]])
        with pytest.raises(DimensionError):
            StateMatrix([1.0, 2.0])

    def test_is_read_only_copy(self):
        src = np.ones((2, 3))
        s = StateMatrix(src)
        src[0, 0] = 5.0
        assert s.values[0, 0] == 1.0
        with pytest.raises(ValueError):
            s.values[0, 0] = 2.0
        assert s.horizon == 2 and s.n_nodes == 3


class TestDrive:
    def test_zero_input_is_degenerate(self):
        cfg = ReservoirConfig(4, seed=1)
        with pytest.raises(DegenerateReservoirError, match="degenerate reservoir"):
            drive_reservoir(cfg, np.zeros(3), washout=0)

    def test_short_input(self):
        cfg = ReservoirConfig(4)
        with pytest.raises(InputLengthError):
            drive_reservoir(cfg, np.ones(10), washout=5, horizon=6)
        with pytest.raises(InputLengthError):
            drive_reservoir(cfg, np.ones(5), washout=5)

    def test_large_run_is_deterministic(self):
        cfg = ReservoirConfig(961, seed=7)
        inp = mackey_glass(1100, seed=1)
        a = drive_reservoir(cfg, inp, washout=100)
        b = drive_reservoir(cfg, inp, washout=100)
        assert a.shape == (1000, 961)
        assert a == b

    def test_matches_scalar_resimulation(self):
        cfg = ReservoirConfig(8, leak_rate=0.6, connectivity=0.5, bias_scale=0.2, seed=11)
        inp = mackey_glass(60, seed=2)
        got = drive_reservoir(cfg, inp, washout=10).values
        want, smax = scalar_esn(cfg, inp, 10)
        assert got.shape == (50, 8)
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-15)
        assert got.min() >= 0 and got.max() <= smax ** 2 + 1e-15

    def test_horizon_truncates(self):
        cfg = ReservoirConfig(5, seed=2)
        inp = mackey_glass(80, seed=0)
        full = drive_reservoir(cfg, inp, washout=10).values
        part = drive_reservoir(cfg, inp, washout=10, horizon=20).values
        np.testing.assert_array_equal(full[:20], part)


class TestRandomMatrix:
    def test_support_and_determinism(self):
        a = random_state_matrix(2, 2, "uniform01", 5)
        assert np.all((a.values >= 0) & (a.values < 1))
        assert a == random_state_matrix(2, 2, "uniform01", 5)

    def test_unknown_distribution(self):
        with pytest.raises(ValueError):
            random_state_matrix(2, 2, "cauchy", 0)

    @pytest.mark.parametrize("dist", DISTRIBUTIONS)
    def test_moments(self, dist):
        v = random_state_matrix(300, 300, dist, 1).values
        mean, var = DISTRIBUTION_MOMENTS[dist]
        assert v.mean() == pytest.approx(mean, rel=0.02)
        assert v.var() == pytest.approx(var, rel=0.05)

    def test_centered_top_eigenvalue_near_random_matrix_edge(self):
        n = t = 1000
        v = random_state_matrix(n, t, "abs_gaussian", 3).values
        _, var = DISTRIBUTION_MOMENTS["abs_gaussian"]
        edge = (np.sqrt(n) + np.sqrt(t)) ** 2 * var
        lam = lambda_max(v - v.mean()).raw
        assert 0.5 * edge <= lam <= 2 * edge
        # without centering the mean term dominates
        assert lambda_max(v).raw > 100 * edge

    @given(st.integers(1, 6), st.integers(1, 6), st.sampled_from(DISTRIBUTIONS), st.integers(0, 2**32))
    def test_nonnegative_any_seed(self, n, t, dist, seed):
        v = random_state_matrix(n, t, dist, seed).values
        assert v.shape == (t, n) and np.all(v >= 0)


class TestEstimator:
    def test_transform_matches_function(self):
        est = EchoStateReservoir(n_nodes=12, washout=20, random_state=4).fit()
        inp = mackey_glass(120, seed=3)
        cfg = est.get_params()
        want = drive_reservoir(ReservoirConfig(12, cfg["spectral_radius"], cfg["leak_rate"], cfg["input_scale"],
                                               cfg["connectivity"], cfg["bias_scale"], 4), inp, washout=20)
        np.testing.assert_array_equal(est.transform(inp), want.values)
        np.testing.assert_array_equal(est.transform(inp[:, None]), want.values)

    def test_clone_and_params(self):
        est = EchoStateReservoir(n_nodes=7, spectral_radius=0.5)
        c = clone(est)
        assert c.get_params() == est.get_params()
        assert not hasattr(c, "W_")

    def test_rejects_matrix_input(self):
        est = EchoStateReservoir(n_nodes=3, washout=0).fit()
        with pytest.raises(DimensionError):
            est.transform(np.ones((10, 2)))
        assert list(est.get_feature_names_out()) == ["node0", "node1", "node2"]
