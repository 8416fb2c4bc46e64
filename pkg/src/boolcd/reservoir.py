"""Reservoir state generation.

Two sources of state matrices are provided: a leaky-tanh echo state network
driven by a scalar input, and i.i.d. nonnegative random matrices used by
the spectral experiments. Every row of a state matrix holds the squared node amplitudes at one time step.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import DegenerateReservoirError, DimensionError, InputLengthError

DEFAULT_WASHOUT = 100

DISTRIBUTIONS = ("uniform01", "abs_gaussian", "squared_gaussian")

# Entry mean and variance of each named distribution.
DISTRIBUTION_MOMENTS = {
    "uniform01": (0.5, 1.0 / 12.0),
    "abs_gaussian": (np.sqrt(2.0 / np.pi), 1.0 - 2.0 / np.pi),
    "squared_gaussian": (1.0, 2.0),
}


@dataclass(frozen=True)
class ReservoirConfig:
    """Hyper-parameters of the echo state network.

    ``bias_scale`` sets the spread of a constant per-node bias drawn from
    U(-bias_scale, bias_scale). With the default of zero a silent input keeps
    the network at rest.
    """

    n_nodes: int
    spectral_radius: float = 0.9
    leak_rate: float = 1.0
    input_scale: float = 1.0
    connectivity: float = 0.1
    bias_scale: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if int(self.n_nodes) < 1:
            raise ValueError(f"n_nodes must be >= 1, got {self.n_nodes}")
        if not 0.0 < self.leak_rate <= 1.0:
            raise ValueError(f"leak_rate must lie in (0, 1], got {self.leak_rate}")
        if not 0.0 < self.connectivity <= 1.0:
            raise ValueError(f"connectivity must lie in (0, 1], got {self.connectivity}")
        if self.spectral_radius < 0:
            raise ValueError("spectral_radius must be nonnegative")
        if self.bias_scale < 0:
            raise ValueError("bias_scale must be nonnegative")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True, eq=False)
class StateMatrix:
    """Read-only T x N matrix of nonnegative intensities."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError(f"state matrix must be a nonempty 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("state matrix contains non-finite entries")
        if np.any(arr < 0):
            raise ValueError("state matrix entries must be nonnegative")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def horizon(self) -> int:
        return self.values.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.values
        return self.values.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, StateMatrix):
            return NotImplemented
        return self.values.shape == other.values.shape and np.array_equal(self.values, other.values)

    __hash__ = None

    def zero_columns(self) -> np.ndarray:
        return np.flatnonzero(~np.any(self.values > 0, axis=0))


def as_array(state) -> np.ndarray:
    """Return the float array behind a StateMatrix or array-like."""
    if isinstance(state, StateMatrix):
        return state.values
    arr = np.asarray(state, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2-D state matrix, got shape {arr.shape}")
    return arr


def _checked(values: np.ndarray) -> StateMatrix:
    state = StateMatrix(values)
    zero = state.zero_columns()
    if zero.size:
        raise DegenerateReservoirError(
            f"degenerate reservoir: {zero.size} all-zero column(s), first at index {zero[0]}"
        )
    return state


def reservoir_weights(cfg: ReservoirConfig):
    """Draw (recurrent, input, bias) weights for ``cfg``.

    The recurrent matrix is sparse Gaussian rescaled so its spectral radius
    equals ``cfg.spectral_radius``.
    """
    n = int(cfg.n_nodes)
    rng = np.random.default_rng(int(cfg.seed))
    mask = rng.random((n, n)) < cfg.connectivity
    w = rng.standard_normal((n, n)) * mask
    radius = np.max(np.abs(np.linalg.eigvals(w))) if n > 0 else 0.0
    if radius > 0:
        w *= cfg.spectral_radius / radius
    w_in = rng.uniform(-1.0, 1.0, n) * cfg.input_scale
    bias = rng.uniform(-1.0, 1.0, n) * cfg.bias_scale
    return w, w_in, bias


def _run(w, w_in, bias, leak, inp, washout):
    n = w.shape[0]
    x = np.zeros(n)
    out = np.empty((inp.shape[0] - washout, n))
    for t, u in enumerate(inp):
        x = (1.0 - leak) * x + leak * np.tanh(w @ x + w_in * u + bias)
        if t >= washout:
            out[t - washout] = x
    return out


def drive_reservoir(cfg: ReservoirConfig, inp, washout: int = DEFAULT_WASHOUT,
                    horizon: Optional[int] = None) -> StateMatrix:
    """Drive the network with ``inp`` and return squared node states.

    Row ``n`` of the result is the elementwise square of the state reached
    after consuming ``inp[washout + n]``. When ``horizon`` is given only that
    many rows are produced and the input must provide ``horizon + washout``
    samples; otherwise every post-washout sample yields a row.

    Raises
    ------
    InputLengthError
        If the input cannot cover the washout plus at least one row (or the
        requested horizon).
    DegenerateReservoirError
        If some node stays exactly at zero for the whole horizon.
    """
    inp = np.asarray(inp, dtype=np.float64).ravel()
    washout = int(washout)
    if washout < 0:
        raise ValueError("washout must be nonnegative")
    if horizon is None:
        horizon = inp.shape[0] - washout
        if horizon < 1:
            raise InputLengthError(
                f"input of length {inp.shape[0]} does not exceed the washout of {washout}"
            )
    elif inp.shape[0] < horizon + washout:
        raise InputLengthError(
            f"input length {inp.shape[0]} < horizon {horizon} + washout {washout}"
        )
    w, w_in, bias = reservoir_weights(cfg)
    states = _run(w, w_in, bias, cfg.leak_rate, inp[: horizon + washout], washout)
    return _checked(states ** 2)


def random_state_matrix(n: int, t: int, distribution: str = "uniform01", seed: int = 0) -> StateMatrix:
    """Draw a t x n matrix with i.i.d. nonnegative entries."""
    if n < 1 or t < 1:
        raise ValueError(f"sizes must be positive, got n={n}, t={t}")
    rng = np.random.default_rng(int(seed))
    if distribution == "uniform01":
        values = rng.random((t, n))
    elif distribution == "abs_gaussian":
        values = np.abs(rng.standard_normal((t, n)))
    elif distribution == "squared_gaussian":
        values = rng.standard_normal((t, n)) ** 2
    else:
        raise ValueError(f"unknown distribution {distribution!r}; choose from {DISTRIBUTIONS}")
    return _checked(values)


class EchoStateReservoir(TransformerMixin, BaseEstimator):
    """Echo state network as a scikit-learn transformer.

    ``fit`` draws the fixed random weights; ``transform`` maps a scalar input
    sequence of length ``T + washout`` to the ``T x n_nodes`` intensity
    matrix. The network restarts from rest on every call, so transforming the
    same input twice gives the same output.

    Parameters
    ----------
    n_nodes : int
    spectral_radius, leak_rate, input_scale, connectivity, bias_scale : float
        See :class:`ReservoirConfig`.
    washout : int
        Leading samples discarded from every transformed sequence.
    random_state : int
        Seed for the weight draw.
    """

    def __init__(self, n_nodes=100, spectral_radius=0.9, leak_rate=1.0, input_scale=1.0,
                 connectivity=0.1, bias_scale=0.0, washout=DEFAULT_WASHOUT, random_state=0):
        self.n_nodes = n_nodes
        self.spectral_radius = spectral_radius
        self.leak_rate = leak_rate
        self.input_scale = input_scale
        self.connectivity = connectivity
        self.bias_scale = bias_scale
        self.washout = washout
        self.random_state = random_state

    def _config(self) -> ReservoirConfig:
        return ReservoirConfig(
            n_nodes=self.n_nodes, spectral_radius=self.spectral_radius,
            leak_rate=self.leak_rate, input_scale=self.input_scale,
            connectivity=self.connectivity, bias_scale=self.bias_scale,
            seed=0 if self.random_state is None else self.random_state,
        )

    def fit(self, X=None, y=None):
        self.config_ = self._config()
        self.W_, self.W_in_, self.bias_ = reservoir_weights(self.config_)
        return self

    def transform(self, X):
        check_is_fitted(self, "W_")
        inp = np.asarray(X, dtype=np.float64)
        if inp.ndim == 2 and inp.shape[1] == 1:
            inp = inp[:, 0]
        if inp.ndim != 1:
            raise DimensionError("input must be a scalar sequence of shape (T,) or (T, 1)")
        if inp.shape[0] <= self.washout:
            raise InputLengthError(
                f"input of length {inp.shape[0]} does not exceed the washout of {self.washout}"
            )
        states = _run(self.W_, self.W_in_, self.bias_, self.leak_rate, inp, int(self.washout))
        return _checked(states ** 2).values

    def get_feature_names_out(self, input_features=None):
        return np.array([f"node{i}" for i in range(self.n_nodes)], dtype=object)
