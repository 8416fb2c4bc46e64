"""Randomized single-coordinate descent over Boolean readout weights.

Each epoch picks one coordinate, flips it, and keeps the flip only if the
mean square error strictly drops. Two selection policies are supported:

* ``markovian``: uniform, memoryless draws.
* ``greedy``: ``argmax(u * bias)`` with fresh ``u ~ U(0,1)^N`` each epoch.
  After a pick every bias grows by ``1/N`` and the picked one resets to 0,
  so recently probed coordinates are avoided.

A run stops at the first of: error <= target, a certified local
coordinatewise minimizer (every coordinate rejected since the last accepted
flip), or the epoch budget.
"""
from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y, validate_data

from .exceptions import DimensionError, StateError
from .io import dump_json, fmt
from .objective import Objective, check_bool_weights
from .reservoir import as_array

POLICIES = ("markovian", "greedy")
REASONS = ("epsilon", "local_min", "max_epochs")

_BLOCK = 512


class SelectorPolicy:
    """Coordinate selector state.

    Parameters
    ----------
    kind : {"markovian", "greedy"}
    seed : int
        Seed of the selector's private random stream.
    bias : array-like, optional
        Initial greedy bias; drawn from U(0,1)^N when omitted.

    The selector must be sized with :meth:`initialize` before use.
    """

    def __init__(self, kind: str, seed: int = 0, bias=None):
        if kind not in POLICIES:
            raise ValueError(f"unknown policy {kind!r}; choose from {POLICIES}")
        self.kind = kind
        self.seed = int(seed)
        self._initial_bias = None if bias is None else np.array(bias, dtype=np.float64)
        self.n = None
        self.bias = None
        self._rng = None
        self._buffer = None
        self._pos = 0

    def initialize(self, n: int) -> "SelectorPolicy":
        if n < 1:
            raise ValueError("dimension must be positive")
        self.n = int(n)
        self._rng = np.random.default_rng(self.seed)
        if self.kind == "greedy":
            if self._initial_bias is not None:
                if self._initial_bias.shape != (n,) or np.any(self._initial_bias < 0):
                    raise ValueError("greedy bias must be a nonnegative vector of length N")
                self.bias = self._initial_bias.copy()
            else:
                self.bias = self._rng.random(n)
        self._buffer = None
        self._pos = 0
        return self

    @property
    def initialized(self) -> bool:
        return self.n is not None and (self.kind == "markovian" or self.bias is not None)

    def _refill(self):
        if self.kind == "markovian":
            self._buffer = self._rng.integers(self.n, size=_BLOCK)
        else:
            self._buffer = self._rng.random((_BLOCK, self.n))
        self._pos = 0

    def select(self) -> int:
        if not self.initialized:
            raise StateError("selector used before initialize(); greedy bias is unset")
        if self._buffer is None or self._pos == _BLOCK:
            self._refill()
        if self.kind == "markovian":
            l = int(self._buffer[self._pos])
        else:
            # np.argmax returns the lowest index among ties.
            l = int(np.argmax(self._buffer[self._pos] * self.bias))
            self.bias += 1.0 / self.n
            self.bias[l] = 0.0
        self._pos += 1
        return l

    def selection_probabilities(self, n_samples: int = 4096, seed: int = 0) -> np.ndarray:
        """Distribution of the next pick, without advancing the selector.

        Exact for ``markovian``; a Monte-Carlo estimate for ``greedy``.
        """
        if not self.initialized:
            raise StateError("selector used before initialize()")
        if self.kind == "markovian":
            return np.full(self.n, 1.0 / self.n)
        rng = np.random.default_rng(seed)
        picks = np.argmax(rng.random((n_samples, self.n)) * self.bias, axis=1)
        return np.bincount(picks, minlength=self.n) / n_samples


def select_coordinate(policy: SelectorPolicy, epoch: Optional[int] = None) -> int:
    """Draw ``l(k)`` and apply the bias update. ``epoch`` is informational."""
    return policy.select()


@dataclass
class DescentConfig:
    policy: str = "greedy"
    seed: int = 0
    max_epochs: int = 1_000_000
    target_error: float = 0.0
    stop_on_local_min: bool = True
    record_test_error: bool = False

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")
        if int(self.max_epochs) < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.target_error < 0:
            raise ValueError("target_error must be nonnegative")


class _Residual:
    """Incrementally maintained residual ``target - E w``."""

    def __init__(self, state: np.ndarray, target: np.ndarray, w: np.ndarray):
        self.cols = np.ascontiguousarray(state.T)
        self.col_sq = np.einsum("ij,ij->i", self.cols, self.cols)
        self.r = np.asarray(target, dtype=np.float64) - state @ w.astype(np.float64)
        self.t = state.shape[0]

    def delta(self, l: int, bit: int) -> float:
        """Change of the squared residual norm if bit ``l`` (currently ``bit``) flips."""
        s = 1.0 if bit == 0 else -1.0
        return self.col_sq[l] - 2.0 * s * float(self.r @ self.cols[l])

    def apply(self, l: int, bit: int) -> None:
        if bit == 0:
            self.r -= self.cols[l]
        else:
            self.r += self.cols[l]

    def error(self) -> float:
        return float(self.r @ self.r) / self.t


def step(obj: Objective, w, l: int):
    """Flip bit ``l``, keep it only on a strict error decrease.

    Returns ``(w_next, reward, error)`` where ``error`` is the mean square
    error of the kept configuration.
    """
    w = check_bool_weights(w, obj.n).copy()
    if not 0 <= l < obj.n:
        raise IndexError(f"coordinate {l} out of range for N={obj.n}")
    res = _Residual(obj.state, obj.target, w)
    if res.delta(l, int(w[l])) < 0:
        res.apply(l, int(w[l]))
        w[l] ^= 1
        return w, 1, res.error()
    return w, 0, res.error()


@dataclass
class DescentTrace:
    """Per-epoch record of one run.

    ``errors[k-1]`` is the error of the configuration kept after epoch ``k``;
    ``initial_error`` is the error of the starting weights.
    """

    flipped: np.ndarray
    errors: np.ndarray
    rewards: np.ndarray
    initial_error: float
    final_weights: np.ndarray
    epochs_to_converge: int
    converged_reason: str
    test_errors: Optional[np.ndarray] = None
    initial_test_error: Optional[float] = None
    seed: Optional[int] = None

    @property
    def total_epochs(self) -> int:
        return int(self.errors.shape[0])

    @property
    def epochs(self) -> np.ndarray:
        return np.arange(1, self.total_epochs + 1)

    @property
    def final_error(self) -> float:
        return float(self.errors[-1]) if self.total_epochs else float(self.initial_error)

    @property
    def final_test_error(self) -> Optional[float]:
        if self.test_errors is None:
            return None
        return float(self.test_errors[-1]) if self.total_epochs else self.initial_test_error

    @property
    def n_accepted(self) -> int:
        return int(self.rewards.sum())

    def error_curve(self) -> np.ndarray:
        """Errors indexed by epoch, starting with epoch 0."""
        return np.concatenate([[self.initial_error], self.errors])

    def write_csv(self, path) -> None:
        """Header ``epoch,flipped_index,error,reward,test_error``; epoch 0 is the start."""
        with open(path, "w", newline="", encoding="ascii") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "flipped_index", "error", "reward", "test_error"])
            t0 = "" if self.initial_test_error is None else fmt(self.initial_test_error)
            writer.writerow([0, "", fmt(self.initial_error), "", t0])
            for k in range(self.total_epochs):
                te = "" if self.test_errors is None else fmt(self.test_errors[k])
                writer.writerow([k + 1, int(self.flipped[k]), fmt(self.errors[k]),
                                 int(self.rewards[k]), te])


def run_descent(obj: Objective, w0, cfg: DescentConfig, test=None) -> DescentTrace:
    """Run one Boolean minimizer from ``w0``.

    ``test`` is an optional ``(state, target)`` pair whose error is tracked
    alongside when ``cfg.record_test_error`` is set.
    """
    w = check_bool_weights(w0, obj.n).copy()
    n = obj.n
    policy = SelectorPolicy(cfg.policy, cfg.seed).initialize(n)
    res = _Residual(obj.state, obj.target, w)

    test_res = None
    if cfg.record_test_error and test is not None:
        test_state, test_target = as_array(test[0]), np.asarray(test[1], dtype=np.float64)
        if test_state.shape[1] != n:
            raise DimensionError("test state has a different number of columns")
        if test_state.shape[0] > 0:
            test_res = _Residual(test_state, test_target, w)

    error = res.error()
    initial_error = error
    test_error = test_res.error() if test_res is not None else None
    initial_test = test_error

    flipped, errors, rewards, test_errors = [], [], [], []
    rejected = np.zeros(n, dtype=bool)
    n_rejected = 0
    last_accept = 0
    reason = "max_epochs"

    if error <= cfg.target_error:
        reason = "epsilon"
    else:
        for k in range(1, int(cfg.max_epochs) + 1):
            l = policy.select()
            bit = int(w[l])
            if res.delta(l, bit) < 0:
                res.apply(l, bit)
                if test_res is not None:
                    test_res.apply(l, bit)
                    test_error = test_res.error()
                w[l] ^= 1
                error = res.error()
                rewards.append(1)
                last_accept = k
                if n_rejected:
                    rejected[:] = False
                    n_rejected = 0
            else:
                rewards.append(0)
                if not rejected[l]:
                    rejected[l] = True
                    n_rejected += 1
            flipped.append(l)
            errors.append(error)
            if test_res is not None:
                test_errors.append(test_error)
            if error <= cfg.target_error:
                reason = "epsilon"
                break
            if cfg.stop_on_local_min and n_rejected == n:
                reason = "local_min"
                break

    return DescentTrace(
        flipped=np.asarray(flipped, dtype=np.int64),
        errors=np.asarray(errors, dtype=np.float64),
        rewards=np.asarray(rewards, dtype=np.uint8),
        initial_error=initial_error,
        final_weights=w,
        epochs_to_converge=last_accept,
        converged_reason=reason,
        test_errors=np.asarray(test_errors, dtype=np.float64) if test_res is not None else None,
        initial_test_error=initial_test,
        seed=cfg.seed,
    )


def pad_curves(curves: Sequence[np.ndarray]) -> np.ndarray:
    """Stack curves of unequal length, carrying each final value forward."""
    length = max(c.shape[0] for c in curves)
    out = np.empty((len(curves), length))
    for i, c in enumerate(curves):
        out[i, : c.shape[0]] = c
        out[i, c.shape[0]:] = c[-1]
    return out


@dataclass
class EnsembleResult:
    traces: list
    mean_error: np.ndarray
    std_error: np.ndarray
    K_mean: float
    K_std: float
    reasons: dict = field(default_factory=dict)
    mean_test_error: Optional[np.ndarray] = None

    @property
    def K(self) -> np.ndarray:
        return np.array([t.epochs_to_converge for t in self.traces])

    def summary(self) -> dict:
        return {
            "mean_error": self.mean_error,
            "std_error": self.std_error,
            "K_mean": self.K_mean,
            "K_std": self.K_std,
            "converged_reason": {r: int(self.reasons.get(r, 0)) for r in REASONS},
        }

    def write_summary(self, path) -> None:
        dump_json(path, self.summary())


def summarize(traces: Sequence[DescentTrace]) -> EnsembleResult:
    curves = pad_curves([t.error_curve() for t in traces])
    ks = np.array([t.epochs_to_converge for t in traces], dtype=np.float64)
    mean_test = None
    if all(t.test_errors is not None for t in traces):
        mean_test = pad_curves(
            [np.concatenate([[t.initial_test_error], t.test_errors]) for t in traces]
        ).mean(axis=0)
    return EnsembleResult(
        traces=list(traces),
        mean_error=curves.mean(axis=0),
        std_error=curves.std(axis=0),
        K_mean=float(ks.mean()),
        K_std=float(ks.std()),
        reasons=dict(Counter(t.converged_reason for t in traces)),
        mean_test_error=mean_test,
    )


def run_ensemble(obj: Objective, w0, cfg: DescentConfig, seeds: Sequence[int],
                 test=None, n_jobs: int = 1) -> EnsembleResult:
    """Run one minimizer per seed from the shared start ``w0``.

    Results are ordered like ``seeds`` whatever ``n_jobs`` is.
    """
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("at least one seed is required")
    cfgs = [DescentConfig(cfg.policy, s, cfg.max_epochs, cfg.target_error,
                          cfg.stop_on_local_min, cfg.record_test_error) for s in seeds]
    if n_jobs == 1:
        traces = [run_descent(obj, w0, c, test) for c in cfgs]
    else:
        traces = Parallel(n_jobs=n_jobs)(delayed(run_descent)(obj, w0, c, test) for c in cfgs)
    return summarize(traces)


def derive_seed(*keys: int) -> int:
    """Stable 63-bit seed from integer keys."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(2, np.uint64)[0] >> np.uint64(1))


def random_weights(n: int, seed: int, density: float = 0.5) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return (rng.random(n) < density).astype(np.uint8)


class BooleanReadout(RegressorMixin, BaseEstimator):
    """Boolean linear readout trained by randomized coordinate descent.

    ``fit(X, y)`` treats ``X`` as the T x N intensity matrix and ``y`` as the
    target sequence. The learned weights are in ``coef_`` (0/1 integers) and
    ``predict`` returns ``X @ coef_``.

    Parameters
    ----------
    policy : {"greedy", "markovian"}
    max_epochs : int
    target_error : float
        Stop once the training mean square error is at or below this value.
    stop_on_local_min : bool
    init : {"random", "zeros", "ones"} or array-like
        Starting weights; ``"random"`` draws each bit on with ``init_density``.
    init_density : float
    random_state : int or None

    Attributes
    ----------
    coef_ : ndarray of uint8
    trace_ : DescentTrace
    n_epochs_ : int
        Epoch of the last accepted flip.
    converged_reason_ : str
    train_error_ : float
    """

    def __init__(self, policy="greedy", max_epochs=1_000_000, target_error=0.0,
                 stop_on_local_min=True, init="random", init_density=0.5, random_state=None):
        self.policy = policy
        self.max_epochs = max_epochs
        self.target_error = target_error
        self.stop_on_local_min = stop_on_local_min
        self.init = init
        self.init_density = init_density
        self.random_state = random_state

    def _start(self, n, seed):
        if isinstance(self.init, str):
            if self.init == "random":
                return random_weights(n, seed, self.init_density)
            if self.init == "zeros":
                return np.zeros(n, dtype=np.uint8)
            if self.init == "ones":
                return np.ones(n, dtype=np.uint8)
            raise ValueError(f"unknown init {self.init!r}")
        return check_bool_weights(self.init, n)

    def fit(self, X, y, X_test=None, y_test=None):
        X, y = validate_data(self, X, y, y_numeric=True, dtype=np.float64)
        if np.any(X < 0):
            raise ValueError("intensities must be nonnegative")
        ss = np.random.SeedSequence(self.random_state)
        init_seed, policy_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
        obj = Objective(X, y)
        record = X_test is not None and y_test is not None
        test = None
        if record:
            X_test, y_test = check_X_y(X_test, y_test, y_numeric=True, dtype=np.float64)
            test = (X_test, y_test)
        cfg = DescentConfig(self.policy, policy_seed, self.max_epochs, self.target_error,
                            self.stop_on_local_min, record)
        self.trace_ = run_descent(obj, self._start(X.shape[1], init_seed), cfg, test)
        self.coef_ = self.trace_.final_weights
        self.n_epochs_ = self.trace_.epochs_to_converge
        self.converged_reason_ = self.trace_.converged_reason
        self.train_error_ = self.trace_.final_error
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, reset=False, dtype=np.float64)
        return X @ self.coef_.astype(np.float64)

    def error(self, X, y) -> float:
        """Mean square error of the fitted readout on ``(X, y)``."""
        X = check_array(X, dtype=np.float64)
        r = np.asarray(y, dtype=np.float64) - self.predict(X)
        return float(r @ r) / r.shape[0]
