"""Readout error in the Boolean and spin conventions.

Boolean weights ``w`` in {0,1}^N and spins ``x = 2w - 1`` in {-1,1}^N
describe the same readout. Reported training errors use the mean square
error over the T samples. The analysis works with the spin quadratic

    phi(x) = ||a - A x||^2 + (eta / 2) ||x||^2,   a = target - E 1 / 2,  A = E / 2,

whose shift term equals ``eta * N / 2`` on the hypercube. The two
conventions are tied by ``phi(spin_of(w)) = T * mse(w) + eta * N / 2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .exceptions import ConvergenceError, DimensionError
from .reservoir import as_array

DEFAULT_ETA_FACTOR = 1e-3


def check_bool_weights(w, n: Optional[int] = None) -> np.ndarray:
    w = np.asarray(w)
    if w.ndim != 1:
        raise DimensionError(f"weights must be a vector, got shape {w.shape}")
    if n is not None and w.shape[0] != n:
        raise DimensionError(f"weights have length {w.shape[0]}, expected {n}")
    if not np.all((w == 0) | (w == 1)):
        raise ValueError("Boolean weights must take values in {0, 1}")
    return w.astype(np.uint8)


def check_spins(x, n: Optional[int] = None) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 1:
        raise DimensionError(f"spin vector must be 1-D, got shape {x.shape}")
    if n is not None and x.shape[0] != n:
        raise DimensionError(f"spin vector has length {x.shape[0]}, expected {n}")
    if not np.all((x == 1) | (x == -1)):
        raise ValueError("spins must take values in {-1, +1}")
    return x.astype(np.int8)


def spin_of(w) -> np.ndarray:
    return (2 * check_bool_weights(w).astype(np.int8) - 1).astype(np.int8)


def bool_of(x) -> np.ndarray:
    return ((check_spins(x).astype(np.int16) + 1) // 2).astype(np.uint8)


def _state_and_vector(state, v, name):
    e = as_array(state)
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != e.shape[1]:
        raise DimensionError(f"{name} of shape {v.shape} does not match {e.shape[1]} state columns")
    return e, v


def readout(state, w) -> np.ndarray:
    """Detector output for each time step: ``E @ w``."""
    e = as_array(state)
    w = check_bool_weights(w, e.shape[1])
    return e @ w.astype(np.float64)


def mse(state, w, target) -> float:
    """Mean square error of the readout against ``target``."""
    e = as_array(state)
    target = np.asarray(target, dtype=np.float64)
    if target.shape != (e.shape[0],):
        raise DimensionError(f"target of shape {target.shape} does not match horizon {e.shape[0]}")
    r = target - readout(e, w)
    return float(r @ r) / e.shape[0]


@dataclass(frozen=True)
class LambdaMax:
    """Largest eigenvalue of E^T E together with the Hessian bound of phi."""

    raw: float
    hessian: float
    iterations: int


def power_iteration(matvec: Callable[[np.ndarray], np.ndarray], dim: int, tol: float = 1e-8,
                    max_iter: int = 100_000, seed: int = 0):
    """Dominant eigenvalue of a symmetric positive semidefinite operator.

    Stops when the Rayleigh quotient changes by less than ``tol`` relative.
    Returns ``(eigenvalue, eigenvector, iterations)``.
    """
    rng = np.random.default_rng(seed)
    v = np.abs(rng.standard_normal(dim)) + 1.0
    v /= np.linalg.norm(v)
    estimate = 0.0
    for it in range(1, max_iter + 1):
        w = matvec(v)
        new = float(v @ w)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0, v, it
        v = w / norm
        if abs(new - estimate) <= tol * abs(new):
            return new, v, it
        estimate = new
    raise ConvergenceError(
        f"power iteration did not reach rtol={tol} in {max_iter} iterations",
        estimate=estimate, iterations=max_iter,
    )


def lambda_max(state, eta: float = 0.0, tol: float = 1e-8, max_iter: int = 100_000) -> LambdaMax:
    """Largest eigenvalue of ``E^T E`` by power iteration.

    ``hessian`` is the largest eigenvalue of the Hessian of phi,
    ``2 A^T A + eta I = E^T E / 2 + eta I``.
    """
    e = as_array(state)
    if e.size == 0:
        raise DimensionError("state matrix is empty")
    raw, _, iters = power_iteration(lambda v: e.T @ (e @ v), e.shape[1], tol=tol, max_iter=max_iter)
    return LambdaMax(raw=raw, hessian=0.5 * raw + float(eta), iterations=iters)


def default_eta(lam: float, n: int) -> float:
    return DEFAULT_ETA_FACTOR * lam / n


@dataclass(frozen=True, eq=False)
class Objective:
    """Readout problem ``(E, target)`` with its spin-form constants.

    Use :meth:`build` to get the default strong-convexity shift.
    """

    state: np.ndarray
    target: np.ndarray
    eta: float = 0.0
    offset: np.ndarray = field(init=False, repr=False)
    half_matrix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        e = np.array(as_array(self.state), dtype=np.float64)
        target = np.array(self.target, dtype=np.float64)
        if target.shape != (e.shape[0],):
            raise DimensionError(f"target of shape {target.shape} does not match horizon {e.shape[0]}")
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")
        e.setflags(write=False)
        target.setflags(write=False)
        a = target - 0.5 * e.sum(axis=1)
        half = 0.5 * e
        a.setflags(write=False)
        half.setflags(write=False)
        object.__setattr__(self, "state", e)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "eta", float(self.eta))
        object.__setattr__(self, "offset", a)
        object.__setattr__(self, "half_matrix", half)

    @classmethod
    def build(cls, state, target, eta: Optional[float] = None) -> "Objective":
        """Default ``eta`` is ``1e-3 * lambda_max(E^T E) / N``."""
        e = as_array(state)
        if eta is None:
            eta = default_eta(lambda_max(e).raw, e.shape[1])
        return cls(e, target, eta)

    @property
    def n(self) -> int:
        return self.state.shape[1]

    @property
    def t(self) -> int:
        return self.state.shape[0]

    def mse(self, w) -> float:
        return mse(self.state, w, self.target)


def phi_real(obj: Objective, x) -> float:
    """phi extended to real vectors: ``||a - A x||^2 + eta/2 ||x||^2``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (obj.n,):
        raise DimensionError(f"x of shape {x.shape} does not match N={obj.n}")
    r = obj.offset - obj.half_matrix @ x
    return float(r @ r) + 0.5 * obj.eta * float(x @ x)


def phi_spin(obj: Objective, x) -> float:
    x = check_spins(x, obj.n)
    r = obj.offset - obj.half_matrix @ x.astype(np.float64)
    return float(r @ r) + 0.5 * obj.eta * obj.n


def grad_phi(obj: Objective, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (obj.n,):
        raise DimensionError(f"x of shape {x.shape} does not match N={obj.n}")
    return -2.0 * obj.half_matrix.T @ (obj.offset - obj.half_matrix @ x) + obj.eta * x


def round_to_hypercube(a) -> np.ndarray:
    """Nearest point of {-1,1}^N; a zero coordinate rounds to +1."""
    a = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError("cannot round non-finite values")
    return np.where(a >= 0, 1, -1).astype(np.int8)


@dataclass
class TheoryConstants:
    """Constants entering the contraction factor for one instance."""

    lambda_smooth: float
    eta: float
    kappa: float = float("nan")
    rho: float = float("nan")
    alpha: float = float("nan")
    beta: float = float("nan")

    def __post_init__(self):
        if self.lambda_smooth < 0:
            raise ValueError("lambda_smooth must be nonnegative")
        if not np.isnan(self.kappa) and not 0.0 <= self.kappa <= 1.0:
            raise ValueError(f"kappa must lie in [0, 1], got {self.kappa}")

    def to_json(self) -> dict:
        return {"lambda": self.lambda_smooth, "eta": self.eta, "kappa": self.kappa,
                "rho": self.rho, "alpha": self.alpha, "beta": self.beta}

    @classmethod
    def from_json(cls, data: dict) -> "TheoryConstants":
        def f(key):
            v = data.get(key)
            return float("nan") if v is None else float(v)
        return cls(lambda_smooth=f("lambda"), eta=f("eta"), kappa=f("kappa"),
                   rho=f("rho"), alpha=f("alpha"), beta=f("beta"))
