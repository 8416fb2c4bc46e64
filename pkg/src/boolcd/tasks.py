"""Prediction tasks: Mackey-Glass series, one-step-ahead targets, synthetic targets."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import io
from .exceptions import DimensionError, InputLengthError
from .objective import check_bool_weights
from .reservoir import DEFAULT_WASHOUT, ReservoirConfig, StateMatrix, as_array, drive_reservoir

TARGET_NORMS = ("zscore", "minmax", "none")
SHIFT = 1


def mackey_glass(length: int, tau: float = 17, dt: float = 0.1, seed: int = 0, subsample: int = 10,
                 standardize: bool = True, initial: Optional[float] = None, burn_in: float = 300.0,
                 beta: float = 0.2, gamma: float = 0.1, power: float = 10.0) -> np.ndarray:
    """Sample ``dx/dt = beta x(t-tau) / (1 + x(t-tau)^power) - gamma x(t)``.

    Integration is RK4 with step ``dt``; delayed values between grid points
    are linearly interpolated. The history before t=0 is constant, equal to
    ``initial`` or to a seeded draw from U(0.9, 1.5). ``burn_in`` time units
    are discarded, then every ``subsample``-th grid point is kept.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    if dt <= 0 or subsample < 1 or tau < 0:
        raise ValueError("need dt > 0, subsample >= 1, tau >= 0")
    if initial is None:
        initial = 0.9 + 0.6 * np.random.default_rng(seed).random()
    skip = int(round(burn_in / dt))
    steps = skip + (length - 1) * subsample + 1
    x = np.empty(steps)
    x[0] = initial
    lag = tau / dt

    def delayed(pos: float) -> float:
        # value at grid position ``pos`` (may be fractional or negative)
        if pos <= 0:
            return x[0] if pos == 0 else initial
        lo = int(np.floor(pos))
        frac = pos - lo
        if frac == 0.0:
            return x[lo]
        return (1 - frac) * x[lo] + frac * x[lo + 1]

    def f(xt, xd):
        return beta * xd / (1.0 + xd ** power) - gamma * xt

    for k in range(steps - 1):
        xk = x[k]
        if lag == 0:
            k1 = f(xk, xk)
            k2 = f(xk + 0.5 * dt * k1, xk + 0.5 * dt * k1)
            k3 = f(xk + 0.5 * dt * k2, xk + 0.5 * dt * k2)
            k4 = f(xk + dt * k3, xk + dt * k3)
        else:
            d0 = delayed(k - lag)
            dh = delayed(k + 0.5 - lag)
            d1 = delayed(k + 1 - lag)
            k1 = f(xk, d0)
            k2 = f(xk + 0.5 * dt * k1, dh)
            k3 = f(xk + 0.5 * dt * k2, dh)
            k4 = f(xk + dt * k3, d1)
        x[k + 1] = xk + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    out = x[skip::subsample][:length].copy()
    if standardize and length > 1:
        std = out.std()
        out = out - out.mean()
        if std > 0:
            out /= std
    return out


def synthetic_target(state, planted_w, noise_std: float = 0.0, seed: int = 0) -> np.ndarray:
    """``E @ planted_w`` plus i.i.d. Gaussian noise."""
    e = as_array(state)
    w = check_bool_weights(planted_w, e.shape[1])
    if noise_std < 0:
        raise ValueError("noise_std must be nonnegative")
    clean = e @ w.astype(np.float64)
    if noise_std == 0:
        return clean
    return clean + noise_std * np.random.default_rng(seed).standard_normal(e.shape[0])


@dataclass(frozen=True, eq=False)
class TaskData:
    """Train/test split of a one-step-ahead prediction problem.

    ``target_train[n]`` is the normalized series value one step after the
    input that produced ``state_train`` row ``n``. ``state_scale`` is the
    factor applied to the raw squared states so that a readout with half of
    the nodes on has mean output ``readout_gain``.
    """

    series: np.ndarray
    state_train: StateMatrix
    target_train: np.ndarray
    state_test: Optional[StateMatrix]
    target_test: np.ndarray
    washout: int
    config: Optional[ReservoirConfig] = None
    target_norm: str = "minmax"
    norm_params: dict = field(default_factory=dict)
    readout_gain: float = 1.0
    state_scale: float = 1.0
    meta: dict = field(default_factory=dict)

    @property
    def t_train(self) -> int:
        return self.target_train.shape[0]

    @property
    def t_test(self) -> int:
        return self.target_test.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.state_train.n_nodes

    def test_pair(self):
        if self.state_test is None:
            return None
        return self.state_test.values, self.target_test

    def sidecar(self) -> dict:
        return {
            "t_train": self.t_train,
            "t_test": self.t_test,
            "n_nodes": self.n_nodes,
            "washout": self.washout,
            "shift": SHIFT,
            "series_length": int(self.series.shape[0]),
            "reservoir": None if self.config is None else self.config.to_dict(),
            "target_norm": self.target_norm,
            "norm_params": self.norm_params,
            "readout_gain": self.readout_gain,
            "state_scale": self.state_scale,
            "meta": self.meta,
        }


def _norm_params(y: np.ndarray, mode: str) -> dict:
    if mode == "zscore":
        std = float(y.std())
        return {"shift": float(y.mean()), "scale": std if std > 0 else 1.0}
    if mode == "minmax":
        span = float(y.max() - y.min())
        return {"shift": float(y.min()), "scale": span if span > 0 else 1.0}
    if mode == "none":
        return {"shift": 0.0, "scale": 1.0}
    raise ValueError(f"unknown target_norm {mode!r}; choose from {TARGET_NORMS}")


def make_task(cfg: ReservoirConfig, series, t_train: int, t_test: int = 0,
              washout: int = DEFAULT_WASHOUT, target_norm: str = "minmax",
              readout_gain: Optional[float] = 1.0, meta: Optional[dict] = None) -> TaskData:
    """Drive the reservoir with ``series`` and pair states with next-step targets.

    Needs ``washout + t_train + t_test + 1`` samples. Normalization
    statistics come from the training targets only: ``minmax`` maps the
    training range onto [0, 1], ``zscore`` gives zero mean and unit
    variance. With ``readout_gain`` None the raw squared states are kept.
    """
    series = np.asarray(series, dtype=np.float64).ravel()
    if t_train < 1 or t_test < 0:
        raise ValueError("need t_train >= 1 and t_test >= 0")
    need = washout + t_train + t_test + SHIFT
    if series.shape[0] < need:
        raise InputLengthError(f"series of length {series.shape[0]} is shorter than the {need} samples required")
    rows = t_train + t_test
    states = as_array(drive_reservoir(cfg, series[: washout + rows], washout=washout, horizon=rows))
    targets = series[washout + SHIFT: washout + rows + SHIFT]
    params = _norm_params(targets[:t_train], target_norm)
    norm = (targets - params["shift"]) / params["scale"]
    scale = 1.0
    if readout_gain is not None:
        half_sum = 0.5 * states[:t_train].sum(axis=1).mean()
        scale = float(readout_gain / half_sum)
    states = states * scale
    return TaskData(
        series=series,
        state_train=StateMatrix(states[:t_train]),
        target_train=norm[:t_train],
        state_test=StateMatrix(states[t_train:]) if t_test else None,
        target_test=norm[t_train:],
        washout=washout,
        config=cfg,
        target_norm=target_norm,
        norm_params=params,
        readout_gain=readout_gain,
        state_scale=scale,
        meta=dict(meta or {}),
    )


def save_task(task: TaskData, directory, binary: bool = False) -> list:
    """Write states, targets, the series and a ``task.json`` sidecar; returns the paths written."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    ext = "bin" if binary else "csv"
    writer = io.write_state_binary if binary else io.write_state_csv
    written = []
    parts = [("train", task.state_train, task.target_train)]
    if task.state_test is not None:
        parts.append(("test", task.state_test, task.target_test))
    for name, state, target in parts:
        sp = d / f"state_{name}.{ext}"
        tp = d / f"target_{name}.csv"
        writer(sp, state)
        io.write_vector_csv(tp, target, "target")
        written += [sp, tp]
    series_path = d / "series.csv"
    io.write_vector_csv(series_path, task.series, "series")
    side = task.sidecar()
    side["format"] = ext
    side_path = d / "task.json"
    io.dump_json(side_path, side)
    return written + [series_path, side_path]


def load_task(directory) -> TaskData:
    d = Path(directory)
    side = json.loads((d / "task.json").read_text())
    ext = side.get("format", "csv")
    state_train = io.read_state(d / f"state_train.{ext}")
    target_train = io.read_vector_csv(d / "target_train.csv")
    if state_train.horizon != target_train.shape[0]:
        raise DimensionError("training states and targets have different lengths")
    state_test = None
    target_test = np.empty(0)
    if side["t_test"]:
        state_test = io.read_state(d / f"state_test.{ext}")
        target_test = io.read_vector_csv(d / "target_test.csv")
    cfg = ReservoirConfig(**side["reservoir"]) if side.get("reservoir") else None
    return TaskData(
        series=io.read_vector_csv(d / "series.csv"),
        state_train=state_train, target_train=target_train,
        state_test=state_test, target_test=target_test,
        washout=int(side["washout"]), config=cfg, target_norm=side["target_norm"],
        norm_params=side["norm_params"], readout_gain=side["readout_gain"],
        state_scale=float(side["state_scale"]), meta=side.get("meta", {}),
    )
