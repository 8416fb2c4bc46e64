"""Convergence-curve and size-scaling experiments."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import optimize, stats

from .descent import POLICIES, DescentConfig, derive_seed, random_weights, run_ensemble
from .io import dump_json, fmt
from .objective import Objective
from .reservoir import ReservoirConfig, random_state_matrix
from .tasks import make_task, mackey_glass


@dataclass
class FitResult:
    model: str
    params: dict
    r_squared: float
    residual_std: float
    degenerate: bool = False
    residuals: Optional[np.ndarray] = field(default=None, repr=False)

    def to_json(self) -> dict:
        return {"model": self.model, "params": self.params, "r_squared": self.r_squared,
                "residual_std": self.residual_std, "degenerate": self.degenerate}


def _r_squared(y, pred) -> float:
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0:
        return 0.0
    return float(min(max(1.0 - float(((y - pred) ** 2).sum()) / ss_tot, 0.0), 1.0))


def fit_exponential(curve) -> FitResult:
    """Fit ``phi_inf + A exp(-k / tau)`` to a mean error curve indexed by epoch.

    The plateau starts at the mean of the last 5% of the curve, a linear
    fit of log(curve - plateau) seeds amplitude and rate, and a
    Levenberg-Marquardt pass refines all three.
    """
    y = np.asarray(curve, dtype=np.float64).ravel()
    if y.shape[0] < 10:
        raise ValueError("need at least 10 points for an exponential fit")
    if not np.all(np.isfinite(y)):
        raise ValueError("curve contains non-finite values")
    k = np.arange(y.shape[0], dtype=np.float64)
    span = float(y.max() - y.min())
    if span <= 1e-12 * max(1.0, abs(float(y.mean()))):
        return FitResult("exp_decay", {"phi_inf": float(y.mean()), "amplitude": 0.0,
                                       "tau": float("nan"), "rate": float("nan")},
                         0.0, 0.0, degenerate=True, residuals=np.zeros_like(y))
    tail = max(1, int(math.ceil(0.05 * y.shape[0])))
    plateau = float(y[-tail:].mean())
    excess = y - plateau
    mask = excess > 0.01 * excess.max()
    if mask.sum() >= 2:
        lin = stats.linregress(k[mask], np.log(excess[mask]))
        rate0 = max(-lin.slope, 1e-12)
        amp0 = float(np.exp(lin.intercept))
    else:
        rate0, amp0 = 1.0 / y.shape[0], float(excess.max())
    scale = span

    def resid(p):
        return (p[0] + p[1] * np.exp(-p[2] * k) - y) / scale

    sol = optimize.least_squares(resid, [plateau, amp0, rate0], method="lm",
                                 xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000)
    phi_inf, amp, rate = (float(v) for v in sol.x)
    pred = phi_inf + amp * np.exp(-rate * k)
    res = y - pred
    degenerate = not (rate > 0 and np.isfinite(rate))
    return FitResult(
        "exp_decay",
        {"phi_inf": phi_inf, "amplitude": amp, "tau": 1.0 / rate if rate > 0 else float("nan"), "rate": rate},
        _r_squared(y, pred), float(res.std()), degenerate=degenerate, residuals=res,
    )


def fit_power_law(sizes: Sequence[float], values: Sequence[float]) -> FitResult:
    """Least-squares line through (log N, log K)."""
    x = np.asarray(sizes, dtype=np.float64)
    y = np.asarray(values, dtype=np.float64)
    if x.shape != y.shape or x.shape[0] < 3:
        raise ValueError("need at least three (size, value) pairs")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit needs positive sizes and values")
    fit = stats.linregress(np.log(x), np.log(y))
    pred = fit.intercept + fit.slope * np.log(x)
    res = np.log(y) - pred
    return FitResult("power_law", {"prefactor": float(np.exp(fit.intercept)), "exponent": float(fit.slope),
                                   "exponent_stderr": float(fit.stderr)},
                     _r_squared(np.log(y), pred), float(res.std()), residuals=res)


@dataclass
class SweepConfig:
    """Grid of system sizes and policies plus the task recipe.

    ``task`` is ``mackey_glass`` (reservoir-driven one-step prediction) or
    ``random`` (i.i.d. uniform intensities with a planted-plus-noise target),
    the latter for quick runs.
    """

    sizes: tuple = (64, 128, 256, 512, 961)
    minimizers: int = 8
    policies: tuple = POLICIES
    t_train: int = 1000
    t_test: int = 500
    washout: int = 100
    epsilon: float = 0.0
    seed: int = 0
    max_epochs: int = 1_000_000
    task: str = "mackey_glass"
    spectral_radius: float = 0.9
    leak_rate: float = 1.0
    input_scale: float = 2.0
    connectivity: float = 0.1
    bias_scale: float = 1.0
    target_norm: str = "zscore"
    readout_gain: float = 1.0
    init_density: float = 0.5

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        self.policies = tuple(self.policies)
        if not self.sizes or any(b <= a for a, b in zip(self.sizes, self.sizes[1:])):
            raise ValueError("sizes must be nonempty and strictly increasing")
        if self.sizes[0] < 1:
            raise ValueError("sizes must be positive")
        if self.minimizers < 1:
            raise ValueError("minimizers must be >= 1")
        unknown = set(self.policies) - set(POLICIES)
        if not self.policies or unknown:
            raise ValueError(f"policies must be drawn from {POLICIES}")
        if self.task not in ("mackey_glass", "random"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.epsilon < 0 or self.max_epochs < 1:
            raise ValueError("need epsilon >= 0 and max_epochs >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


def build_instance(cfg: SweepConfig, size: int):
    """Training objective, optional test pair and shared start weights for one size."""
    if cfg.task == "random":
        from .tasks import synthetic_target
        state = random_state_matrix(size, cfg.t_train + cfg.t_test, "uniform01", derive_seed(cfg.seed, size, 1000))
        e = state.values / (0.5 * state.values.sum(axis=1).mean()) * cfg.readout_gain
        planted = random_weights(size, derive_seed(cfg.seed, size, 1001))
        target = synthetic_target(e, planted, 0.1, derive_seed(cfg.seed, size, 1002))
        train = (e[: cfg.t_train], target[: cfg.t_train])
        test = (e[cfg.t_train:], target[cfg.t_train:]) if cfg.t_test else None
    else:
        res_cfg = ReservoirConfig(size, cfg.spectral_radius, cfg.leak_rate, cfg.input_scale,
                                  cfg.connectivity, cfg.bias_scale, derive_seed(cfg.seed, size, 1000))
        series = mackey_glass(cfg.washout + cfg.t_train + cfg.t_test + 1, seed=derive_seed(cfg.seed, size, 1001))
        task = make_task(res_cfg, series, cfg.t_train, cfg.t_test, cfg.washout,
                         target_norm=cfg.target_norm, readout_gain=cfg.readout_gain)
        train = (task.state_train.values, task.target_train)
        test = task.test_pair()
    obj = Objective.build(*train)
    w0 = random_weights(size, derive_seed(cfg.seed, size, 1003), cfg.init_density)
    return obj, test, w0


@dataclass
class CellResult:
    size: int
    policy: str
    K: np.ndarray = None
    final_train: np.ndarray = None
    final_test: Optional[np.ndarray] = None
    mean_curve: np.ndarray = field(default=None, repr=False)
    std_curve: np.ndarray = field(default=None, repr=False)
    reasons: dict = field(default_factory=dict)
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def K_mean(self) -> float:
        return float(self.K.mean())

    @property
    def K_std(self) -> float:
        return float(self.K.std())

    def summary(self) -> dict:
        if not self.ok:
            return {"size": self.size, "policy": self.policy, "error": self.error}
        out = {
            "size": self.size, "policy": self.policy, "K_mean": self.K_mean, "K_std": self.K_std,
            "final_train_mean": float(self.final_train.mean()), "final_train_std": float(self.final_train.std()),
            "converged_reason": self.reasons,
        }
        if self.final_test is not None:
            out["final_test_mean"] = float(self.final_test.mean())
            out["final_test_std"] = float(self.final_test.std())
        return out


@dataclass
class SweepReport:
    config: SweepConfig
    cells: list
    scaling: dict
    exponential: dict
    speedup: dict

    def cell(self, size: int, policy: str) -> CellResult:
        for c in self.cells:
            if c.size == size and c.policy == policy:
                return c
        raise KeyError((size, policy))

    @property
    def failures(self) -> list:
        return [c.summary() for c in self.cells if not c.ok]

    def fits_json(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "curve_padding": "carry_forward",
            "cells": [c.summary() for c in self.cells],
            "scaling": {p: (f.to_json() if f is not None else None) for p, f in self.scaling.items()},
            "exponential": {k: f.to_json() for k, f in self.exponential.items()},
            "speedup_markovian_over_greedy": {str(k): v for k, v in self.speedup.items()},
            "failures": self.failures,
        }

    def write(self, out_dir) -> list:
        out = Path(out_dir)
        (out / "curves").mkdir(parents=True, exist_ok=True)
        paths = [out / "sweep.csv", out / "fits.json"]
        with open(paths[0], "w", newline="", encoding="ascii") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["size", "policy", "minimizer", "K", "final_train_error", "final_test_error"])
            for c in self.cells:
                if not c.ok:
                    continue
                for i in range(c.K.shape[0]):
                    test = "" if c.final_test is None else fmt(c.final_test[i])
                    w.writerow([c.size, c.policy, i, int(c.K[i]), fmt(c.final_train[i]), test])
        for c in self.cells:
            if not c.ok:
                continue
            p = out / "curves" / f"{c.size}_{c.policy}.csv"
            with open(p, "w", newline="", encoding="ascii") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["epoch", "mean_error", "std_error"])
                for k, (m, s) in enumerate(zip(c.mean_curve, c.std_curve)):
                    w.writerow([k, fmt(m), fmt(s)])
            paths.append(p)
        dump_json(paths[1], self.fits_json())
        return paths


def _run_cell(cfg: SweepConfig, size: int, pidx: int, policy: str, inst, n_jobs: int) -> CellResult:
    obj, test, w0 = inst
    seeds = [derive_seed(cfg.seed, size, pidx, i) for i in range(cfg.minimizers)]
    dcfg = DescentConfig(policy=policy, max_epochs=cfg.max_epochs, target_error=cfg.epsilon,
                         record_test_error=test is not None)
    ens = run_ensemble(obj, w0, dcfg, seeds, test=test, n_jobs=n_jobs)
    final_test = None
    if test is not None:
        final_test = np.array([t.final_test_error for t in ens.traces])
    return CellResult(
        size=size, policy=policy, K=ens.K,
        final_train=np.array([t.final_error for t in ens.traces]),
        final_test=final_test, mean_curve=ens.mean_error, std_curve=ens.std_error,
        reasons={r: int(v) for r, v in sorted(ens.reasons.items())},
    )


def run_sweep(cfg: SweepConfig, out_dir=None, n_jobs: int = 1) -> SweepReport:
    """Run every (size, policy) cell; a failing cell is recorded and skipped."""
    cells = []
    for size in cfg.sizes:
        try:
            inst = build_instance(cfg, size)
        except Exception as exc:  # noqa: BLE001 - isolate per-size failures
            cells += [CellResult(size, p, error=f"{type(exc).__name__}: {exc}") for p in cfg.policies]
            continue
        for policy in cfg.policies:
            pidx = POLICIES.index(policy)
            try:
                cells.append(_run_cell(cfg, size, pidx, policy, inst, n_jobs))
            except Exception as exc:  # noqa: BLE001
                cells.append(CellResult(size, policy, error=f"{type(exc).__name__}: {exc}"))

    scaling = {}
    for policy in cfg.policies:
        good = [c for c in cells if c.policy == policy and c.ok and c.K_mean > 0]
        scaling[policy] = fit_power_law([c.size for c in good], [c.K_mean for c in good]) if len(good) >= 3 else None
    exponential = {}
    for c in cells:
        if c.ok and c.mean_curve.shape[0] >= 10:
            exponential[f"{c.size}_{c.policy}"] = fit_exponential(c.mean_curve)
    speedup = {}
    if {"markovian", "greedy"} <= set(cfg.policies):
        for size in cfg.sizes:
            m = [c for c in cells if c.size == size and c.policy == "markovian" and c.ok]
            g = [c for c in cells if c.size == size and c.policy == "greedy" and c.ok]
            if m and g and g[0].K_mean > 0:
                speedup[size] = m[0].K_mean / g[0].K_mean
    report = SweepReport(cfg, cells, scaling, exponential, speedup)
    if out_dir is not None:
        report.write(out_dir)
    return report
