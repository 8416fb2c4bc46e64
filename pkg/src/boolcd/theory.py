"""Contraction constants and exhaustive checks on small instances.

Everything here enumerates the 2^N hypercube, so problem sizes are capped
(N <= 16 for the cache, N <= 12 where pairs of states are enumerated).

Notation: ``g = grad phi(x)``, ``lam = lambda_max(E^T E)``,
``v = x - g / lam`` and ``Pi`` is rounding to the hypercube. The
contraction constant is

    kappa = 1 - max_{x, x' != Pi(x), pi in simplex}
                ||D(sqrt pi)(Pi(v) - v)|| / ||D(sqrt pi)(x' - v)||

and the per-step factor is

    rho = kappa * (1 - ||pi||_inf * lam (1 - kappa) / eta * (eta / (2N) - 1)).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import linalg, stats

from .descent import SelectorPolicy
from .exceptions import SizeBoundError
from .objective import Objective, lambda_max, phi_real, round_to_hypercube
from .reservoir import random_state_matrix

MAX_CACHE_N = 16
MAX_CACHE_T = 32
MAX_PAIR_N = 12
KAPPA_MODES = ("exact_vertex", "uniform_only")


def all_spins(n: int) -> np.ndarray:
    """Every point of {-1,1}^n; row ``s`` has coordinate ``i`` = +1 iff bit ``i`` of ``s`` is set."""
    idx = np.arange(2 ** n)[:, None]
    bits = (idx >> np.arange(n)[None, :]) & 1
    return (2 * bits - 1).astype(np.int8)


def spin_index(x) -> int:
    x = np.asarray(x)
    return int(((x > 0).astype(np.int64) << np.arange(x.shape[0])).sum())


class SmallInstance:
    """An objective with phi tabulated on the whole hypercube."""

    def __init__(self, objective: Objective):
        if objective.n > MAX_CACHE_N:
            raise SizeBoundError(f"N={objective.n} exceeds the enumeration bound {MAX_CACHE_N}")
        if objective.t > MAX_CACHE_T:
            raise SizeBoundError(f"T={objective.t} exceeds the small-instance bound {MAX_CACHE_T}")
        self.objective = objective
        self.n = objective.n
        self.spins = all_spins(self.n)
        self.spins.setflags(write=False)
        x = self.spins.astype(np.float64)
        r = objective.offset[None, :] - x @ objective.half_matrix.T
        self.phi = np.einsum("ij,ij->i", r, r) + 0.5 * objective.eta * self.n
        self.phi.setflags(write=False)
        self.grads = -2.0 * r @ objective.half_matrix + objective.eta * x
        self.grads.setflags(write=False)
        self.lam = lambda_max(objective.state).raw

    @classmethod
    def random(cls, n: int, t: int, seed: int = 0, distribution: str = "uniform01",
               noise_std: float = 0.1, eta: Optional[float] = None) -> "SmallInstance":
        """Random state matrix with a planted-plus-noise target."""
        from .tasks import synthetic_target
        rng = np.random.default_rng(seed)
        state = random_state_matrix(n, t, distribution, int(rng.integers(2**63)))
        planted = (rng.random(n) < 0.5).astype(np.uint8)
        target = synthetic_target(state, planted, noise_std, int(rng.integers(2**63)))
        return cls(Objective.build(state, target, eta))

    def neighbors(self, s: int) -> np.ndarray:
        return s ^ (1 << np.arange(self.n))


def local_minimizers(inst: SmallInstance, return_indices: bool = False):
    """All states no single flip of which lowers phi."""
    idx = np.arange(2 ** inst.n)
    ok = np.ones(idx.shape[0], dtype=bool)
    for i in range(inst.n):
        ok &= inst.phi[idx ^ (1 << i)] >= inst.phi
    found = np.flatnonzero(ok)
    return found if return_indices else inst.spins[found]


def is_local_minimizer(obj: Objective, x) -> bool:
    """Brute-force single-flip check in the spin convention."""
    x = np.asarray(x, dtype=np.float64)
    base = phi_real(obj, x)
    for i in range(x.shape[0]):
        y = x.copy()
        y[i] = -y[i]
        if phi_real(obj, y) < base:
            return False
    return True


def _vertex_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """max_i |num_i| / |den_i| per row of ``den``.

    A zero denominator gives +inf when the numerator is nonzero and is
    skipped when both vanish. Rows with every coordinate skipped give -inf.
    """
    a = np.abs(num)[None, :]
    b = np.abs(den)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = a / b
    r = np.where(b == 0, np.where(a > 0, np.inf, -np.inf), r)
    return r.max(axis=1)


def _uniform_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    a = np.sqrt(num @ num)
    b = np.sqrt(np.einsum("ij,ij->i", den, den))
    with np.errstate(divide="ignore", invalid="ignore"):
        r = a / b
    return np.where(b == 0, np.inf if a > 0 else -np.inf, r)


@dataclass
class KappaResult:
    kappa: float
    kappa_raw: float
    degenerate: bool
    kappa_variant: float
    kappa_variant_raw: float
    variant_degenerate: bool
    mode: str

    def to_json(self) -> dict:
        return {"kappa": self.kappa, "kappa_raw": self.kappa_raw, "degenerate": self.degenerate,
                "kappa_variant": self.kappa_variant, "kappa_variant_raw": self.kappa_variant_raw,
                "variant_degenerate": self.variant_degenerate, "mode": self.mode}


def _from_ratio(worst: float) -> float:
    # no admissible pair (worst = -inf) leaves kappa at 1; an infinite ratio sends it to -inf
    return 1.0 - max(worst, 0.0)


def _clamp(raw: float):
    return float(min(max(raw, 0.0), 1.0)), bool(raw <= 0.0)


def kappa(inst: SmallInstance, mode: str = "exact_vertex") -> KappaResult:
    """Contraction constant by enumeration over x and x'.

    ``exact_vertex`` maximizes over the whole simplex: the squared ratio is
    linear-fractional in pi, so the maximum sits at a vertex and equals the
    largest coordinate ratio. ``uniform_only`` fixes pi to the uniform law.

    Two readings of the exclusion are computed: ``x' != Pi(x)`` (``kappa``)
    and ``x' != Pi(x - g / lam)`` (``kappa_variant``). Values at or below
    zero are clamped to 0 and flagged.
    """
    if mode not in KAPPA_MODES:
        raise ValueError(f"unknown kappa mode {mode!r}")
    if inst.n > MAX_PAIR_N:
        raise SizeBoundError(f"kappa enumerates pairs of states; N={inst.n} exceeds {MAX_PAIR_N}")
    ratio_fn = _vertex_ratio if mode == "exact_vertex" else _uniform_ratio
    spins = inst.spins.astype(np.float64)
    lam = inst.lam
    worst = -np.inf
    worst_variant = -np.inf
    for s in range(spins.shape[0]):
        x = spins[s]
        v = x - inst.grads[s] / lam
        pv = round_to_hypercube(v)
        num = pv - v
        ratios = ratio_fn(num, spins - v[None, :])
        keep = np.ones(ratios.shape[0], dtype=bool)
        keep[s] = False  # Pi(x) = x on the hypercube
        if keep.any():
            worst = max(worst, float(ratios[keep].max()))
        keep_v = np.ones(ratios.shape[0], dtype=bool)
        keep_v[spin_index(pv)] = False
        if keep_v.any():
            worst_variant = max(worst_variant, float(ratios[keep_v].max()))
    raw, raw_v = _from_ratio(worst), _from_ratio(worst_variant)
    k, deg = _clamp(raw)
    kv, deg_v = _clamp(raw_v)
    return KappaResult(k, raw, deg, kv, raw_v, deg_v, mode)


def simplex_grid(n: int, points: int = 10_000) -> np.ndarray:
    """Regular grid on the probability simplex with about ``points`` nodes, vertices included."""
    from math import comb
    m = 1
    while comb(m + n - 1, n - 1) < points:
        m += 1
    if n == 1:
        return np.ones((1, 1))
    rows = []

    def rec(prefix, left, slots):
        if slots == 1:
            rows.append(prefix + [left])
            return
        for k in range(left + 1):
            rec(prefix + [k], left - k, slots - 1)

    rec([], m, n)
    return np.array(rows, dtype=np.float64) / m


def kappa_grid(inst: SmallInstance, points: int = 10_000, variant: bool = False) -> float:
    """Brute-force kappa with pi restricted to a simplex grid (unclamped)."""
    if inst.n > 4:
        raise SizeBoundError("the grid oracle is meant for N <= 4")
    grid = simplex_grid(inst.n, points)
    spins = inst.spins.astype(np.float64)
    worst = -np.inf
    for s in range(spins.shape[0]):
        x = spins[s]
        v = x - inst.grads[s] / inst.lam
        pv = round_to_hypercube(v)
        excluded = spin_index(pv) if variant else s
        num2 = grid @ (pv - v) ** 2
        for j in range(spins.shape[0]):
            if j == excluded:
                continue
            den2 = grid @ (spins[j] - v) ** 2
            with np.errstate(divide="ignore", invalid="ignore"):
                r = np.sqrt(num2 / den2)
            r = np.where(den2 == 0, np.where(num2 > 0, np.inf, -np.inf), r)
            worst = max(worst, float(r.max()))
    return _from_ratio(worst)


def rho_formula(kappa_value: float, pi_inf: float, lam: float, eta: float, n: int) -> float:
    if eta <= 0:
        raise ValueError("rho needs a positive eta")
    return kappa_value * (1.0 - pi_inf * (lam * (1.0 - kappa_value) / eta) * (eta / (2.0 * n) - 1.0))


def rho_flag(value: float) -> str:
    if value <= 0.0:
        return "degenerate"
    if value >= 1.0:
        return "vacuous"
    return "ok"


@dataclass
class RhoResult:
    rho: float
    flag: str
    pi_inf: float
    pi_inf_se: float
    kappa: float

    @property
    def vacuous(self) -> bool:
        return self.flag != "ok"


def max_selection_probability(policy: Union[str, SelectorPolicy], n: int, seed: int = 0,
                              epochs: Optional[int] = None):
    """``||pi||_inf`` and its standard error.

    Exact (1/N, 0) for the Markovian policy. For the greedy policy the
    largest empirical selection frequency over a calibration run of
    ``epochs`` picks after an N-epoch warm-up.
    """
    kind = policy.kind if isinstance(policy, SelectorPolicy) else policy
    if kind == "markovian":
        return 1.0 / n, 0.0
    epochs = epochs or 200 * n
    sel = SelectorPolicy("greedy", seed).initialize(n)
    for _ in range(n):
        sel.select()
    counts = np.bincount([sel.select() for _ in range(epochs)], minlength=n)
    p = counts.max() / epochs
    return float(p), float(np.sqrt(p * (1 - p) / epochs))


def rho(inst: SmallInstance, policy: Union[str, SelectorPolicy] = "markovian",
        kappa_result: Optional[KappaResult] = None, kappa_mode: str = "exact_vertex",
        seed: int = 0) -> RhoResult:
    kr = kappa_result if kappa_result is not None else kappa(inst, kappa_mode)
    pi_inf, se = max_selection_probability(policy, inst.n, seed)
    value = rho_formula(kr.kappa, pi_inf, inst.lam, inst.objective.eta, inst.n)
    return RhoResult(float(value), rho_flag(value), pi_inf, se, kr.kappa)


def _descend_cached(inst: SmallInstance, kind: str, seed: int, start: int,
                    greedy_samples: int, max_epochs: int = 100_000):
    """Descent on the tabulated phi, recording (state, pi) before every epoch."""
    sel = SelectorPolicy(kind, seed).initialize(inst.n)
    s = start
    rejected = set()
    visited = []
    for k in range(max_epochs):
        if len(rejected) == inst.n:
            break
        pi = sel.selection_probabilities(greedy_samples, seed=seed + k + 1)
        visited.append((s, pi))
        i = sel.select()
        t = s ^ (1 << i)
        if inst.phi[t] < inst.phi[s]:
            s = t
            rejected.clear()
        else:
            rejected.add(i)
    return s, visited


def expected_next_phi(inst: SmallInstance, s: int, pi: np.ndarray) -> float:
    """Exact one-step conditional expectation of phi from state ``s``."""
    current = inst.phi[s]
    flipped = inst.phi[inst.neighbors(s)]
    return float(pi @ np.minimum(current, flipped))


@dataclass
class ContractionReport:
    kappa: float
    kappa_variant: float
    rho: float
    rho_flag: str
    worst_ratio: float
    fraction_satisfied: float
    n_steps: int
    n_violations: int
    ratios: np.ndarray = field(repr=False, default=None)
    notes: list = field(default_factory=list)

    @property
    def rho_vacuous(self) -> bool:
        return self.rho_flag != "ok"


def verify_contraction(inst: SmallInstance, policy: str = "markovian", n_trials: int = 10,
                       seed: int = 0, kappa_mode: str = "exact_vertex",
                       rho_result: Optional[RhoResult] = None, kappa_result: Optional[KappaResult] = None,
                       greedy_samples: int = 4096) -> ContractionReport:
    """Compare exact one-step expected progress with ``rho`` along real runs.

    For every epoch of every run whose state differs from the run's final
    fixed point ``x_bar``, the ratio
    ``(E_k[phi(x_{k+1})] - phi(x_bar)) / (phi(x_k) - phi(x_bar))`` is
    computed exactly by summing over the N possible picks.
    """
    if inst.n > MAX_PAIR_N:
        raise SizeBoundError(f"N={inst.n} exceeds {MAX_PAIR_N}")
    kr = kappa_result if kappa_result is not None else kappa(inst, kappa_mode)
    rr = rho_result if rho_result is not None else rho(inst, policy, kr, seed=seed)
    rng = np.random.default_rng(seed)
    ratios = []
    for trial in range(n_trials):
        start = int(rng.integers(2 ** inst.n))
        final, visited = _descend_cached(inst, policy, int(rng.integers(2**31)), start, greedy_samples)
        for s, pi in visited:
            if s == final:
                continue
            gap = inst.phi[s] - inst.phi[final]
            ratios.append((expected_next_phi(inst, s, pi) - inst.phi[final]) / gap)
    ratios = np.asarray(ratios, dtype=np.float64)
    ok = ratios <= rr.rho + 1e-12
    notes = []
    if rr.flag != "ok":
        notes.append(f"rho={rr.rho:.6g} is outside (0, 1) ({rr.flag}); the bound is not a contraction test")
    if kr.degenerate:
        notes.append("kappa <= 0 before clamping")
    return ContractionReport(
        kappa=kr.kappa, kappa_variant=kr.kappa_variant, rho=rr.rho, rho_flag=rr.flag,
        worst_ratio=float(ratios.max()) if ratios.size else float("nan"),
        fraction_satisfied=float(ok.mean()) if ratios.size else float("nan"),
        n_steps=int(ratios.size), n_violations=int((~ok).sum()), ratios=ratios, notes=notes,
    )


def al_kashi_sides(g, y, t: float):
    """Both sides of <g, y> + t/2 ||y||^2 = t/2 ||y + g/t||^2 - ||g||^2 / (2t)."""
    g = np.asarray(g, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    lhs = g @ y + 0.5 * t * (y @ y)
    z = y + g / t
    rhs = 0.5 * t * (z @ z) - (g @ g) / (2.0 * t)
    return float(lhs), float(rhs)


@dataclass
class BoundReport:
    descent_lemma_checked: int = 0
    descent_lemma_violations: int = 0
    decomposition_checked: int = 0
    decomposition_violations: int = 0
    strong_convexity_checked: int = 0
    strong_convexity_violations: int = 0
    expectation_checked: int = 0
    expectation_violations: int = 0

    def to_json(self) -> dict:
        return dict(self.__dict__)


def bound_checks(inst: SmallInstance, n_states: int = 1000, seed: int = 0,
                 mc_samples: int = 2000) -> BoundReport:
    """Numerically check the per-step inequalities behind the rate.

    * descent lemma with ``lam`` for every single flip of random states;
    * expected next value against the smoothness upper bound built from
      ``z = Pi(x - g / lam)`` under uniform selection;
    * the strong-convexity step in its literal form, with weights ``pi``
      inside the inner product, toward the local minimizer reached from x
      (observational: violations are counted, not raised);
    * the exact conditional expectation against a Monte-Carlo average of
      sampled steps (4 standard errors).
    """
    obj = inst.objective
    n = inst.n
    lam = inst.lam
    rng = np.random.default_rng(seed)
    pi = np.full(n, 1.0 / n)
    rep = BoundReport()
    minimizers = set(local_minimizers(inst, return_indices=True).tolist())
    for _ in range(n_states):
        s = int(rng.integers(2 ** n))
        x = inst.spins[s].astype(np.float64)
        g = inst.grads[s]
        phi_x = inst.phi[s]
        for i in range(n):
            z = x.copy()
            z[i] = -z[i]
            bound = phi_x + g @ (z - x) + 0.5 * lam * ((z - x) @ (z - x))
            rep.descent_lemma_checked += 1
            if inst.phi[s ^ (1 << i)] > bound * (1 + 1e-12) + 1e-12:
                rep.descent_lemma_violations += 1

        z = round_to_hypercube(x - g / lam).astype(np.float64)
        d = z - x
        upper = phi_x + g @ (pi * d) + 0.5 * lam * (pi @ (d * d))
        expected = expected_next_phi(inst, s, pi)
        rep.decomposition_checked += 1
        if expected > upper + 1e-9 * max(1.0, abs(upper)):
            rep.decomposition_violations += 1

        # walk to a local minimizer with uniform picks
        cur = s
        walk_rng = np.random.default_rng(rng.integers(2**31))
        while cur not in minimizers:
            cand = cur ^ (1 << int(walk_rng.integers(n)))
            if inst.phi[cand] < inst.phi[cur]:
                cur = cand
        xbar = inst.spins[cur].astype(np.float64)
        diff = xbar - x
        lhs = diff @ (pi * g)
        rhs = inst.phi[cur] - phi_x - 0.5 * obj.eta * ((pi * diff) @ (pi * diff))
        rep.strong_convexity_checked += 1
        if lhs > rhs + 1e-9 * max(1.0, abs(rhs)):
            rep.strong_convexity_violations += 1

        picks = rng.integers(n, size=mc_samples)
        nxt = np.minimum(phi_x, inst.phi[s ^ (1 << picks)])
        se = nxt.std() / np.sqrt(mc_samples)
        rep.expectation_checked += 1
        if abs(nxt.mean() - expected) > 4 * se + 1e-9 * max(1.0, abs(expected)):
            rep.expectation_violations += 1
    return rep


@dataclass
class BetaEstimate:
    beta: float
    ci: tuple
    sizes: np.ndarray
    medians: np.ndarray
    r_squared: float


def top_gram_eigenvalue(m: np.ndarray) -> float:
    """Largest eigenvalue of ``m^T m`` by a dense symmetric solver."""
    gram = m.T @ m if m.shape[0] >= m.shape[1] else m @ m.T
    k = gram.shape[0]
    return float(linalg.eigvalsh(gram, subset_by_index=[k - 1, k - 1])[0])


def estimate_beta(sizes: Sequence[int], distribution: Union[str, Callable] = "abs_gaussian",
                  trials: int = 20, seed: int = 0, center: bool = True,
                  confidence: float = 0.95) -> BetaEstimate:
    """Log-log slope of the median top eigenvalue of ``E^T E`` against N, with T = N.

    ``center`` subtracts the empirical mean of all entries first; the
    nonzero mean of a nonnegative distribution otherwise adds a rank-one
    term of size N*T*mean^2 that dominates the spectrum. ``distribution``
    may be a name understood by :func:`random_state_matrix` or a callable
    ``(n, t, rng) -> array``.
    """
    sizes = np.asarray(sorted(set(int(s) for s in sizes)))
    if sizes.shape[0] < 3:
        raise ValueError("estimating beta needs at least three distinct sizes")
    ss = np.random.SeedSequence(seed)
    medians = []
    for n, child in zip(sizes, ss.spawn(sizes.shape[0])):
        vals = []
        for sub in child.spawn(trials):
            if callable(distribution):
                m = np.asarray(distribution(int(n), int(n), np.random.default_rng(sub)), dtype=np.float64)
            else:
                m = random_state_matrix(int(n), int(n), distribution, int(sub.generate_state(1)[0])).values
            if center:
                m = m - m.mean()
            vals.append(top_gram_eigenvalue(m))
        medians.append(np.median(vals))
    medians = np.asarray(medians)
    if np.any(medians <= 0):
        raise ValueError("degenerate regression: nonpositive eigenvalue medians")
    fit = stats.linregress(np.log(sizes), np.log(medians))
    tq = stats.t.ppf(0.5 + confidence / 2, sizes.shape[0] - 2)
    return BetaEstimate(float(fit.slope), (float(fit.slope - tq * fit.stderr), float(fit.slope + tq * fit.stderr)),
                        sizes, medians, float(fit.rvalue ** 2))


def predicted_epochs(eps: float, rho_value: float) -> float:
    """Epochs for the expected gap to shrink by ``eps``: log(1/eps) / log(1/rho)."""
    if not 0.0 < rho_value < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho_value}")
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    return float(np.log(1.0 / eps) / np.log(1.0 / rho_value))


def predicted_epochs_scaling(eps: float, n: float, alpha: float, beta: float) -> float:
    """Scaling form log(1/eps) * N^(1 + alpha - beta)."""
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    return float(np.log(1.0 / eps) * n ** (1.0 + alpha - beta))


def theory_report(instances: Sequence[SmallInstance], policy: str = "markovian", n_trials: int = 5,
                  kappa_mode: str = "exact_vertex", seed: int = 0,
                  beta: Optional[BetaEstimate] = None) -> dict:
    """Aggregate contraction checks over instances into the report schema."""
    rows = []
    for i, inst in enumerate(instances):
        rows.append(verify_contraction(inst, policy, n_trials, seed=seed + i, kappa_mode=kappa_mode))
    kappas = np.array([r.kappa for r in rows])
    unflagged = [r for r in rows if r.rho_flag == "ok"]
    steps = sum(r.n_steps for r in unflagged)
    satisfied = sum(r.n_steps - r.n_violations for r in unflagged)
    notes = []
    flagged = len(rows) - len(unflagged)
    if flagged:
        notes.append(f"{flagged} of {len(rows)} instances have rho outside (0, 1) and are excluded")
    if not unflagged:
        notes.append("no instance yields a contraction factor in (0, 1); fraction_satisfied is undefined")
    first = rows[0]
    report = {
        "kappa": float(kappas.mean()) if len(rows) > 1 else first.kappa,
        "kappa_variant": float(np.mean([r.kappa_variant for r in rows])),
        "rho": float(np.median([r.rho for r in rows])),
        "rho_vacuous": bool(not unflagged),
        "worst_ratio": float(np.nanmax([r.worst_ratio for r in rows])),
        "fraction_satisfied": (satisfied / steps) if steps else None,
        "beta": None if beta is None else beta.beta,
        "beta_ci": None if beta is None else list(beta.ci),
        "notes": notes,
        "policy": policy,
        "kappa_mode": kappa_mode,
        "n_instances": len(rows),
        "flagged_fraction": flagged / len(rows),
        "violations_unflagged": int(sum(r.n_violations for r in unflagged)),
        "instances": [
            {"kappa": r.kappa, "kappa_variant": r.kappa_variant, "rho": r.rho, "rho_flag": r.rho_flag,
             "worst_ratio": r.worst_ratio, "n_steps": r.n_steps, "n_violations": r.n_violations,
             "lambda": inst.lam, "eta": inst.objective.eta}
            for r, inst in zip(rows, instances)
        ],
    }
    return report
