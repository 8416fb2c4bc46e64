"""Command-line entry point: ``boolcd {train,sweep,theory,gen-task}``.

Exit codes: 0 success, 2 usage or configuration error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, config, io
from .bench import CellResult, SweepConfig, SweepReport, fit_exponential, fit_power_law, run_sweep
from .descent import DescentConfig, derive_seed, random_weights, run_ensemble
from .exceptions import ConfigError, SizeBoundError
from .objective import Objective
from .reservoir import ReservoirConfig
from .tasks import load_task, make_task, mackey_glass, save_task
from .theory import MAX_PAIR_N, SmallInstance, estimate_beta, theory_report

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _common(p):
    p.add_argument("--config", help="INI config file or a previous manifest.json")
    p.add_argument("--seed", type=int, help=f"master seed (fallback: ${config.SEED_ENV}, then 0)")
    p.add_argument("--threads", type=int, help="worker processes (default: all cores)")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--timing", action="store_true", help="record wall-clock time in the manifest")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="boolcd", description="Boolean readout training by coordinate descent.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train an ensemble of Boolean minimizers")
    _common(p)
    p.add_argument("--policy", choices=("markovian", "greedy"))
    p.add_argument("--n", type=int, help="reservoir nodes")
    p.add_argument("--epochs", type=int, help="epoch budget per minimizer")
    p.add_argument("--minimizers", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--state", help="training state matrix file (CSV or binary)")
    p.add_argument("--target", help="training target CSV")

    p = sub.add_parser("sweep", help="K versus N scaling sweep")
    _common(p)
    p.add_argument("--sizes", help="comma-separated N grid")
    p.add_argument("--minimizers", type=int)
    p.add_argument("--policies", help="comma-separated policies")
    p.add_argument("--task", choices=("mackey_glass", "random"))
    p.add_argument("--fixture", choices=("linear",), help="skip descent and fit planted K = 3 N data")

    p = sub.add_parser("theory", help="contraction-constant report on small instances")
    _common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--t", type=int)
    p.add_argument("--instances", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--policy", choices=("markovian", "greedy"))
    p.add_argument("--kappa-mode", choices=("exact_vertex", "uniform_only"))
    p.add_argument("--state", help="state matrix file for a single fixed instance")
    p.add_argument("--target", help="target CSV for a single fixed instance")
    p.add_argument("--no-beta", action="store_true", help="skip the spectral exponent estimate")

    p = sub.add_parser("gen-task", help="generate and export a prediction task")
    _common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--t-train", type=int)
    p.add_argument("--t-test", type=int)
    p.add_argument("--washout", type=int)
    p.add_argument("--binary", action="store_true", default=None)
    return parser


def _threads(cfg, flag) -> int:
    n = flag if flag is not None else cfg["run"]["threads"]
    if n is None:
        return os.cpu_count() or 1
    if n < 1:
        raise ConfigError("--threads must be >= 1")
    return int(n)


def _reservoir(cfg, n, seed) -> ReservoirConfig:
    r = cfg["reservoir"]
    return ReservoirConfig(n, r["spectral_radius"], r["leak_rate"], r["input_scale"],
                           r["connectivity"], r["bias_scale"], seed)


def _task(cfg, seed):
    t = cfg["task"]
    n = cfg["reservoir"]["n_nodes"]
    res_cfg = _reservoir(cfg, n, derive_seed(seed, 1))
    series = mackey_glass(t["washout"] + t["t_train"] + t["t_test"] + 1, seed=derive_seed(seed, 2))
    return make_task(res_cfg, series, t["t_train"], t["t_test"], t["washout"],
                     target_norm=t["target_norm"], readout_gain=t["readout_gain"],
                     meta={"seed": seed})


def _manifest(out: Path, command: str, cfg: dict, seed: int, outputs, started, timing: bool):
    rel = sorted(str(Path(p).relative_to(out)) for p in outputs)
    data = {"command": command, "config": cfg, "seed": seed, "version": __version__, "outputs": rel}
    if timing:
        data["wall_clock_seconds"] = time.perf_counter() - started
    io.dump_json(out / "manifest.json", data)


def cmd_train(args, cfg, seed, started) -> int:
    config.override(cfg, "descent", "policy", args.policy)
    config.override(cfg, "reservoir", "n_nodes", args.n)
    config.override(cfg, "descent", "max_epochs", args.epochs)
    config.override(cfg, "descent", "minimizers", args.minimizers)
    config.override(cfg, "descent", "epsilon", args.epsilon)
    config.override(cfg, "task", "state_file", args.state)
    config.override(cfg, "task", "target_file", args.target)
    d = cfg["descent"]
    t = cfg["task"]
    if d["minimizers"] < 1 or d["max_epochs"] < 1:
        raise ConfigError("minimizers and max_epochs must be >= 1")
    test = None
    if t["state_file"]:
        if not t["target_file"]:
            raise ConfigError("a state file needs a matching target file")
        state = io.read_state(t["state_file"]).values
        target = io.read_vector_csv(t["target_file"])
        if t["test_state_file"] and t["test_target_file"]:
            test = (io.read_state(t["test_state_file"]).values, io.read_vector_csv(t["test_target_file"]))
    else:
        task = _task(cfg, seed)
        state, target = task.state_train.values, task.target_train
        test = task.test_pair()
    obj = Objective.build(state, target)
    w0 = random_weights(obj.n, derive_seed(seed, 3), d["init_density"])
    dcfg = DescentConfig(d["policy"], 0, d["max_epochs"], d["epsilon"], d["stop_on_local_min"],
                         record_test_error=test is not None)
    seeds = [derive_seed(seed, 4, i) for i in range(d["minimizers"])]
    ens = run_ensemble(obj, w0, dcfg, seeds, test=test, n_jobs=_threads(cfg, args.threads))
    out = Path(args.out or "runs/train")
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    for i, trace in enumerate(ens.traces):
        p = out / f"trace_{i:03d}.csv"
        trace.write_csv(p)
        outputs.append(p)
    summary = ens.summary()
    summary["final_error"] = [tr.final_error for tr in ens.traces]
    summary["K"] = [tr.epochs_to_converge for tr in ens.traces]
    if len(ens.mean_error) >= 10:
        summary["exponential_fit"] = fit_exponential(ens.mean_error).to_json()
    io.dump_json(out / "summary.json", summary)
    outputs.append(out / "summary.json")
    _manifest(out, "train", cfg, seed, outputs, started, args.timing)
    print(f"K_mean {ens.K_mean:.1f} final_error {np.mean(summary['final_error']):.6g}")
    return EXIT_OK


def _sweep_config(cfg, seed) -> SweepConfig:
    s, t, r = cfg["sweep"], cfg["task"], cfg["reservoir"]
    return SweepConfig(
        sizes=tuple(config.int_list(s["sizes"], "sizes")), minimizers=s["minimizers"],
        policies=tuple(config.str_list(s["policies"])), t_train=t["t_train"], t_test=t["t_test"],
        washout=t["washout"], epsilon=s["epsilon"], seed=seed, max_epochs=s["max_epochs"],
        task=s["task"], spectral_radius=r["spectral_radius"], leak_rate=r["leak_rate"],
        input_scale=r["input_scale"], connectivity=r["connectivity"], bias_scale=r["bias_scale"],
        target_norm=s["target_norm"], readout_gain=t["readout_gain"],
        init_density=cfg["descent"]["init_density"],
    )


def _fixture_report(sc: SweepConfig) -> SweepReport:
    """Planted K = 3 N with an exact exponential mean curve."""
    cells = []
    for size in sc.sizes:
        for policy in sc.policies:
            k = np.arange(10 * size)
            curve = 0.01 + np.exp(-k / size)
            cells.append(CellResult(size, policy, K=np.full(sc.minimizers, 3 * size),
                                    final_train=np.full(sc.minimizers, 0.01), final_test=None,
                                    mean_curve=curve, std_curve=np.zeros_like(curve)))
    scaling = {p: fit_power_law(sc.sizes, [3 * s for s in sc.sizes]) if len(sc.sizes) >= 3 else None
               for p in sc.policies}
    expo = {f"{c.size}_{c.policy}": fit_exponential(c.mean_curve) for c in cells}
    return SweepReport(sc, cells, scaling, expo, {})


def cmd_sweep(args, cfg, seed, started) -> int:
    config.override(cfg, "sweep", "sizes", args.sizes)
    config.override(cfg, "sweep", "minimizers", args.minimizers)
    config.override(cfg, "sweep", "policies", args.policies)
    config.override(cfg, "sweep", "task", args.task)
    try:
        sc = _sweep_config(cfg, seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = Path(args.out or "runs/sweep")
    if args.fixture:
        report = _fixture_report(sc)
    else:
        report = run_sweep(sc, n_jobs=_threads(cfg, args.threads))
    outputs = report.write(out)
    _manifest(out, "sweep", cfg, seed, outputs, started, args.timing)
    for policy in sc.policies:
        fit = report.scaling.get(policy)
        if fit is None:
            print(f"scaling_exponent {policy} nan nan")
        else:
            print(f"scaling_exponent {policy} {fit.params['exponent']:.2f} {fit.r_squared:.4f}")
    for failure in report.failures:
        print(f"cell failed: {failure}", file=sys.stderr)
    return EXIT_OK


def cmd_theory(args, cfg, seed, started) -> int:
    for key in ("n", "t", "instances", "trials", "policy"):
        config.override(cfg, "theory", key, getattr(args, key))
    config.override(cfg, "theory", "kappa_mode", args.kappa_mode)
    config.override(cfg, "theory", "state_file", args.state)
    config.override(cfg, "theory", "target_file", args.target)
    th = cfg["theory"]
    eta = float(th["eta"]) if str(th["eta"]).strip() else None
    if th["state_file"]:
        if not th["target_file"]:
            raise ConfigError("a state file needs a matching target file")
        state = io.read_state(th["state_file"])
        target = io.read_vector_csv(th["target_file"])
        if state.n_nodes > MAX_PAIR_N:
            raise SizeBoundError(f"theory checks enumerate pairs of states; N={state.n_nodes} exceeds {MAX_PAIR_N}")
        instances = [SmallInstance(Objective.build(state, target, eta))]
    else:
        if th["n"] > MAX_PAIR_N:
            raise SizeBoundError(f"theory checks enumerate pairs of states; N={th['n']} exceeds {MAX_PAIR_N}")
        if th["n"] < 1 or th["t"] < 1 or th["instances"] < 1:
            raise ConfigError("n, t and instances must be >= 1")
        instances = [SmallInstance.random(th["n"], th["t"], derive_seed(seed, 10, i), th["distribution"],
                                          th["noise_std"], eta) for i in range(th["instances"])]
    beta = None
    if not args.no_beta and str(th["beta_sizes"]).strip():
        beta = estimate_beta(config.int_list(th["beta_sizes"], "beta_sizes"), th["beta_distribution"],
                             th["beta_trials"], derive_seed(seed, 11))
    report = theory_report(instances, th["policy"], th["trials"], th["kappa_mode"], derive_seed(seed, 12), beta)
    out = Path(args.out or "runs/theory")
    out.mkdir(parents=True, exist_ok=True)
    io.dump_json(out / "theory.json", report)
    _manifest(out, "theory", cfg, seed, [out / "theory.json"], started, args.timing)
    print(io.to_json_text({k: report[k] for k in ("kappa", "kappa_variant", "rho", "rho_vacuous",
                                                 "worst_ratio", "fraction_satisfied", "beta")}))
    return EXIT_OK


def cmd_gen_task(args, cfg, seed, started) -> int:
    config.override(cfg, "reservoir", "n_nodes", args.n)
    config.override(cfg, "task", "t_train", args.t_train)
    config.override(cfg, "task", "t_test", args.t_test)
    config.override(cfg, "task", "washout", args.washout)
    config.override(cfg, "task", "binary", args.binary)
    task = _task(cfg, seed)
    out = Path(args.out or "runs/task")
    outputs = save_task(task, out, binary=cfg["task"]["binary"])
    load_task(out)  # fail loudly if the export does not round-trip
    _manifest(out, "gen-task", cfg, seed, outputs, started, args.timing)
    print(f"wrote {len(outputs)} files to {out}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "sweep": cmd_sweep, "theory": cmd_theory, "gen-task": cmd_gen_task}


def main(argv=None) -> int:
    started = time.perf_counter()
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = config.load(args.config)
        seed = config.resolve_seed(cfg, args.seed)
        return COMMANDS[args.command](args, cfg, seed, started)
    except (ConfigError, SizeBoundError) as exc:
        print(f"boolcd {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        print(f"boolcd {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
