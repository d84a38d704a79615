"""Command-line harness.

    zo-bilevel verify SUITE [--out DIR] [--seed S] [--regime R] [--n N --m M]
    zo-bilevel run --config PATH [--seeds S1,S2,...] [--jobs K] [--out DIR]
    zo-bilevel sweep --config PATH --axis FIELD --values V1,V2,... [...]
    zo-bilevel szhia-demo [--gamma G] [--steps T] [--out DIR] [--seed S]

Configs are TOML (or JSON, by file extension) with a [problem] table matching
the problem JSON schema plus solver settings (regime, N, seeds, optional
gamma / smoothing overrides / x0 / y0).  Every output file is written
atomically with round-trip float formatting, so a rerun with the same config
and seeds reproduces it byte for byte.  Exit codes: 0 success, 1 verification
failure, 2 configuration or usage error, 3 divergence.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import verify as vf
from .errors import ConfigurationError, DivergenceError, InvalidParameterError
from .io_utils import atomic_write_text, write_csv
from .problems import BlockPoint, QuadraticBilevel
from .smoothing import SmoothingParams
from .szhia import SzhiaConfig, run_szhia
from .zdsba import REGIMES, RunRecord, run_zdsba, schedule_for_problem

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3

VERIFY_SUITES = ("stein", "smoothing", "moments", "szhia", "inner",
                 "hypergrad", "rates", "all")


def _default_seed(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get("ZO_BILEVEL_SEED")
    return int(env) if env else 0


def _parse_seeds(text: str | None, config_seeds) -> list[int]:
    if text:
        return [int(s) for s in text.split(",") if s.strip()]
    if config_seeds:
        return [int(s) for s in config_seeds]
    env = os.environ.get("ZO_BILEVEL_SEED")
    if env:
        return [int(env)]
    raise ConfigurationError("no seeds given (use --seeds, the config, or ZO_BILEVEL_SEED)")


def load_config(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    text = path.read_text()
    if path.suffix == ".json":
        return json.loads(text)
    return tomllib.loads(text)


def build_problem(config: dict) -> QuadraticBilevel:
    spec = config.get("problem")
    if spec is None:
        raise ConfigurationError("config is missing the [problem] table")
    if isinstance(spec, str):
        spec = json.loads(Path(spec).read_text())
    return QuadraticBilevel.from_dict(spec)


def resolve_run(config: dict):
    """Turn a raw config dict into (problem, schedule factory inputs)."""
    problem = build_problem(config)
    regime = config.get("regime")
    if regime not in REGIMES:
        raise ConfigurationError(
            f"regime must be one of {REGIMES}, got {regime!r}")
    if "N" not in config:
        raise ConfigurationError("config is missing N")
    N = int(config["N"])
    if N < 0:
        raise ConfigurationError("N must be >= 0")
    if regime == "convex" and not problem.feasible_set.bounded:
        raise ConfigurationError("convex regime: bounded feasible set required")
    smoothing = None
    if "smoothing" in config:
        smoothing = SmoothingParams(**config["smoothing"])
    gamma = config.get("gamma")
    x0 = np.asarray(config.get("x0", np.zeros(problem.n)), dtype=float)
    y0 = np.asarray(config.get("y0", np.zeros(problem.m)), dtype=float)
    if x0.shape != (problem.n,) or y0.shape != (problem.m,):
        raise ConfigurationError("x0/y0 dimensions do not match the problem")
    warm = bool(config.get("warm_start_z", False))
    return problem, regime, N, gamma, smoothing, x0, y0, warm


def record_rows(rec: RunRecord):
    for k in range(rec.N + 1):
        sched = ((rec.eps[k], int(rec.b[k]), int(rec.t[k]), rec.alphas[k])
                 if k < rec.N else ("", "", "", ""))
        yield (rec.seed, k, *sched, *[float(v) for v in rec.xs[k]])


def write_record(out: Path, rec: RunRecord, problem: QuadraticBilevel,
                 schedule=None) -> None:
    n = problem.n
    header = ["seed", "k", "eps", "b", "t", "alpha"] + [f"x{j}" for j in range(n)]
    write_csv(out / f"run-seed{rec.seed}.csv", header, record_rows(rec))
    sidecar = {
        "seed": rec.seed,
        "regime": rec.regime,
        "N": rec.N,
        "draws_G": rec.draws_G,
        "draws_F": rec.draws_F,
        "x_hat": [float(v) for v in np.atleast_1d(rec.x_hat)],
        "R": rec.R,
        "problem": problem.to_dict(),
    }
    if schedule is not None:
        sidecar["schedule"] = {
            "regime": schedule.regime, "N": schedule.N,
            "gamma": schedule.gamma, "lambda_g": schedule.lambda_g,
            "L1_G": schedule.L1_G, "lambda_psi": schedule.lambda_psi,
            "L1_psi": schedule.L1_psi, "alpha_const": schedule.alpha_const,
            "warm_start_z": schedule.warm_start_z,
        }
        sidecar["smoothing"] = {
            "eta1": schedule.smoothing.eta1, "mu1": schedule.smoothing.mu1,
            "eta2": schedule.smoothing.eta2, "mu2": schedule.smoothing.mu2,
        }
    atomic_write_text(out / f"run-seed{rec.seed}.json",
                      json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def _run_one(problem, regime, N, gamma, smoothing, x0, y0, warm, seed):
    schedule = schedule_for_problem(problem, regime, N, gamma=gamma,
                                    smoothing=smoothing, warm_start_z=warm)
    rec = run_zdsba(problem, schedule, x0, y0, seed=seed)
    return rec, schedule


def cmd_run(args) -> int:
    config = load_config(args.config)
    problem, regime, N, gamma, smoothing, x0, y0, warm = resolve_run(config)
    seeds = _parse_seeds(args.seeds, config.get("seeds"))
    out = Path(args.out or config.get("out", "runs"))
    out.mkdir(parents=True, exist_ok=True)

    if N == 0:
        header = ["seed", "k", "eps", "b", "t", "alpha"] + \
                 [f"x{j}" for j in range(problem.n)]
        for seed in seeds:
            write_csv(out / f"run-seed{seed}.csv", header, [])
        print(f"N=0: wrote {len(seeds)} empty run files to {out}")
        return EXIT_OK

    results = []
    if args.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(_run_one, problem, regime, N, gamma,
                                   smoothing, x0, y0, warm, seed)
                       for seed in seeds]
            results = [f.result() for f in futures]
    else:
        results = [_run_one(problem, regime, N, gamma, smoothing,
                            x0, y0, warm, seed) for seed in seeds]

    finals = []
    for rec, schedule in results:
        write_record(out, rec, problem, schedule)
        finals.append(float(problem.psi_values(rec.x_hat[None, :])[0]))
    finals = np.asarray(finals)
    spread = finals.std(ddof=1) if len(finals) > 1 else 0.0
    print(f"{regime} N={N} seeds={len(seeds)}: "
          f"outer objective at output point = {finals.mean():.6g} +/- {spread:.6g}")
    return EXIT_OK


SWEEP_AXES = ("N", "gamma", "sigma", "eta1", "mu1", "eta2", "mu2")


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    axis = args.axis
    if axis not in SWEEP_AXES:
        raise ConfigurationError(f"sweep axis must be one of {SWEEP_AXES}")
    try:
        values = [int(v) if axis == "N" else float(v)
                  for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"bad sweep values: {exc}") from exc
    if not values:
        raise ConfigurationError("sweep needs at least one value")
    seeds = _parse_seeds(args.seeds, config.get("seeds"))
    out = Path(args.out or config.get("out", "runs"))
    out.mkdir(parents=True, exist_ok=True)

    rows = []
    for value in values:
        cfg = dict(config)
        if axis in ("eta1", "mu1", "eta2", "mu2"):
            cfg["smoothing"] = dict(cfg.get("smoothing", {}), **{axis: value})
        elif axis == "sigma":
            prob = dict(cfg["problem"])
            prob["noise"] = dict(prob.get("noise", {"kind": "additive-value"}),
                                 sigma=value)
            cfg["problem"] = prob
        else:
            cfg[axis] = value
        problem, regime, N, gamma, smoothing, x0, y0, warm = resolve_run(cfg)
        for seed in seeds:
            rec, _ = _run_one(problem, regime, N, gamma, smoothing,
                              x0, y0, warm, seed)
            psi_out = float(problem.psi_values(rec.x_hat[None, :])[0])
            rows.append((value, seed, rec.N, rec.draws_G, rec.draws_F, psi_out))
    write_csv(out / f"sweep-{axis}.csv",
              (axis, "seed", "N", "draws_G", "draws_F", "psi_at_output"), rows)
    print(f"sweep over {axis}: {len(values)} values x {len(seeds)} seeds "
          f"-> {out / f'sweep-{axis}.csv'}")
    return EXIT_OK


def cmd_szhia_demo(args) -> int:
    problem, anchor, z_bar = vf._szhia_fixture()
    seed = _default_seed(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = SzhiaConfig(gamma=args.gamma, T=args.steps, mu1=0.01, mu2=0.01,
                      z0=np.zeros(problem.m), record_every=max(1, args.steps // 50))
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    res = run_szhia(problem.oracle_g, problem.oracle_f, anchor, cfg, rng)
    rows = [(int(tau), *[float(v) for v in z], float(np.linalg.norm(z - z_bar)))
            for tau, z in zip(res.trajectory_steps, res.trajectory)]
    header = ["tau"] + [f"z{j}" for j in range(problem.m)] + ["error_norm"]
    write_csv(out / "szhia-demo.csv", header, rows)
    print(f"Hessian-inverse SGD: T={res.T} gamma={args.gamma} "
          f"final error={np.linalg.norm(res.z - z_bar):.4g} "
          f"(lower-level draws {res.draws_G}, upper-level draws {res.draws_F})")
    return EXIT_OK


def cmd_verify(args) -> int:
    seed = _default_seed(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    suites = VERIFY_SUITES[:-1] if args.suite == "all" else (args.suite,)
    all_ok = True

    for suite in suites:
        bundles, fits = [], []
        if suite == "stein":
            bundles = vf.check_stein(seed=seed)
        elif suite == "smoothing":
            bundles = vf.check_smoothing_bounds(seed=seed)
        elif suite == "moments":
            bundles = vf.check_moment_bounds(seed=seed)
        elif suite == "szhia":
            bundles, fits = vf.check_szhia(seed=seed)
        elif suite == "inner":
            bundles = vf.check_inner_sgd(seed=seed)
        elif suite == "hypergrad":
            bundles, fits = vf.check_hypergradient(seed=seed)
        elif suite == "rates":
            regimes = (args.regime,) if args.regime else REGIMES
            fits = [vf.check_rates(r, seed=seed, n=args.n, m=args.m)
                    for r in regimes]
        if bundles:
            vf.write_bundles_csv(out / f"{suite}.csv", bundles)
        if fits:
            vf.write_ratefits_csv(out / f"{suite}-rates.csv", fits)
            vf.write_rate_points_csv(out / f"{suite}-rate-points.csv", fits)
            if suite == "rates":
                vf.write_ratefits_csv(out / "rates.csv", fits)
        ok = all(b.passed for b in bundles) and all(f.passed for f in fits)
        all_ok = all_ok and ok
        verdict = "PASS" if ok else "FAIL"
        print(f"{suite}: {verdict} "
              f"({len(bundles)} bounds, {len(fits)} rate fits)")
    return EXIT_OK if all_ok else EXIT_FAIL


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zo-bilevel",
        description="Zeroth-order stochastic bilevel optimization toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_verify = sub.add_parser("verify", help="run a statistical verification suite")
    p_verify.add_argument("suite", choices=VERIFY_SUITES)
    p_verify.add_argument("--out", default="verify-out")
    p_verify.add_argument("--seed", type=int, default=None)
    p_verify.add_argument("--regime", choices=REGIMES, default=None)
    p_verify.add_argument("--n", type=int, default=1)
    p_verify.add_argument("--m", type=int, default=1)

    p_run = sub.add_parser("run", help="solve a configured problem per seed")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seeds", default=None)
    p_run.add_argument("--jobs", type=int, default=1)
    p_run.add_argument("--out", default=None)

    p_sweep = sub.add_parser("sweep", help="grid a config field across values")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--axis", required=True)
    p_sweep.add_argument("--values", required=True)
    p_sweep.add_argument("--seeds", default=None)
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.add_argument("--out", default=None)

    p_demo = sub.add_parser("szhia-demo",
                            help="demo of the Hessian-inverse SGD subroutine")
    p_demo.add_argument("--gamma", type=float, default=0.02)
    p_demo.add_argument("--steps", type=int, default=300)
    p_demo.add_argument("--out", default="demo-out")
    p_demo.add_argument("--seed", type=int, default=None)

    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        if args.command == "verify":
            return cmd_verify(args)
        if args.command == "run":
            return cmd_run(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        if args.command == "szhia-demo":
            return cmd_szhia_demo(args)
    except (ConfigurationError, InvalidParameterError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
