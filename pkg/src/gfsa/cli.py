"""Command-line front end.

Subcommands: ``run`` (Monte Carlo battery -> report.json + curve.csv),
``theory`` (analytic predictions -> theory.json), ``grid`` (gain search ->
grid.csv + grid.json), ``zstudy`` (bias-form comparison -> zstudy.json) and
``bench`` (backend speed comparison). Outputs are machine-first (JSON/CSV,
tagged with the config hash); a human summary goes to stdout.

Exit codes: 0 success, 1 unexpected error, 2 missing/unreadable file,
3 config parse or schema violation, 4 invalid method/distribution/regime
combination, 5 universal divergence.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._config import ExperimentConfig, load_experiment
from .bench import compare_backends
from .core import ConfigError, GfsaError, RngStream
from .experiments import MseReport, grid_search, grid_values, run_battery
from .losses import DerivativeUnavailable
from .perturb import PerturbationError, bernoulli, gaussian, moments, spherical, ushape
from .theory import (
    RegimeError,
    ZStudyResult,
    asymptotic_distribution,
    mse_decomposition,
    predict_mse,
    prop3_predicate,
    sigma_eff2_from_noise,
    z_study,
)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_MISSING_FILE = 2
EXIT_SCHEMA = 3
EXIT_INVALID_COMBO = 4
EXIT_DIVERGED = 5


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        if math.isnan(f):
            return None
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2) + "\n")


def _theory_block(cfg: ExperimentConfig) -> dict:
    """Per-distribution asymptotic predictions, or the reason none exist."""
    sigma_eff2 = sigma_eff2_from_noise(cfg.noise)
    try:
        params0 = None
        per_dist = []
        dec = None
        for pair in cfg.pairs:
            if pair.dist is None:
                continue
            params = asymptotic_distribution(cfg.loss, cfg.gains, pair.dist, sigma_eff2)
            if dec is None:
                dec = mse_decomposition(
                    cfg.loss, cfg.gains.a, cfg.gains.c, params.beta_plus, sigma_eff2
                )
                params0 = params
            mse_const = predict_mse(dec, pair.dist, cfg.loss.p)
            per_dist.append(
                {
                    "label": pair.label(),
                    "moments": vars(moments(pair.dist, cfg.loss.p)),
                    "mu": params.mu,
                    "m_diag": params.m_diag,
                    "mse_constant": mse_const,
                    "mse_at_final_iteration": mse_const * cfg.iterations ** (-params.beta),
                }
            )
        if dec is None:
            return {"available": False, "reason": "no stochastic-direction pairs configured"}
        holds, value = prop3_predicate(dec)
        return {
            "available": True,
            "sigma_eff2": sigma_eff2,
            "beta": params0.beta,
            "beta_plus": params0.beta_plus,
            "lambdas": params0.lambdas,
            "u1": dec.u1,
            "u2": dec.u2,
            "q1": dec.q1,
            "q2": dec.q2,
            "d": dec.d,
            "ordering_predicate": {"holds": holds, "value": value},
            "per_dist": per_dist,
        }
    except (DerivativeUnavailable, RegimeError, ConfigError) as exc:
        return {"available": False, "reason": str(exc)}


def _report_payload(cfg: ExperimentConfig, report: MseReport, seed: int) -> dict:
    return {
        "schema": "gfsa.report.v1",
        "version": __version__,
        "config_hash": cfg.hash,
        "seed": seed,
        "backend": report.backend,
        "loss": {
            "spec": cfg.loss.config_string(),
            "p": cfg.loss.p,
            "theta_star": report.theta_star,
            "l_star": report.l_star,
            "reference_point": report.reference_point,
        },
        "gains": {
            "a": cfg.gains.a,
            "c": cfg.gains.c,
            "alpha": cfg.gains.alpha,
            "gamma": cfg.gains.gamma,
            "A": cfg.gains.A,
        },
        "iterations": report.iterations,
        "n_trials": report.n_trials,
        "pairs": [
            {
                "label": r.label,
                "method": r.method,
                "dist": r.dist_label,
                "mean_mse": r.mean_mse if math.isfinite(r.mean_mse) else "inf",
                "ci95": list(r.ci95) if math.isfinite(r.mean_mse) else ["inf", "inf"],
                "mean_mse_vs_minimizer": (
                    r.mean_mse_vs_minimizer if math.isfinite(r.mean_mse_vs_minimizer) else "inf"
                ),
                "n_diverged": r.n_diverged,
                "diverged_trials": r.diverged_trials,
                "per_trial_mse": r.per_trial_mse,
            }
            for r in report.pairs
        ],
        "welch": report.welch,
        "theory": _theory_block(cfg),
        "config": cfg.doc,
    }


def _write_curve_csv(path: Path, report: MseReport) -> None:
    if report.curve_iterations is None:
        return
    labels = [r.label for r in report.pairs]
    lines = ["iteration," + ",".join(labels)]
    curves = [
        r.curve if r.curve is not None else np.full(report.curve_iterations.size, np.nan)
        for r in report.pairs
    ]
    for row, iteration in enumerate(report.curve_iterations):
        vals = ",".join(repr(float(c[row])) for c in curves)
        lines.append(f"{int(iteration)},{vals}")
    path.write_text("\n".join(lines) + "\n")


def _print_report(report: MseReport) -> None:
    print(f"backend: {report.backend}   trials: {report.n_trials}   "
          f"iterations: {report.iterations}")
    width = max(len(r.label) for r in report.pairs)
    for r in report.pairs:
        if math.isfinite(r.mean_mse):
            line = (f"  {r.label:<{width}}  mse={r.mean_mse:.6g}  "
                    f"ci95=[{r.ci95[0]:.6g}, {r.ci95[1]:.6g}]")
        else:
            line = f"  {r.label:<{width}}  all trials diverged"
        if r.n_diverged:
            line += f"  (diverged: {r.n_diverged})"
        print(line)
    for w in report.welch:
        print(f"  welch {w['pair_a']} vs {w['pair_b']}: t={w['t']:.4g} "
              f"dof={w['dof']:.4g} p={w['p_value']:.4g}")


def _cmd_run(args) -> int:
    cfg = load_experiment(args.config)
    seed = args.seed if args.seed is not None else cfg.seed
    if not cfg.pairs:
        raise ConfigError("'pairs' must list at least one method/dist entry")
    battery = cfg.battery()
    if seed != cfg.seed:
        battery = _reseeded(battery, seed)
    parallel = args.parallel if args.parallel is not None else cfg.parallel
    report = run_battery(battery, parallelism=parallel)
    out = _out_dir(args, cfg)
    _write_json(out / "report.json", _report_payload(cfg, report, seed))
    _write_curve_csv(out / "curve.csv", report)
    _print_report(report)
    print(f"wrote {out / 'report.json'}")
    if all(r.n_diverged == report.n_trials for r in report.pairs):
        print("error: every trial of every pair diverged", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def _reseeded(battery, seed: int):
    from dataclasses import replace

    return replace(battery, base_seed=seed)


def _moment_table(p: int = 30) -> str:
    """Moment rows for the four standard perturbations (spherical at dimension p)."""
    def fmt(x):
        return "-" if x is None else f"{x:.6g}"

    rows = [("perturbation", "family", "phi", "upsilon", "xi2", "rho2")]
    for dist in (bernoulli(), ushape(), gaussian(), spherical()):
        m = moments(dist, p)
        rows.append(
            (dist.label(), dist.family, fmt(m.phi), fmt(m.upsilon), fmt(m.xi2), fmt(m.rho2))
        )
    widths = [max(len(r[i]) for r in rows) for i in range(6)]
    lines = ["  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in rows]
    lines.append(f"(spherical moments evaluated at p={p})")
    return "\n".join(lines)


def _cmd_theory(args) -> int:
    cfg = load_experiment(args.config)
    if args.moments:
        print(_moment_table(cfg.loss.p))
    block = _theory_block(cfg)
    if not block["available"]:
        print(f"error: {block['reason']}", file=sys.stderr)
        return EXIT_INVALID_COMBO
    payload = {
        "schema": "gfsa.theory.v1",
        "version": __version__,
        "config_hash": cfg.hash,
        "loss": {
            "spec": cfg.loss.config_string(),
            "p": cfg.loss.p,
            "theta_star": cfg.loss.theta_star,
            "l_star": cfg.loss.l_star,
        },
        "gains": {
            "a": cfg.gains.a,
            "c": cfg.gains.c,
            "alpha": cfg.gains.alpha,
            "gamma": cfg.gains.gamma,
            "A": cfg.gains.A,
        },
        "theory": block,
        "config": cfg.doc,
    }
    out = _out_dir(args, cfg)
    _write_json(out / "theory.json", payload)
    print(f"q1={block['q1']:.8g}  q2={block['q2']:.8g}  d={block['d']:.8g}  "
          f"predicate: holds={block['ordering_predicate']['holds']}")
    for entry in block["per_dist"]:
        print(f"  {entry['label']:<24} predicted mse constant = {entry['mse_constant']:.8g}")
    print(f"wrote {out / 'theory.json'}")
    return EXIT_OK


def _cmd_grid(args) -> int:
    cfg = load_experiment(args.config)
    if cfg.grid is None:
        raise ConfigError("config has no 'grid' section")
    g = cfg.grid
    seed = args.seed if args.seed is not None else cfg.seed
    parallel = args.parallel if args.parallel is not None else cfg.parallel
    if "pair" in g:
        from ._config import build_pair

        pair = build_pair(g["pair"]["method"], g["pair"].get("dist"))
    elif cfg.pairs:
        pair = cfg.pairs[0]
    else:
        raise ConfigError("grid search needs grid.pair or a non-empty 'pairs' list")
    if cfg.theta0 is None:
        raise ConfigError("missing required config key 'theta0'")
    a_vals = grid_values(g.get("a_min", 0.1), g.get("a_max", 1.0), g.get("a_step", 0.02))
    c_vals = grid_values(g.get("c_min", 0.1), g.get("c_max", 1.0), g.get("c_step", 0.02))
    result = grid_search(
        cfg.loss,
        pair,
        a_vals,
        c_vals,
        big_a=cfg.gains.A,
        alpha=cfg.gains.alpha,
        gamma=cfg.gains.gamma,
        trials_per_point=g.get("trials_per_point", 20),
        iterations=g.get("iterations", cfg.iterations),
        base_seed=seed,
        theta0=cfg.theta0,
        divergence_bound=cfg.divergence_bound,
        mse_reference=cfg.mse_reference,
        parallelism=parallel,
    )
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["a,c,mse,n_diverged"]
    for a, c, mse, ndiv in result.rows:
        mse_txt = repr(float(mse)) if math.isfinite(mse) else "inf"
        lines.append(f"{a!r},{c!r},{mse_txt},{ndiv}")
    (out / "grid.csv").write_text("\n".join(lines) + "\n")
    _write_json(
        out / "grid.json",
        {
            "schema": "gfsa.grid.v1",
            "config_hash": cfg.hash,
            "seed": seed,
            "pair": pair.label(),
            "a_star": result.a_star,
            "c_star": result.c_star,
            "mse_star": result.mse_star if math.isfinite(result.mse_star) else "inf",
            "n_points": len(result.rows),
        },
    )
    print(f"{pair.label()}: best gains a={result.a_star:g}, c={result.c_star:g} "
          f"(mse={result.mse_star:.6g}) over {len(result.rows)} points")
    print(f"wrote {out / 'grid.csv'}")
    return EXIT_OK


def _cmd_zstudy(args) -> int:
    cfg = None
    zdoc: dict = {}
    if args.config is not None:
        cfg = load_experiment(args.config)
        zdoc = dict(cfg.zstudy or {})
    if args.p is not None:
        zdoc["p"] = args.p
    if args.trials is not None:
        zdoc["trials"] = args.trials
    if args.a_range is not None:
        zdoc["a_range"] = args.a_range
    if "p" not in zdoc:
        raise ConfigError("zstudy needs a dimension: pass --p or a config with a zstudy section")
    seed = args.seed if args.seed is not None else (cfg.seed if cfg else 0)
    result = z_study(
        p=int(zdoc["p"]),
        a_range=float(zdoc.get("a_range", 100.0)),
        n_trials=int(zdoc.get("trials", 100_000)),
        rng=RngStream(seed, 0),
    )
    payload = {
        "schema": "gfsa.zstudy.v1",
        "config_hash": cfg.hash if cfg else None,
        "seed": seed,
        "result": vars(result),
    }
    out = _out_dir(args, cfg)
    _write_json(out / "zstudy.json", payload)
    print(_zstudy_line(result))
    print(f"wrote {out / 'zstudy.json'}")
    return EXIT_OK


def _zstudy_line(r: ZStudyResult) -> str:
    return (f"p={r.p}: P(z<=0) = {r.p_z_leq_0:.6g} (mc se {r.mc_standard_error:.2g}), "
            f"chebyshev bound = {r.chebyshev_bound:.6g}, E[z] = {r.expected_z:.6g}")


def _cmd_bench(args) -> int:
    rows = compare_backends(iterations=args.iterations, trials=args.trials)
    width = max(len(r["backend"]) for r in rows)
    for r in rows:
        print(f"  {r['backend']:<{width}}  {r['seconds']:.3f} s  "
              f"{r['iterations_per_second']:,.0f} iterations/s  (x{r['speedup']:.1f})")
    return EXIT_OK


def _out_dir(args, cfg: ExperimentConfig | None) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    if cfg is not None and cfg.out:
        return Path(cfg.out)
    return Path(".")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gfsa",
        description="Gradient-free stochastic approximation toolkit",
    )
    parser.add_argument("--version", action="version", version=f"gfsa {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        if config_required:
            p.add_argument("config", help="path to a JSON experiment config")
        else:
            p.add_argument("config", nargs="?", default=None,
                           help="optional JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--parallel", type=int, default=None,
                       help="worker processes for trial execution")
        p.add_argument("--out", default=None, help="output directory")

    p_run = sub.add_parser("run", help="run a Monte Carlo battery")
    common(p_run)
    p_run.set_defaults(handler=_cmd_run)

    p_theory = sub.add_parser("theory", help="compute asymptotic predictions")
    common(p_theory)
    p_theory.add_argument("--moments", action="store_true",
                          help="print the perturbation moment table")
    p_theory.set_defaults(handler=_cmd_theory)

    p_grid = sub.add_parser("grid", help="gain-coefficient grid search")
    common(p_grid)
    p_grid.set_defaults(handler=_cmd_grid)

    p_z = sub.add_parser("zstudy", help="Monte Carlo study of the bias-form gap")
    common(p_z, config_required=False)
    p_z.add_argument("--p", type=int, default=None, help="dimension")
    p_z.add_argument("--trials", type=int, default=None, help="Monte Carlo trials")
    p_z.add_argument("--a-range", type=float, default=None, dest="a_range",
                     help="uniform half-range for the tensor entries")
    p_z.set_defaults(handler=_cmd_zstudy)

    p_bench = sub.add_parser("bench", help="compare trajectory backends")
    p_bench.add_argument("--iterations", type=int, default=4000)
    p_bench.add_argument("--trials", type=int, default=5)
    p_bench.add_argument("--out", default=None, help=argparse.SUPPRESS)
    p_bench.set_defaults(handler=_cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except (PerturbationError, RegimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID_COMBO
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except GfsaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
