#!/usr/bin/env python3
"""
Experiment harness for multilevel Monte Carlo on Langevin equations.

Runs the experiment suites (standard Monte Carlo baseline, MLMC with
Euler-Maruyama and splitting integrators, extrapolated and discrete-increment
variants) described by a YAML experiment file and writes CSV diagnostics.

Output files, all UTF-8 with a header row and floats printed with 17
significant digits:
    <name>_summary.csv      one row per (repeat, eps)
    <name>_levels.csv       one row per (repeat, eps, level)
    <name>_bias.csv         inter-level bias rows for discrete runs and sweeps
    <name>_exact.csv        coarse-level enumeration statistics
    <name>_calibration.csv  fitted bias constants

Usage:
    python main.py run --config configs/harmonic_set1.yaml --out results
    python main.py bias --config configs/discrete_bias.yaml
    python main.py exact --config configs/discrete_distributions.yaml --budget 1000000
    python main.py calibrate --config configs/harmonic_set1.yaml --eps 1e-3,5e-4

Environment (read from .env when present):
    MLMC_SEED     default base seed when the file gives none
    MLMC_THREADS  default worker count
    MLMC_OUT      default output directory
"""

import argparse
import json
import math
import os
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np
import pandas as pd
from dotenv import load_dotenv
from rich.table import Table

from . import log
from .config import (
    DEFAULT_BIAS_SAMPLES,
    DEFAULT_PILOT_SAMPLES,
    ExperimentSpec,
    MethodSpec,
    Problem,
    load_experiments,
)
from .errors import ConfigError, MlmcError
from .exact_coarse import DEFAULT_BUDGET, enumerate_tree
from .integrators import Scheme
from .log import console
from .mlmc import (
    Calibration,
    MlmcConfig,
    MlmcResult,
    calibrate_levels,
    inter_level_bias,
    m0_for_tolerance,
    monte_carlo,
    run,
)

DEFAULT_OUT = "results"
FLOAT_FORMAT = "%.17g"

# Accuracy of the extrapolated Stormer-Verlet run used to recompute references
REFERENCE_EPS = 1e-5

SUMMARY_COLUMNS = [
    "name",
    "method",
    "problem",
    "T",
    "eps",
    "repeat",
    "seed",
    "L",
    "M0",
    "n_min",
    "pilot_samples",
    "bias_samples",
    "budget",
    "threads",
    "model",
    "estimate",
    "reference",
    "abs_error_vs_reference",
    "stat_error",
    "error_over_eps",
    "bias_est",
    "inter_level_bias",
    "total_cost",
    "cpu_time",
    "wall_time",
    "walltime_times_eps2",
    "walltime_times_eps2_over_T",
    "cputime_times_eps2",
]

LEVEL_COLUMNS = ["method", "problem", "T", "eps", "repeat", "seed", "level", "h", "N", "Yhat", "Vhat", "cost", "exact"]

BIAS_COLUMNS = ["method", "problem", "T", "eps", "repeat", "seed", "level", "h", "bias", "abs_bias", "stderr", "samples", "trivial"]

TIMING_COLUMNS = ["cpu_time", "wall_time", "walltime_times_eps2", "walltime_times_eps2_over_T", "cputime_times_eps2"]


# =============================================================================
# Helpers
# =============================================================================


def replicate_seeds(seed: int, repeat: int) -> List[int]:
    """Seeds of the independent replications; the first is `seed` itself."""
    children = np.random.SeedSequence(seed).spawn(max(0, repeat - 1))
    # 63 bits so the seeds survive a round trip through int64 CSV columns
    return [seed] + [int(child.generate_state(1, dtype=np.uint64)[0] >> 1) for child in children]


def build_config(spec: ExperimentSpec, method: MethodSpec, eps: float, L: int = 1) -> MlmcConfig:
    return MlmcConfig(
        eps_max=eps,
        M0=spec.m0 or method.M0,
        L=L,
        N_min=spec.n_min,
        scheme=method.scheme,
        dist=method.dist,
        extrapolate=method.extrapolate,
        exact_coarse=method.exact_coarse,
        alpha=method.alpha,
        threads=spec.threads,
        budget=spec.budget,
    )


def resolve_levels(spec: ExperimentSpec, method: MethodSpec, eps: float, problem: Problem, seed: int) -> MlmcConfig:
    """Run configuration with L (and, for fixed-level methods, M0) chosen for eps.

    Methods with a pinned finest level solve M0 from the pilot constant;
    otherwise L is taken from the file or calibrated. Extrapolated methods
    are sized at the raised order of the extrapolated estimate.
    """
    config = build_config(spec, method, eps, max(1, method.fixed_L or 1))
    if method.fixed_L is not None:
        if spec.m0 is not None:
            return config
        pilot = fit_bias_constant(spec, method, config, problem, eps, seed)
        M0 = m0_for_tolerance(pilot.c1, pilot.alpha, problem.model.T, method.fixed_L, eps, config.variance_split)
        return replace(config, M0=M0)
    if spec.levels is not None:
        return replace(config, L=spec.levels)
    calibration = fit_bias_constant(spec, method, config, problem, eps, seed)
    return replace(config, L=calibration.L)


def fit_bias_constant(
    spec: ExperimentSpec, method: MethodSpec, config: MlmcConfig, problem: Problem, eps: float, seed: int
) -> Calibration:
    """Pilot calibration for config; fixed-level methods pilot on a one-step coarsest grid."""
    if method.fixed_L is not None:
        # M0 is solved afterwards, so the pilot grid is free
        config = replace(config, M0=1)
    return calibrate_levels(config, problem.model, problem.qoi, spec.pilot_samples, eps=eps, seed=seed)


def summary_row(
    spec: ExperimentSpec, repeat: int, seed: int, result: MlmcResult, reference: Optional[float]
) -> Dict[str, Any]:
    config = result.config
    eps = config.eps_max
    abs_error = abs(result.estimate - reference) if reference is not None else math.nan
    return {
        "name": spec.name,
        "method": spec.method,
        "problem": spec.problem,
        "T": spec.T,
        "eps": eps,
        "repeat": repeat,
        "seed": seed,
        "L": config.L,
        "M0": config.M0,
        "n_min": spec.n_min,
        "pilot_samples": spec.pilot_samples,
        "bias_samples": spec.bias_samples,
        "budget": spec.budget,
        "threads": spec.threads,
        "model": json.dumps(spec.model, sort_keys=True),
        "estimate": result.estimate,
        "reference": math.nan if reference is None else reference,
        "abs_error_vs_reference": abs_error,
        "stat_error": result.stat_error_est,
        "error_over_eps": (abs_error + result.stat_error_est) / eps,
        "bias_est": result.bias_est,
        "inter_level_bias": math.nan if result.inter_level_bias is None else result.inter_level_bias,
        "total_cost": result.total_cost,
        "cpu_time": result.cpu_time,
        "wall_time": result.wall_time,
        "walltime_times_eps2": result.wall_time * eps**2,
        "walltime_times_eps2_over_T": result.wall_time * eps**2 / spec.T,
        "cputime_times_eps2": result.cpu_time * eps**2,
    }


def level_rows(spec: ExperimentSpec, repeat: int, seed: int, result: MlmcResult) -> List[Dict[str, Any]]:
    rows = []
    for s in result.per_level:
        rows.append(
            {
                "method": spec.method,
                "problem": spec.problem,
                "T": spec.T,
                "eps": result.config.eps_max,
                "repeat": repeat,
                "seed": seed,
                "level": s.level,
                "h": s.h,
                "N": s.N,
                "Yhat": s.Yhat,
                "Vhat": s.Vhat if s.has_variance else math.nan,
                "cost": s.cost,
                "exact": s.exact,
            }
        )
    return rows


def write_csv(rows: List[Dict[str, Any]], columns: List[str], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def print_summary(rows: List[Dict[str, Any]], title: str) -> None:
    table = Table(title=title)
    for column in ("method", "T", "eps", "L", "M0", "estimate", "error_over_eps", "total_cost", "wall_time"):
        table.add_column(column, justify="right")
    for row in rows:
        table.add_row(
            row["method"],
            f"{row['T']:g}",
            f"{row['eps']:.3g}",
            str(row["L"]),
            str(row["M0"]),
            f"{row['estimate']:.10g}",
            f"{row['error_over_eps']:.3f}",
            f"{row['total_cost']:.4g}",
            f"{row['wall_time']:.2f}s",
        )
    console.print(table)


def _problem(spec: ExperimentSpec, recompute_reference: bool = False) -> Problem:
    problem = spec.problem_instance()
    if recompute_reference:
        problem = replace(problem, reference=recompute_reference_value(spec))
    elif problem.reference is None:
        log.warning(f"no reference value for {spec.problem} at T={spec.T:g}; errors are reported as NaN")
    return problem


def recompute_reference_value(spec: ExperimentSpec, eps: float = REFERENCE_EPS) -> float:
    """Reference E[phi] from an extrapolated Stormer-Verlet run at accuracy eps."""
    problem = spec.problem_instance()
    method = MethodSpec("SVGe-reference", Scheme.STORMER_VERLET_OU, 4, extrapolate=True)
    config = resolve_levels(replace(spec, levels=None, m0=None), method, eps, problem, spec.seed)
    log.info(f"recomputing reference for {spec.problem} at T={spec.T:g} with L={config.L}")
    return run(config, problem.model, problem.qoi, spec.seed).estimate


# =============================================================================
# Suites
# =============================================================================


def _baseline_rows(spec: ExperimentSpec, problem: Problem) -> Tuple[List[Dict], List[Dict]]:
    baseline = replace(spec, method="MC-EMG")
    method = baseline.method_spec
    summary, levels = [], []
    for repeat, seed in enumerate(replicate_seeds(spec.seed, spec.repeat)):
        for eps in spec.eps_list:
            config = resolve_levels(baseline, method, eps, problem, seed)
            steps = config.steps(config.L)
            result = monte_carlo(config, problem.model, problem.qoi, steps, spec.pilot_samples, seed)
            # rows report the calibrated level, not the single-level grid
            result.config = config
            summary.append(summary_row(baseline, repeat, seed, result, problem.reference))
            levels.extend(level_rows(baseline, repeat, seed, result))
    return summary, levels


def mc_baseline(spec: ExperimentSpec, out: Path, recompute_reference: bool = False) -> Path:
    """Single-level Monte Carlo with Euler-Maruyama, N = ceil(2 V / eps^2).

    The step size is the finest level calibrate_levels picks for the same eps.
    """
    problem = _problem(spec, recompute_reference)
    summary, levels = _baseline_rows(spec, problem)
    out = Path(out)
    write_csv(levels, LEVEL_COLUMNS, out / f"{spec.name}_levels.csv")
    path = write_csv(summary, SUMMARY_COLUMNS, out / f"{spec.name}_summary.csv")
    print_summary(summary, f"{spec.name} (MC-EMG)")
    return path


def run_suite(spec: ExperimentSpec, out: Path, recompute_reference: bool = False) -> Dict[str, Path]:
    """Run every (repeat, eps) of an experiment and write its CSV files.

    Returns:
        Mapping of file kind ("summary", "levels", "bias") to the path written
    """
    method = spec.method_spec
    if method.baseline:
        return {"summary": mc_baseline(spec, out, recompute_reference)}

    problem = _problem(spec, recompute_reference)
    summary, levels, bias = [], [], []
    for repeat, seed in enumerate(replicate_seeds(spec.seed, spec.repeat)):
        for eps in spec.eps_list:
            with console.status(f"[bold green]{spec.method} eps={eps:g} repeat {repeat}...[/bold green]"):
                config = resolve_levels(spec, method, eps, problem, seed)
                result = run(config, problem.model, problem.qoi, seed)
                if method.dist.is_discrete:
                    estimate = inter_level_bias(config, problem.model, problem.qoi, config.L, spec.bias_samples, seed)
                    result.inter_level_bias = estimate.value
                    bias.append(_bias_row(spec, eps, repeat, seed, config.L, estimate))
            summary.append(summary_row(spec, repeat, seed, result, problem.reference))
            levels.extend(level_rows(spec, repeat, seed, result))

    if spec.baseline:
        extra_summary, extra_levels = _baseline_rows(spec, problem)
        summary.extend(extra_summary)
        levels.extend(extra_levels)

    out = Path(out)
    paths = {
        "summary": write_csv(summary, SUMMARY_COLUMNS, out / f"{spec.name}_summary.csv"),
        "levels": write_csv(levels, LEVEL_COLUMNS, out / f"{spec.name}_levels.csv"),
    }
    if bias:
        paths["bias"] = write_csv(bias, BIAS_COLUMNS, out / f"{spec.name}_bias.csv")
    print_summary(summary, spec.name)
    return paths


def _bias_row(spec: ExperimentSpec, eps: float, repeat: int, seed: int, level: int, estimate) -> Dict[str, Any]:
    return {
        "method": spec.method,
        "problem": spec.problem,
        "T": spec.T,
        "eps": eps,
        "repeat": repeat,
        "seed": seed,
        "level": level,
        "h": estimate.h,
        "bias": estimate.value,
        "abs_bias": abs(estimate.value),
        "stderr": estimate.stderr,
        "samples": estimate.samples,
        "trivial": estimate.trivial,
    }


def bias_slope(h: List[float], bias: List[float]) -> float:
    """Fitted slope of log |bias| against log h over the nonzero entries."""
    points = [(x, abs(b)) for x, b in zip(h, bias) if b != 0.0]
    if len(points) < 2:
        return math.nan
    x, y = zip(*points)
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def run_bias_sweep(spec: ExperimentSpec, out: Path) -> Tuple[Path, float]:
    """inter_level_bias over spec.bias_levels (levels 0..4 when empty) with a slope fit."""
    method = spec.method_spec
    problem = spec.problem_instance()
    config = build_config(spec, method, spec.eps_list[0], 1)
    config = replace(config, extrapolate=False, exact_coarse=False)
    levels = spec.bias_levels or list(range(5))
    rows = []
    for level in levels:
        with console.status(f"[bold green]inter-level bias, level {level}...[/bold green]"):
            estimate = inter_level_bias(config, problem.model, problem.qoi, level, spec.bias_samples, spec.seed)
        rows.append(_bias_row(spec, config.eps_max, 0, spec.seed, level, estimate))
    slope = bias_slope([r["h"] for r in rows], [r["bias"] for r in rows])
    path = write_csv(rows, BIAS_COLUMNS, Path(out) / f"{spec.name}_bias.csv")

    table = Table(title=f"{spec.name}: inter-level bias ({spec.method})")
    for column in ("level", "h", "bias", "stderr"):
        table.add_column(column, justify="right")
    for row in rows:
        table.add_row(str(row["level"]), f"{row['h']:.4g}", f"{row['bias']:.4e}", f"{row['stderr']:.2e}")
    console.print(table)
    console.print(f"log-log slope of |bias| vs h: [bold]{slope:.3f}[/bold]")
    return path, slope


def run_exact(spec: ExperimentSpec, out: Path) -> Path:
    """Exact coarse-level expectation for the method's discrete law and M0."""
    method = spec.method_spec
    if not method.dist.is_discrete:
        raise ConfigError(f"method {spec.method} uses Gaussian increments; exact enumeration needs a discrete law")
    problem = spec.problem_instance()
    M0 = spec.m0 or method.M0
    start = time.perf_counter()
    result = enumerate_tree(problem.model, method.scheme, problem.qoi, M0, method.dist, spec.budget, spec.threads)
    elapsed = time.perf_counter() - start
    row = {
        "method": spec.method,
        "problem": spec.problem,
        "T": spec.T,
        "M0": M0,
        "value": result.value,
        "leaves": result.leaves,
        "expected_leaves": result.plan.total_leaves,
        "nodes": result.nodes,
        "probability_mass": result.probability_mass,
        "wall_time": elapsed,
    }
    path = write_csv([row], list(row), Path(out) / f"{spec.name}_exact.csv")
    console.print(
        f"[green]E[phi(X_M0)] = {result.value:.15g}[/green] "
        f"({result.leaves} leaves, {result.nodes} nodes, {elapsed:.2f}s)"
    )
    return path


def run_calibrate(spec: ExperimentSpec, out: Path) -> Path:
    """Fitted bias constant and the finest level (or M0) chosen for every eps."""
    method = spec.method_spec
    problem = spec.problem_instance()
    rows = []
    for eps in spec.eps_list:
        config = build_config(spec, method, eps)
        calibration = fit_bias_constant(spec, method, config, problem, eps, spec.seed)
        L, M0 = calibration.L, config.M0
        if method.fixed_L is not None:
            L = method.fixed_L
            M0 = m0_for_tolerance(calibration.c1, calibration.alpha, spec.T, L, eps, config.variance_split)
        padded = calibration.yhat + (math.nan,) * (3 - len(calibration.yhat))
        padded_se = calibration.stderr + (math.nan,) * (3 - len(calibration.stderr))
        rows.append(
            {
                "method": spec.method,
                "problem": spec.problem,
                "T": spec.T,
                "eps": eps,
                "c1": calibration.c1,
                "alpha": calibration.alpha,
                "L": L,
                "M0": M0,
                "h_L": spec.T / (M0 * 2**L),
                "yhat_1": padded[0],
                "yhat_2": padded[1],
                "yhat_3": padded[2],
                "stderr_1": padded_se[0],
                "stderr_2": padded_se[1],
                "stderr_3": padded_se[2],
            }
        )
        console.print(f"eps={eps:g}: c1={calibration.c1:.4g}, L={L}, M0={M0}")
    return write_csv(rows, list(rows[0]), Path(out) / f"{spec.name}_calibration.csv")


def spec_from_row(row: Mapping[str, Any]) -> ExperimentSpec:
    """The single-eps, single-replication experiment that produced a summary row.

    L and M0 are pinned to the values the row reports, so running it again
    reproduces the row without another calibration. Rows written before the
    pilot, bias and budget columns existed fall back to the defaults.
    """
    try:
        return ExperimentSpec(
            name=str(row["name"]),
            problem=str(row["problem"]),
            method=str(row["method"]),
            eps_list=[float(row["eps"])],
            T=float(row["T"]),
            repeat=1,
            seed=int(row["seed"]),
            levels=int(row["L"]),
            m0=int(row["M0"]),
            n_min=int(row["n_min"]),
            pilot_samples=int(row.get("pilot_samples", DEFAULT_PILOT_SAMPLES)),
            bias_samples=int(row.get("bias_samples", DEFAULT_BIAS_SAMPLES)),
            budget=int(row.get("budget", DEFAULT_BUDGET)),
            threads=int(row.get("threads", 1)),
            model=json.loads(row["model"]) if isinstance(row["model"], str) else {},
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"summary row cannot be parsed: {e}") from e


# =============================================================================
# Command line
# =============================================================================


def _eps_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"invalid eps list '{text}'") from e


def _env_int(name: str, default: int) -> int:
    value = os.environ.get(name)
    if value is None or value == "":
        return default
    try:
        return int(value)
    except ValueError as e:
        raise ConfigError(f"{name} must be an integer, got '{value}'") from e


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="Experiment YAML file")
    common.add_argument("--out", default=None, help="Output directory (default: $MLMC_OUT or results)")
    common.add_argument("--seed", type=int, default=None, help="Base seed, overrides the file")
    common.add_argument("--threads", type=int, default=None, help="Worker threads for sampling and enumeration")
    common.add_argument("--eps", type=_eps_list, default=None, help="Comma-separated target accuracies")
    common.add_argument("--budget", type=int, default=None, help="Leaf budget of the exact coarse enumeration")
    common.add_argument("-v", "--verbose", action="store_true", help="Log refinement rounds and calibration")

    parser = argparse.ArgumentParser(
        description="Multilevel Monte Carlo for Langevin equations.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python main.py run --config configs/harmonic_set1.yaml
    MLMC suite over the eps values of the file, CSV files in results/

  python main.py run --config configs/table1_harmonic.yaml --threads 8 --seed 7
    Table-style comparison with the Monte Carlo baseline

  python main.py bias --config configs/discrete_bias.yaml
    Inter-level bias of three- and four-point increments over the bias levels

  python main.py exact --config configs/discrete_distributions.yaml
    Exact expectation on the coarsest level only
        """,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_parser = sub.add_parser("run", parents=[common], help="Run an experiment suite")
    run_parser.add_argument(
        "--recompute-reference",
        action="store_true",
        help="Recompute the reference value with an extrapolated Stormer-Verlet run",
    )
    sub.add_parser("bias", parents=[common], help="Inter-level bias sweep for discrete increments")
    sub.add_parser("exact", parents=[common], help="Exact coarse-level enumeration")
    sub.add_parser("calibrate", parents=[common], help="Fit the bias constant and choose levels")
    return parser


def main(argv: Optional[List[str]] = None) -> None:
    load_dotenv()
    args = build_parser().parse_args(argv)
    log.set_verbose(args.verbose)

    try:
        specs = load_experiments(
            args.config,
            default_seed=_env_int("MLMC_SEED", 0),
            default_threads=_env_int("MLMC_THREADS", 1),
        )
        out = Path(args.out or os.environ.get("MLMC_OUT") or DEFAULT_OUT)

        console.rule(f"[bold green]langevin-mlmc {args.command}: {args.config}[/bold green]")
        for spec in specs:
            spec = spec.with_overrides(seed=args.seed, threads=args.threads, eps_list=args.eps, budget=args.budget)
            if args.command == "run":
                paths = run_suite(spec, out, args.recompute_reference)
            elif args.command == "bias":
                paths = {"bias": run_bias_sweep(spec, out)[0]}
            elif args.command == "exact":
                if not spec.method_spec.dist.is_discrete:
                    console.print(f"[yellow]⚠️ skipping {spec.method}: Gaussian increments[/yellow]")
                    continue
                paths = {"exact": run_exact(spec, out)}
            else:
                paths = {"calibration": run_calibrate(spec, out)}
            for kind, path in paths.items():
                console.print(f"[green]✓ {kind}:[/green] {path}")
    except MlmcError as e:
        console.print(f"[red]Error: {e}[/red]")
        sys.exit(1)


if __name__ == "__main__":
    main()
