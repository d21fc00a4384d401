#!/usr/bin/env python3
"""
Command Line Interface for concatenated dynamically corrected gates

Usage:
    dcg sweep configs/scaling_desk.json --workers 4
    dcg bound configs/scaling_desk.json
    dcg synth configs/scaling_desk.json --level 2 --output schedule.csv
    dcg selftest
"""

import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import click
import pandas as pd

from analysis import FitWindowError, bound_ratios, bound_report, fit_slope
from config import Config
from errmodel import ErrorHamiltonian, assemble
from selftest import run_selftest
from sweep import ConfigError, SweepConfig, SweepRunner, apply_overrides, fully_flagged_levels, load_config
from synth import build_gate, duration, flatten, write_schedule

logger = logging.getLogger(__name__)

EXIT_INVALID = 1
EXIT_NUMERICAL = 2


def setup_logging(log_level: str, log_file: Optional[str] = None) -> None:
    """Setup logging configuration."""
    log_format = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

    handlers = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))

    logging.basicConfig(
        level=getattr(logging, log_level.upper(), logging.INFO),
        format=log_format,
        handlers=handlers,
        force=True
    )


def _parse_levels(value: Optional[str]) -> Optional[List[int]]:
    if value is None:
        return None
    try:
        return [int(item) for item in value.split(',') if item.strip()]
    except ValueError:
        raise click.BadParameter(f"expected a comma-separated list of integers, got {value!r}")


def _load(ctx, config_path: Path, **overrides) -> SweepConfig:
    """Load the sweep configuration and apply flag overrides; exits 1 on invalid input."""
    try:
        cfg = load_config(config_path)
        return apply_overrides(cfg, **overrides)
    except (ConfigError, ValueError, OSError) as e:
        click.echo(f"Configuration error: {e}", err=True)
        ctx.exit(EXIT_INVALID)


def _runtime(ctx) -> Config:
    if ctx.obj.get('config_error'):
        click.echo(f"Configuration error: {ctx.obj['config_error']}", err=True)
        ctx.exit(EXIT_INVALID)
    return ctx.obj['config']


def override_options(workers: bool = True):
    """Flags overriding configuration fields; --output names the command's own output file."""
    options = [
        click.option('--seed', type=int, help='Override bath.seed'),
        click.option('--levels', help='Override levels (comma-separated, e.g. 0,1,2)'),
        click.option('--tau-points', type=int, help='Override tau_grid.points'),
    ]
    if workers:
        options.append(click.option('--workers', type=int, help='Override the worker thread count'))
    options.append(click.option('--output', '-o', help='Output file path'))

    def decorator(func):
        for option in reversed(options):
            func = option(func)
        return func
    return decorator


def _thread_count(cfg: SweepConfig, workers: Optional[int], runtime: Config) -> int:
    # config-file workers win over the environment unless left at the default
    return workers or (cfg.workers if cfg.workers != SweepConfig.workers else runtime.max_workers)


@click.group()
@click.option('--env-file', '-e', help='Path to runtime settings file (.env)')
@click.option('--log-level', help='Logging level (defaults to DCG_LOG_LEVEL)')
@click.option('--log-file', help='Log file path (defaults to DCG_LOG_FILE)')
@click.pass_context
def cli(ctx, env_file: Optional[str], log_level: Optional[str], log_file: Optional[str]):
    """Concatenated dynamically corrected gates: synthesis, simulation and bounds."""
    ctx.ensure_object(dict)

    try:
        runtime = Config(env_file)
        runtime.validate()
        ctx.obj['config'] = runtime
        ctx.obj['config_error'] = None
    except ValueError as e:
        ctx.obj['config'] = None
        ctx.obj['config_error'] = str(e)

    if ctx.obj['config']:
        setup_logging(log_level or ctx.obj['config'].log_level,
                      log_file or ctx.obj['config'].log_file)
    else:
        setup_logging(log_level or 'INFO', log_file)


@cli.command()
@click.argument('config_path', type=click.Path(exists=True, dir_okay=False, path_type=Path))
@override_options()
@click.option('--no-progress', is_flag=True, help='Disable progress bar')
@click.pass_context
def sweep(ctx, config_path: Path, seed: Optional[int], levels: Optional[str], tau_points: Optional[int],
          workers: Optional[int], output: Optional[str], no_progress: bool):
    """Simulate every (level, tau_min, seed) point and write the CSV dataset."""
    runtime = _runtime(ctx)
    cfg = _load(ctx, config_path, seed=seed, levels=_parse_levels(levels), tau_points=tau_points,
                workers=workers, output=output)

    runner = SweepRunner(cfg, _thread_count(cfg, workers, runtime), runtime.show_progress and not no_progress)
    try:
        frame = runner.run()
    except OSError as e:
        click.echo(f"Cannot write {cfg.output_path}: {e}", err=True)
        ctx.exit(EXIT_INVALID)

    click.echo(f"Wrote {len(frame)} rows to {cfg.output_path}")
    click.echo("\nSlope of log10(eta) vs log10(tau_min):")
    for level in cfg.levels:
        try:
            fit = fit_slope(frame, level)
            click.echo(f"  level {level}: slope {fit.slope:+.3f} "
                       f"(expected {level + 1}, {fit.n_points} points, rms {fit.residual:.2e})")
        except FitWindowError as e:
            logger.warning(str(e))
            click.echo(f"  level {level}: not enough points in the fit window ({e.found})")

    annotated = bound_ratios(frame, runner.errors)
    ratios = annotated['eta_over_bound'][annotated['branch_error'] == 0]
    if len(ratios) and ratios.notna().any():
        click.echo(f"\nLargest eta / bound ratio: {ratios.max():.3e}")

    flagged = fully_flagged_levels(frame)
    if flagged:
        click.echo(f"Branch ambiguity on every point of level(s) {flagged}", err=True)
        ctx.exit(EXIT_NUMERICAL)


def _bound_rows(cfg: SweepConfig, seed: int, err: ErrorHamiltonian) -> List[dict]:
    rows = []
    for tau_j, tau in cfg.tau_values():
        report = bound_report(err, tau, cfg.levels)
        for level in report.levels:
            rows.append({
                'seed': seed,
                'tau_min_J': tau_j,
                'tau_min': tau,
                'level': level,
                'duration': duration(level, tau),
                'bound': report.bound(level),
                'l_opt': report.l_opt,
            })
    return rows


@cli.command()
@click.argument('config_path', type=click.Path(exists=True, dir_okay=False, path_type=Path))
@override_options()
@click.pass_context
def bound(ctx, config_path: Path, seed: Optional[int], levels: Optional[str], tau_points: Optional[int],
          workers: Optional[int], output: Optional[str]):
    """Print the analytic error-per-gate envelope and the optimal level for every seed and grid tau_min."""
    runtime = _runtime(ctx)
    cfg = _load(ctx, config_path, seed=seed, levels=_parse_levels(levels), tau_points=tau_points,
                workers=workers)

    # one error model per seed
    with ThreadPoolExecutor(max_workers=_thread_count(cfg, workers, runtime)) as executor:
        models = list(executor.map(lambda s: assemble(replace(cfg.bath, seed=s)), cfg.seeds))

    rows: List[dict] = []
    for seed_value, err in zip(cfg.seeds, models):
        rows.extend(_bound_rows(cfg, seed_value, err))
    table = pd.DataFrame(rows)

    reference = bound_report(models[0], cfg.tau_values()[0][1], cfg.levels)
    click.echo(f"chi = {reference.chi:g} (envelope with c = {reference.c:g}, {models[0].spin_convention})")
    for seed_value, err in zip(cfg.seeds, models):
        click.echo(f"seed {seed_value}: ||H_e|| = {err.norm_he:.6e}, ||H_SB + H_Se|| = {err.norm_err:.6e}")
    click.echo(table.to_string(index=False, float_format=lambda x: f"{x:.4e}"))
    if output:
        try:
            Path(output).parent.mkdir(parents=True, exist_ok=True)
            table.to_csv(output, index=False, float_format='%.16e', lineterminator='\n')
        except OSError as e:
            click.echo(f"Cannot write {output}: {e}", err=True)
            ctx.exit(EXIT_INVALID)
        click.echo(f"\nWrote bound table to {output}")


@cli.command()
@click.argument('config_path', type=click.Path(exists=True, dir_okay=False, path_type=Path))
@override_options(workers=False)
@click.option('--level', '-l', type=click.IntRange(0, 4), help='Concatenation level (defaults to the highest configured)')
@click.option('--tau0', type=float, help='Primitive duration (defaults to the smallest grid tau_min)')
@click.pass_context
def synth(ctx, config_path: Path, seed: Optional[int], levels: Optional[str], tau_points: Optional[int],
          output: Optional[str], level: Optional[int], tau0: Optional[float]):
    """Emit the primitive segment table of the configured gate (stdout unless --output is given)."""
    _runtime(ctx)
    cfg = _load(ctx, config_path, seed=seed, levels=_parse_levels(levels), tau_points=tau_points)
    level = max(cfg.levels) if level is None else level
    tau0 = cfg.tau_values()[0][1] if tau0 is None else tau0
    if not (math.isfinite(tau0) and tau0 > 0):
        click.echo(f"Configuration error: tau0 must be positive, got {tau0}", err=True)
        ctx.exit(EXIT_INVALID)

    schedule = flatten(build_gate(cfg.gate, level), 1.0, tau0)
    logger.info(f"Level {level} schedule: {len(schedule)} segments, duration {schedule.total_duration:.6e}")
    if output:
        try:
            Path(output).parent.mkdir(parents=True, exist_ok=True)
            write_schedule(schedule, output)
        except OSError as e:
            click.echo(f"Cannot write {output}: {e}", err=True)
            ctx.exit(EXIT_INVALID)
        click.echo(f"Wrote {len(schedule)} segments to {output}")
    else:
        click.echo(write_schedule(schedule), nl=False)


@cli.command()
@click.pass_context
def selftest(ctx):
    """Run the invariant suite."""
    _runtime(ctx)
    results = run_selftest()
    for result in results:
        mark = '✓' if result.passed else '✗'
        click.echo(f"  {mark} {result.name:<28} {result.detail}")
    failed = [result.name for result in results if not result.passed]
    click.echo(f"\n{len(results) - len(failed)}/{len(results)} checks passed")
    if failed:
        ctx.exit(EXIT_INVALID)


if __name__ == '__main__':
    cli()
