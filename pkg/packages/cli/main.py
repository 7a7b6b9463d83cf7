"""
KDEXP - Command Line Interface
fit / simulate / downscale / geweke sub-commands.
Exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O or data-format error.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, List, Optional, Type

from packages.cli.configs import (
    DownscaleRunConfig,
    FitRunConfig,
    RunConfig,
    SimulateRunConfig,
    load_run_config,
)
from packages.cli.manifest import RunManifest
from packages.downscale.pipeline import read_observations, read_prediction_grid, run_downscaler
from packages.engine.core.distributions import RandomSource
from packages.engine.core.mcmc import fit, geweke_diagnostic, read_samples, write_samples
from packages.engine.core.mcmc.diagnostics import MIN_DRAWS
from packages.engine.core.model import (
    ExposureEnsemble,
    MethodName,
    read_ensemble,
    read_health_dataset,
    standardize_ensemble,
    write_ensemble,
)
from packages.shared.config import base_config
from packages.shared.exceptions import DataFormatError, KdexpError
from packages.shared.utils import atomic_write_json, configure_logging, ensure_directory
from packages.simulation.reporting import write_report
from packages.simulation.study import factorial_grid, run_grid

logger = logging.getLogger("KDEXP.CLI")


def _load(args: argparse.Namespace, model: Type[RunConfig]) -> RunConfig:
    config = load_run_config(args.config, model)
    if args.seed is not None:
        config.seed = args.seed
    return config


def _tracked(command: str, config: RunConfig, output_dir: Path, work: Callable[[], List[Path]]) -> List[Path]:
    """Run work between a start manifest and a completed or failed one"""
    path = output_dir / "manifest.json"
    manifest = RunManifest.start(command, config.semantic_payload(), config.seed)
    manifest.write(path)
    try:
        outputs = work()
    except Exception as exc:
        manifest.finish([], status="failed", error=str(exc)).write(path)
        raise
    manifest.finish(outputs).write(path)
    return outputs


def _run_fit(config: FitRunConfig, args: argparse.Namespace, output_dir: Path) -> List[Path]:
    ensemble = ExposureEnsemble.from_matrix(read_ensemble(config.ensemble), summary_T=config.method.summary_T)
    data = read_health_dataset(config.dataset, config.family)
    if config.standardize:
        ensemble, record = standardize_ensemble(ensemble, config.standardize)
        logger.info(f"Standardized exposures: location={record.location:.6g}, scale={record.scale:.6g}")
    if config.lag:
        ensemble, data = ensemble.lagged(config.lag), data.lagged(config.lag)

    sampler = config.sampler_config()
    samples = fit(
        data,
        ensemble,
        config.method,
        config.prior,
        sampler,
        RandomSource.for_stream(config.seed, "fit"),
        threads=args.threads,
        mi_draws=config.mi_draws,
        progress=True,
    )
    outputs = [write_samples(output_dir / f"{config.output_name}.csv", samples, config.semantic_payload())]
    summary = samples.summary().reset_index().to_dict(orient="records")
    if data.family != "gaussian_identity":
        summary.append({"parameter": "relative_risk", **samples.relative_risk()})
    outputs.append(atomic_write_json(output_dir / f"{config.output_name}_summary.json", summary))

    if config.method.method != MethodName.MI and sampler.retained_per_chain >= MIN_DRAWS:
        report = geweke_diagnostic(samples, config.geweke.frac_first, config.geweke.frac_last)
        outputs.append(atomic_write_json(output_dir / f"{config.output_name}_geweke.json", report.to_dict()))
    else:
        logger.info("Skipping Geweke diagnostic (pooled imputation draws or short chains)")

    return outputs


def _run_simulate(config: SimulateRunConfig, args: argparse.Namespace, output_dir: Path) -> List[Path]:
    scenarios = list(config.scenarios)
    if config.factorial_grid:
        scenarios.extend(factorial_grid(desk_scale=not config.full_scale, **config.overrides))
    scenarios = [scenario.model_copy(update={"seed": config.seed}) for scenario in scenarios]

    report = run_grid(scenarios, threads=args.threads, checkpoint_dir=output_dir / "replicates")
    return write_report(report, output_dir)


def _run_downscale(config: DownscaleRunConfig, args: argparse.Namespace, output_dir: Path) -> List[Path]:
    ensemble, _, summary = run_downscaler(
        read_observations(config.observations),
        read_prediction_grid(config.grid),
        config.draws,
        RandomSource.for_stream(config.seed, "downscale"),
        spline_df=config.spline_df,
    )
    path = write_ensemble(output_dir / f"{config.output_name}.csv", ensemble.Z_star)
    return [path, atomic_write_json(output_dir / f"{config.output_name}_summary.json", summary)]


def cmd_fit(args: argparse.Namespace, output_dir: Path) -> List[Path]:
    config = _load(args, FitRunConfig)
    return _tracked("fit", config, output_dir, lambda: _run_fit(config, args, output_dir))


def cmd_simulate(args: argparse.Namespace, output_dir: Path) -> List[Path]:
    config = _load(args, SimulateRunConfig)
    return _tracked("simulate", config, output_dir, lambda: _run_simulate(config, args, output_dir))


def cmd_downscale(args: argparse.Namespace, output_dir: Path) -> List[Path]:
    config = _load(args, DownscaleRunConfig)
    return _tracked("downscale", config, output_dir, lambda: _run_downscale(config, args, output_dir))


def cmd_geweke(args: argparse.Namespace, output_dir: Path) -> List[Path]:
    samples = read_samples(args.samples)
    report = geweke_diagnostic(samples, args.frac_first, args.frac_last)
    name = Path(args.samples).stem
    return [atomic_write_json(output_dir / f"{name}_geweke.json", report.to_dict())]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kdexp", description="Bayesian propagation of exposure uncertainty into health models"
    )
    parser.add_argument("--threads", type=int, default=None, help="Worker processes (default: logical cores)")
    parser.add_argument("--seed", type=int, default=None, help="Override the configured seed")
    parser.add_argument("--output-dir", type=Path, default=None, help="Output directory")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="More logging (repeatable)")
    parser.add_argument("--log-json", action="store_true", help="Structured JSON log lines")
    sub = parser.add_subparsers(dest="command", required=True)

    fit_parser = sub.add_parser("fit", help="Fit the health model with one exposure method")
    fit_parser.add_argument("config", type=Path, help="Fit configuration (YAML)")
    fit_parser.set_defaults(handler=cmd_fit)

    sim_parser = sub.add_parser("simulate", help="Run simulation scenarios and write metric tables")
    sim_parser.add_argument("config", type=Path, help="Simulation configuration (YAML)")
    sim_parser.set_defaults(handler=cmd_simulate)

    down_parser = sub.add_parser("downscale", help="Build an exposure ensemble with the downscaler")
    down_parser.add_argument("config", type=Path, help="Downscale configuration (YAML)")
    down_parser.set_defaults(handler=cmd_downscale)

    geweke_parser = sub.add_parser("geweke", help="Geweke diagnostic for a posterior sample file")
    geweke_parser.add_argument("samples", type=Path, help="Sample CSV written by fit")
    geweke_parser.add_argument("--frac-first", type=float, default=0.1)
    geweke_parser.add_argument("--frac-last", type=float, default=0.5)
    geweke_parser.set_defaults(handler=cmd_geweke)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the command line"""
    args = build_parser().parse_args(argv)
    level = {0: None, 1: "INFO"}.get(args.verbose, "DEBUG")
    configure_logging(level=level, json_output=args.log_json or None)

    handler: Callable = args.handler
    try:
        output_dir = ensure_directory(args.output_dir or base_config.output_dir)
        outputs = handler(args, output_dir)
    except KdexpError as exc:
        logger.error(f"{args.command} failed: {exc}")
        return exc.exit_code
    except OSError as exc:
        logger.error(f"{args.command} failed: {DataFormatError(str(exc))}")
        return DataFormatError.exit_code
    for path in outputs:
        logger.info(f"Wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
