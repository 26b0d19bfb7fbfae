"""Command-line entry point: simulate, reconstruct, sweep, export, validate-config."""

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .config import ExperimentConfig, load_config
from .errors import EXIT_OK, EXIT_RUNTIME, MlcsError, PartialSweepError
from .logger import default_logger as logger
from .runner import ExperimentRunner, export_image, load_image


def _add_overrides(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('config', type=Path, help='Path to the YAML experiment config')
    parser.add_argument('--rate', type=float, help='Sampling rate in (0, 1]')
    parser.add_argument('--looks', type=int, help='Number of looks L')
    parser.add_argument('--lambda', dest='lam', type=float, help='Regularization weight')
    parser.add_argument('--iters', type=int, help='Maximum solver iterations')
    parser.add_argument('--seed', type=int, help='Base seed')
    parser.add_argument('--out', type=Path, help='Output directory')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='mlcs-sar',
        description='Multilook compressed-sensing SAR imaging experiments',
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    commands = parser.add_subparsers(dest='command', required=True)

    _add_overrides(commands.add_parser('simulate', help='Simulate and subsample raw data'))
    _add_overrides(commands.add_parser('reconstruct', help='Run the full single-run pipeline'))
    _add_overrides(commands.add_parser('sweep', help='Sweep sampling rate and look count'))
    _add_overrides(commands.add_parser('validate-config', help='Check a config file and exit'))

    export = commands.add_parser('export', help='Export a grid or look stack as an image')
    export.add_argument('input', type=Path, help='Binary grid file or look-stack directory')
    export.add_argument('output', type=Path, help='Output file')
    export.add_argument('--format', dest='fmt', choices=['pgm', 'binary'], default='pgm')
    export.add_argument('--dynamic-range-db', type=float, default=40.0,
                        help='Graymap floor below the peak, in dB')
    return parser


def _resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    config = load_config(args.config)
    return config.with_overrides(
        rate=args.rate, looks=args.looks, lam=args.lam,
        iterations=args.iters, seed=args.seed, output_dir=args.out,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == 'export':
            path = export_image(load_image(args.input), args.output, args.fmt, args.dynamic_range_db)
            print(f"Image written to {path}")
            return EXIT_OK

        config = _resolve_config(args)
        if args.command == 'validate-config':
            n_az, n_rg = config.radar.shape
            print(f"Config OK: {n_az}x{n_rg} grid, rate {config.sampling.rate:g}, "
                  f"{config.solver.look_count} look(s), lambda {config.solver.regularization:g}")
            return EXIT_OK

        runner = ExperimentRunner(config)
        if args.command == 'simulate':
            manifest = runner.simulate()
        elif args.command == 'reconstruct':
            manifest = runner.run_single()
        else:
            manifest = runner.run_sweep()
        print(f"Run {manifest.run_id}: {len(manifest.files)} files in {config.output_dir}")
        return EXIT_OK
    except PartialSweepError as e:
        logger.error(f"Sweep incomplete, failed runs: {', '.join(e.failures)}")
        return e.exit_code
    except MlcsError as e:
        logger.error(str(e))
        return e.exit_code
    except OSError as e:
        logger.error(f"I/O error: {str(e)}")
        return EXIT_RUNTIME
    except ValueError as e:
        logger.error(f"Invalid input: {str(e)}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
