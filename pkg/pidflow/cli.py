# == cli.py ==#

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

from . import __version__
from .analysis import check_condition
from .config import CompareConfig, ExperimentConfig, load_compare_config, load_config
from .exceptions import (
    ConditionNotApplicable,
    ConfigError,
    Divergence,
    DynamicsError,
    IntegrationError,
    InvalidIntegratorConfig,
    ObjectiveError,
    OracleFailure,
    PIDFlowException,
    ShapeMismatch,
    TopologyError,
)
from .presets import REPRODUCTIONS
from .runner import CompareResult, RunResult, Simulator, build_problem

__all__: Tuple[str, ...] = (
    'EXIT_CONFIG',
    'EXIT_DIVERGENCE',
    'EXIT_OK',
    'EXIT_ORACLE',
    'build_parser',
    'cmd_check',
    'cmd_compare',
    'cmd_reproduce',
    'cmd_run',
    'main',
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_ORACLE = 4

# anything a user can fix by editing the config file
_CONFIG_ERRORS = (
    ConfigError,
    TopologyError,
    ObjectiveError,
    DynamicsError,
    ShapeMismatch,
    InvalidIntegratorConfig,
    ConditionNotApplicable,
)


def _out_dir(args: argparse.Namespace, default: str) -> Path:
    return Path(args.out_dir) if args.out_dir else Path(default)


def _emit_flags(args: argparse.Namespace, cfg: Union[ExperimentConfig, CompareConfig]) -> Dict[str, bool]:
    return {'emit_csv': cfg.output.emit_csv, 'emit_svg': cfg.output.emit_svg and not args.no_svg}


def _report_run(result: RunResult) -> None:
    fit = f'{result.fit.rate:.6g} (r2 = {result.fit.r_squared:.6f})' if result.fit else 'n/a'
    print(f'{result.label}: final relative error {result.final_relative_error:.6g}, rate {fit}')


def _finish_run(args: argparse.Namespace, cfg: ExperimentConfig, result: RunResult) -> int:
    result.emit(_out_dir(args, cfg.output.directory), **_emit_flags(args, cfg))
    _report_run(result)
    return EXIT_DIVERGENCE if result.diverged else EXIT_OK


def _finish_compare(args: argparse.Namespace, cfg: CompareConfig, outcome: CompareResult) -> int:
    outcome.emit(_out_dir(args, cfg.output.directory), **_emit_flags(args, cfg))
    for result in outcome.completed.values():
        _report_run(result)
    for label, t in outcome.ranking():
        print(f'{label}: reaches the comparison threshold at t = {t:g}')

    failures = list(outcome.failures.values())
    if any(isinstance(exc, _CONFIG_ERRORS) for exc in failures):
        return EXIT_CONFIG
    if any(isinstance(exc, IntegrationError) for exc in failures) or any(
        r.diverged for r in outcome.completed.values()
    ):
        return EXIT_DIVERGENCE
    return EXIT_ERROR if failures else EXIT_OK


async def _compare(cfg: CompareConfig) -> CompareResult:
    async with Simulator() as sim:
        return await sim.compare(cfg)


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    return _finish_run(args, cfg, Simulator().run(cfg))


def cmd_compare(args: argparse.Namespace) -> int:
    cfg = load_compare_config(args.config)
    return _finish_compare(args, cfg, asyncio.run(_compare(cfg)))


def cmd_reproduce(args: argparse.Namespace) -> int:
    cfg = REPRODUCTIONS[args.example]()
    if isinstance(cfg, CompareConfig):
        return _finish_compare(args, cfg, asyncio.run(_compare(cfg)))
    return _finish_run(args, cfg, Simulator().run(cfg))


def cmd_check(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    problem = build_problem(cfg)
    report = check_condition(cfg.variant, cfg.gains.to_gains(), problem.objectives.l_global, problem.bundle)
    if args.json:
        print(json.dumps(report.as_dict(), sort_keys=True, indent=2))
    else:
        print(report.as_text())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='pidflow', description='Simulate PID-type continuous-time distributed optimization.'
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')

    # global flags are accepted before or after the subcommand
    def add_common(p: argparse.ArgumentParser, default: Optional[object]) -> None:
        p.add_argument('--out-dir', default=default, help='directory for the output files')
        p.add_argument('--no-svg', action='store_true', default=default or False, help='skip the SVG plots')
        p.add_argument('--quiet', action='store_true', default=default or False, help='only log warnings and errors')

    add_common(parser, None)
    common = argparse.ArgumentParser(add_help=False)
    add_common(common, argparse.SUPPRESS)

    sub = parser.add_subparsers(dest='command', required=True)
    commands: List[Tuple[str, str, Callable[[argparse.Namespace], int]]] = [
        ('run', 'run a single experiment config', cmd_run),
        ('compare', 'run several variant and gain blocks on one problem', cmd_compare),
        ('check', 'print the gain condition of a second-order config', cmd_check),
    ]
    for name, help_text, func in commands:
        p = sub.add_parser(name, help=help_text, parents=[common])
        p.add_argument('config', help='path to the JSON config')
        p.set_defaults(func=func)
        if name == 'check':
            p.add_argument('--json', action='store_true', help='print the report as JSON')

    p = sub.add_parser('reproduce', help='run one of the built-in reproduction configs', parents=[common])
    p.add_argument('example', choices=sorted(REPRODUCTIONS))
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point of the ``pidflow`` command; returns the process exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format='%(asctime)s - %(levelname)s - %(name)s - %(message)s',
    )

    try:
        return args.func(args)
    except OracleFailure as exc:
        logger.error('%s', exc)
        return EXIT_ORACLE
    except Divergence as exc:
        logger.error('%s', exc)
        return EXIT_DIVERGENCE
    except _CONFIG_ERRORS as exc:
        logger.error('%s', exc)
        return EXIT_CONFIG
    except PIDFlowException as exc:
        logger.error('%s', exc)
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
