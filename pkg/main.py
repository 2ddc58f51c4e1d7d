#!/usr/bin/env python3
"""
Yang-Mills slice-flow lab - command-line entry point

Usage:
    python main.py <subcommand> [options]
    ./ym <subcommand> [options]

Subcommands:
    flow          integrate the slice flow and write the trajectory
    retract       flow near-flat data to flat connections (batches, refinement)
    scan-lambda   fit the distance/curvature exponent along a ray
    pillowcase    locate a connection on the pillowcase
    kuranishi     dump the balancing map on the low-mode ball
    loja          finite-dimensional Lojasiewicz toolkit
    selftest      per-module invariant suites
    presets       list the experiment presets

Exit codes: 0 success, 1 experiment failure, 2 configuration error.
"""

import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

sys.path.insert(0, str(Path(__file__).parent))

from src.exceptions import ExperimentConfigError, YMLabError
from src.utils.experiment_manager import ExperimentConfig, get_experiment_manager
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def _csv_list(text: str) -> List[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _number_list(text: str) -> Union[str, List[float]]:
    """'1,10,100' as a list of floats; 'logspace:...' / 'linspace:...' passed through"""
    if text.startswith(("logspace:", "linspace:")):
        return text
    try:
        return [float(part) for part in _csv_list(text)]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from e


def _p_list(text: str) -> List[Union[float, str]]:
    values: List[Union[float, str]] = []
    for part in _csv_list(text):
        if part.lower() in ("inf", "infinity"):
            values.append("inf")
            continue
        try:
            values.append(float(part))
        except ValueError as e:
            raise argparse.ArgumentTypeError(f"expected numbers or 'inf', got {part!r}") from e
    return values


def _add_common(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("experiment")
    group.add_argument("--preset", help="named preset from experiments/")
    group.add_argument("--config", help="JSON or YAML configuration file")
    group.add_argument("--name", help="run name (default output stem)")
    group.add_argument("--grid", type=int, help="grid size N (even, >= 4)")
    group.add_argument("--base", help="flat base 'alpha,beta' in radians; pi expressions allowed")
    group.add_argument("--init", help="initial data: flat | random:AMP | ray:NAME:T | snapshot:PATH")
    group.add_argument("--seed", type=int, help="64-bit seed for random initial data and samples")
    group.add_argument("--out", help="output CSV path (JSON summary is written alongside)")


def _add_flow_options(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("integrator")
    group.add_argument("--integrator", choices=("etd2", "rk4"))
    group.add_argument("--t-max", dest="t_max", type=float)
    group.add_argument("--grad-tol", dest="grad_tol", type=float)
    group.add_argument("--rtol", type=float)
    group.add_argument("--dt0", type=float)
    group.add_argument("--dt-max", dest="dt_max", type=float)
    group.add_argument("--record-stride", dest="record_stride", type=int)
    group.add_argument("--sample-times", dest="sample_times", type=_number_list,
                       help="times the integrator must land on, e.g. '1,10,100'")
    group.add_argument("--track-holonomy", dest="track_holonomy", action="store_true", default=None,
                       help="record pillowcase readings of the holonomy along the flow")


def _add_workers(parser: argparse.ArgumentParser):
    parser.add_argument("--workers", type=int, help="worker threads (default: YM_THREADS)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ym", description="Yang-Mills slice-flow lab on the 2-torus")
    commands = parser.add_subparsers(dest="command", metavar="subcommand")
    commands.required = True

    flow = commands.add_parser("flow", help="integrate the slice flow")
    _add_common(flow)
    _add_flow_options(flow)

    retract = commands.add_parser("retract", help="retract near-flat data to flat connections")
    _add_common(retract)
    _add_flow_options(retract)
    retract.add_argument("--batch", type=int, help="number of seeds (seed, seed+1, ...)")
    retract.add_argument("--refine", action="store_true", default=None, help="repeat each draw at 2N")
    _add_workers(retract)

    scan = commands.add_parser("scan-lambda", help="fit dist ~ C ||F||^lambda along a ray")
    _add_common(scan)
    scan.add_argument("--ray", help="named ray (product, morse_bott)")
    scan.add_argument("--t-grid", dest="t_grid", type=_number_list,
                      help="ray parameters, e.g. 'logspace:-3:-1:20'")
    scan.add_argument("--p", type=_p_list, help="Sobolev exponents, e.g. '2,3,4'")
    _add_workers(scan)

    pillowcase = commands.add_parser("pillowcase", help="locate a connection on the pillowcase")
    _add_common(pillowcase)

    kur = commands.add_parser("kuranishi", help="balancing map on the low-mode ball")
    _add_common(kur)
    kur.add_argument("--mu", type=float, help="low-mode cutoff (default: half the spectral gap)")
    kur.add_argument("--radius", type=float, help="sampling radius in low-mode coordinates")
    kur.add_argument("--samples", type=int)
    kur.add_argument("--tol", type=float, help="Kuranishi solver tolerance")
    _add_workers(kur)

    loja = commands.add_parser("loja", help="finite-dimensional Lojasiewicz toolkit")
    _add_common(loja)
    loja.add_argument("--functions", type=_csv_list, help="comma-separated corpus names (default: all)")
    loja.add_argument("--samples", type=int, help="samples per distance-inequality fit")
    loja.add_argument("--sample-radius", dest="sample_radius", type=float)

    selftest = commands.add_parser("selftest", help="run the invariant suites")
    selftest.add_argument("--seed", type=int, help="seed for the randomized checks")

    commands.add_parser("presets", help="list the experiment presets")
    return parser


_NOT_CONFIG = ("command", "preset", "config", "workers")


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    values = {key: value for key, value in vars(args).items() if key not in _NOT_CONFIG}
    values["subcommand"] = args.command
    return values


def _list_presets() -> int:
    manager = get_experiment_manager()
    print("\n📋 EXPERIMENT PRESETS")
    print("=" * 80)
    names = manager.list_presets()
    if not names:
        print("  (none)")
    for name in names:
        info = manager.get_preset_info(name)
        print(f"  {name:<28} [{info['subcommand']}] {info['description']}")
    return EXIT_OK


def _run(config: ExperimentConfig, workers: Optional[int]):
    if config.subcommand == "flow":
        from run_flow import run_flow
        return run_flow(config)
    if config.subcommand == "retract":
        from run_retraction import run_retraction
        return run_retraction(config, max_workers=workers)
    if config.subcommand == "scan-lambda":
        from run_lambda_scan import run_lambda_scan
        return run_lambda_scan(config, max_workers=workers)
    if config.subcommand == "pillowcase":
        from run_pillowcase import run_pillowcase
        return run_pillowcase(config)
    if config.subcommand == "kuranishi":
        from run_kuranishi import run_kuranishi
        return run_kuranishi(config, max_workers=workers)
    if config.subcommand == "loja":
        from run_loja import run_loja
        return run_loja(config)
    from run_selftest import run_selftest
    return run_selftest(config)


def dispatch(argv: Optional[List[str]] = None) -> int:
    """
    Parse argv, run the subcommand and map the outcome to an exit code.

    Returns:
        0 on success, 1 on an experiment failure, 2 on a configuration error
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_CONFIG

    if args.command == "presets":
        return _list_presets()

    try:
        config = get_experiment_manager().build_config(
            preset=getattr(args, "preset", None),
            config_path=getattr(args, "config", None),
            overrides=_overrides(args),
        )
        if getattr(args, "workers", None) is not None and args.workers < 1:
            raise ExperimentConfigError(f"must be >= 1, got {args.workers}", key="workers")
        _run(config, getattr(args, "workers", None))
    except ExperimentConfigError as e:
        logger.error(f"Configuration error: {str(e)}")
        print(f"ym {args.command}: configuration error: {str(e)}", file=sys.stderr)
        return EXIT_CONFIG
    except YMLabError as e:
        logger.error(f"{args.command} failed: {type(e).__name__}: {str(e)}")
        print(f"ym {args.command}: {type(e).__name__}: {str(e)}", file=sys.stderr)
        return EXIT_FAILURE
    except KeyboardInterrupt:
        print("\n\n❌ Interrupted", file=sys.stderr)
        return 130
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(dispatch())
