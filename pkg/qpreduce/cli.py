"""
Command-line surface.

    python run.py <command> [options]

Commands: bryuno, solve, trees, renorm, verify, scan and all. Exit status is 0
when every check of the invoked stages passes, 1 on a failed check or a domain
error, 2 on usage, configuration or I/O errors.
"""

import os
import sys
import logging
import argparse
from typing import Any, Dict, List, Optional

from qpreduce.config import build_config, config_items
from qpreduce.errors import ConfigError, FieldFormatError, ReducibilityError
from qpreduce.fieldio import load_field, save_field
from qpreduce.pipeline import STAGES, run_stages

logger = logging.getLogger(__name__)

__all__ = ['build_parser', 'run', 'main', 'load_field', 'save_field', 'setup_logging']

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'
LOG_FILE = 'qpreduce.log'


def _floats(text: str) -> tuple:
    try:
        values = tuple(float(part) for part in text.split(',') if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma separated list of numbers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _interval(text: str) -> tuple:
    values = _floats(text)
    if len(values) != 2:
        raise argparse.ArgumentTypeError(f"expected 'a,b', got {text!r}")
    return values


def _global_options() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group('run settings')
    g.add_argument('--config', dest='config', default=None, help='flat key = value settings file')
    g.add_argument('--field', dest='field_path', default=None, help='JSON-lines Fourier field')
    g.add_argument('--omega', dest='omega', type=_floats, default=None, help='frequency vector, e.g. 1,0.618')
    g.add_argument('--lambda0', dest='lambda0', type=float, default=None)
    g.add_argument('--lambda-interval', dest='lambda_interval', type=_interval, default=None, help='a,b')
    g.add_argument('--epsilon', dest='epsilon', type=_floats, default=None, help='comma separated list')
    g.add_argument('--K', dest='K', type=int, default=None, help='series order')
    g.add_argument('--K-se', dest='K_SE', type=int, default=None, help='self-energy order')
    g.add_argument('--n-max', dest='n_max', type=int, default=None)
    g.add_argument('--N-check', dest='N_check', type=int, default=None)
    g.add_argument('--C1', dest='C1', type=float, default=None)
    g.add_argument('--sigma', dest='sigma', type=float, default=None)
    g.add_argument('--grid-size', dest='grid_size', type=int, default=None)
    g.add_argument('--T', dest='T', type=float, default=None, help='integration horizon')
    g.add_argument('--h', dest='h', type=float, default=None, help='integration step')
    g.add_argument('--divisor-floor', dest='divisor_floor', type=float, default=None)
    g.add_argument('--output-dir', dest='output_dir', default=None)
    g.add_argument('--jobs', dest='jobs', type=int, default=None)
    g.add_argument('--k-max-enum', dest='k_max_enum', type=int, default=None)
    g.add_argument('--image-stride', dest='image_stride', type=int, default=None)
    g.add_argument('--dot-dir', dest='dot_dir', default=None)
    g.add_argument('--dump-trajectory', dest='dump_trajectory', action='store_true', default=None)
    verbosity = p.add_mutually_exclusive_group()
    verbosity.add_argument('--verbose', dest='verbose', action='store_true')
    verbosity.add_argument('--quiet', dest='quiet', action='store_true')
    return p


def build_parser() -> argparse.ArgumentParser:
    parent = _global_options()
    parser = argparse.ArgumentParser(prog='qpreduce',
                                     description='Reducibility of quasi-periodic SL(2,R) skew-product flows')
    commands = parser.add_subparsers(dest='command', metavar='command')
    commands.required = True
    helps = {
        'bryuno': 'Bryuno sequence and scale constants',
        'solve': 'solve the formal series order by order',
        'trees': 'tree expansion compared with the series',
        'renorm': 'self-energy table and its identities',
        'verify': 'numerical integration against the series',
        'scan': 'lambda0 grid scan and excluded measure',
        'all': 'every stage in order',
    }
    for name in (*STAGES, 'all'):
        commands.add_parser(name, parents=[parent], help=helps[name])
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    skip = {'command', 'config', 'verbose', 'quiet'}
    return {k: v for k, v in vars(args).items() if k not in skip and v is not None}


def setup_logging(output_dir: str, level: int = logging.INFO) -> None:
    """Log to stderr and to qpreduce.log in the output directory"""
    os.makedirs(output_dir, exist_ok=True)
    logging.basicConfig(
        level=level,
        format=LOG_FORMAT,
        handlers=[
            logging.FileHandler(os.path.join(output_dir, LOG_FILE)),
            logging.StreamHandler(),
        ],
        force=True,
    )


def run(argv: Optional[List[str]] = None, configure_logging: bool = False) -> int:
    """Parse argv, run the requested stages and return the exit status"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    try:
        config = build_config(args.config, _overrides(args))
    except ConfigError as e:
        logger.error(f"❌ Configuration error: {e}")
        return EXIT_USAGE

    if configure_logging:
        level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
        setup_logging(config.output_dir, level)
    for name, value in config_items(config):
        logger.debug(f"{name} = {value}")

    stages = list(STAGES) if args.command == 'all' else [args.command]
    try:
        passed, _ = run_stages(config, stages)
    except (ConfigError, FieldFormatError) as e:
        logger.error(f"❌ {e}")
        return EXIT_USAGE
    except OSError as e:
        logger.error(f"❌ I/O error: {e}")
        return EXIT_USAGE
    except ReducibilityError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        return EXIT_FAILED
    except Exception as e:
        logger.error(f"❌ Unexpected failure: {e}")
        logger.exception("Full error traceback:")
        return EXIT_FAILED

    if not passed:
        logger.error("❌ One or more checks failed; see the summaries above")
        return EXIT_FAILED
    return EXIT_OK


def main() -> None:
    sys.exit(run(sys.argv[1:], configure_logging=True))
