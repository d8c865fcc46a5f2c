import argparse
import logging
import math
import os
from pathlib import Path

from cli import commands
from utils.config import VERSION, AppConfig
from utils.errors import StoqBellError, UsageError
from utils.logger import Logger, set_global_level

logger = Logger(__name__).get_logger()

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 64


class ArgParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def float_list(raw: str) -> list[float]:
    try:
        return [float(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {raw!r}")


def float_pair(raw: str) -> tuple[float, float]:
    values = float_list(raw)
    if len(values) != 2:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got {raw!r}")
    return values[0], values[1]


def _common() -> ArgParser:
    common = ArgParser(add_help=False)
    common.add_argument("--verbose", action="store_true", help="Debug logging and tracebacks")
    common.add_argument("--threads", type=int, default=None, help="Worker threads (0 = auto)")
    common.add_argument("--deg", action="store_true", help="Angles are given in degrees")
    common.add_argument("--out", type=Path, default=None, help="Output file (stdout when omitted)")
    return common


def _add_angles(p: ArgParser, theta_required: bool = True) -> None:
    p.add_argument("--phi", type=float, required=True, help="Angle of measurement 0")
    p.add_argument("--theta", type=float, required=theta_required, default=None, help="Angle of measurement 1")


def _add_system(p: ArgParser) -> None:
    p.add_argument("--n", type=int, required=True, help="Number of parties")
    p.add_argument("--K", type=int, choices=(1, 2, 3), required=True, help="Maximal correlator order")


def build_parser() -> ArgParser:
    common = _common()
    parser = ArgParser(prog="stoqbell", description="Stoquastic permutationally invariant Bell operators")
    parser.add_argument("--version", action="version", version=f"stoqbell {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("operator", parents=[common], help="Dicke block of a Bell operator")
    _add_system(p)
    _add_angles(p)
    p.add_argument("--alpha", type=float_list, required=True, help="Comma-separated coefficients")
    p.add_argument("--block", type=float, default=None, dest="J", help="Total spin J (default n/2)")
    p.set_defaults(handler=commands.cmd_operator)

    p = sub.add_parser("cone", parents=[common], help="Stoquastic cone of coefficients")
    _add_system(p)
    _add_angles(p)
    p.add_argument("--analytic", action="store_true", help="Closed-form two-body path")
    p.add_argument("--method", choices=("dd", "combinatorial"), default="dd")
    p.add_argument("--tol", type=float, default=None, help="Feasibility tolerance")
    p.set_defaults(handler=commands.cmd_cone)

    p = sub.add_parser("bounds", parents=[common], help="Quantum and classical bounds")
    _add_system(p)
    _add_angles(p)
    p.add_argument("--alpha", type=float_list, required=True)
    p.add_argument("--all-blocks", action="store_true", help="Minimize over every spin block")
    p.add_argument("--fit-gaussian", action="store_true", help="Fit the ground state to a Gaussian profile")
    p.set_defaults(handler=commands.cmd_bounds)

    p = sub.add_parser("optimize", parents=[common], help="Maximize the gap over a cone")
    p.add_argument("--cone-file", type=Path, default=None, help="Cone JSON written by the cone command")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--K", type=int, choices=(2, 3), default=2)
    p.add_argument("--phi", type=float, default=None)
    p.add_argument("--theta", type=float, default=None)
    p.add_argument("--seed", type=int, default=20240611)
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--passes", type=int, default=30)
    p.add_argument("--grid", type=int, default=101, help="Grid points per coordinate sweep")
    p.add_argument("--line-bound", type=float, default=1.0)
    p.add_argument("--seesaw", type=int, default=50, help="See-saw rounds after the sweeps (0 disables)")
    p.set_defaults(handler=commands.cmd_optimize)

    p = sub.add_parser("scan", parents=[common], help="Gap over a grid of angles (CSV)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--alpha", type=float_list, required=True)
    p.add_argument("--phi-range", type=float_pair, default=(-math.pi, math.pi))
    p.add_argument("--theta-range", type=float_pair, default=(-math.pi, math.pi))
    p.add_argument("--resolution", type=int, default=41)
    p.set_defaults(handler=commands.cmd_scan)

    p = sub.add_parser("parent", parents=[common], help="Stoquastic parent Hamiltonian of a Dicke state")
    p.add_argument("--state", choices=("ghz", "gaussian", "uniform", "basis"), required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--decompose", action="store_true", help="Pauli weight decomposition")
    p.set_defaults(handler=commands.cmd_parent)

    p = sub.add_parser("class", parents=[common], help="Tangent two-body inequality family")
    p.add_argument("--x", type=int, required=True)
    p.add_argument("--y", type=int, required=True)
    p.add_argument("--mu", type=int, required=True)
    p.add_argument("--sigma", type=int, choices=(-1, 1), required=True)
    p.add_argument("--tau", type=int, choices=(-1, 1), required=True)
    _add_angles(p, theta_required=False)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--verify", action="store_true", help="Check every spin block (needs --n)")
    p.set_defaults(handler=commands.cmd_class)
    return parser


def _configure(args) -> None:
    if args.verbose:
        set_global_level(logging.DEBUG)
    if args.threads is not None:
        if args.threads < 0:
            raise UsageError(f"--threads must be >= 0, got {args.threads}")
        os.environ["STOQBELL_THREADS"] = str(args.threads)
        AppConfig().set_threads(args.threads)
    if args.deg:
        for name in ("phi", "theta"):
            if getattr(args, name, None) is not None:
                setattr(args, name, math.radians(getattr(args, name)))
        for name in ("phi_range", "theta_range"):
            if getattr(args, name, None) is not None:
                setattr(args, name, tuple(math.radians(v) for v in getattr(args, name)))


def run(argv: list[str] | None = None) -> int:
    verbose = False
    try:
        args = build_parser().parse_args(argv)
        verbose = args.verbose
        _configure(args)
        return args.handler(args)
    except SystemExit as e:
        # --help and --version
        return e.code if isinstance(e.code, int) else EXIT_OK
    except UsageError as e:
        logger.error(f"Usage error: {e}")
        return EXIT_USAGE
    except StoqBellError as e:
        logger.error(f"{type(e).__name__}: {e}", exc_info=verbose)
        return EXIT_INTERNAL
    except Exception as e:
        logger.error(f"Unexpected failure: {e}", exc_info=verbose)
        return EXIT_INTERNAL
