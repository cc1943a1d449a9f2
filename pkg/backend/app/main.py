import argparse
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from .commands import exponent, oracle, rate, simulate
from .commands.deps import float_list, grid, int_list, source_list, to_nats
from .core import config
from .core.errors import SphereCoverError, UsageError
from .schemas.run import RunConfig
from .services.covering_sim import GENERATORS
from .services.report import write_csv

logger = logging.getLogger("spherecover")


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        raise UsageError(f"{self.prog}: {message}")


def _common_arguments() -> argparse.ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument("--model", type=str, help="JSON model file")
    common.add_argument("--D", type=float_list, help="distortion level(s), comma separated")
    common.add_argument("--R", type=float_list, help="mass rate(s) R, comma separated")
    common.add_argument("--r", type=float_list, help="rate(s) r = -R, comma separated")
    common.add_argument("--grid", type=grid, help="a:b:step sweep over the command's main variable")
    common.add_argument("--orientation", choices=["R", "r"], help="rate axis for grids")
    common.add_argument("--units", choices=["nats", "bits"], default="nats")
    common.add_argument("--mesh", type=int, default=200)
    common.add_argument("--n", type=int_list, help="block length(s), comma separated")
    common.add_argument("--trials", type=int, default=1)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--generator", choices=GENERATORS, default="type-covering")
    common.add_argument("--exhaustive", action="store_true")
    common.add_argument("--sources", type=source_list, help="alternative source laws 'p,q;p,q'")
    common.add_argument("--typicality", type=float, default=1.0)
    common.add_argument("--normalize", action="store_true", help="subtract row minima from rho")
    common.add_argument("--out", type=str, help="CSV output path (default: stdout)")
    return common


def create_parser() -> argparse.ArgumentParser:
    parser = ArgumentParser(prog="spherecover", description="Sphere-covering exponents and rate functions")
    subparsers = parser.add_subparsers(dest="command", required=True)
    common = _common_arguments()
    for module in (rate, exponent, simulate, oracle):
        module.register(subparsers, common)
    return parser


def build_config(args: argparse.Namespace) -> RunConfig:
    if args.R and args.r:
        raise UsageError("give either --R or --r, not both")
    D_grid = list(args.D or [])
    rates = list(args.R or args.r or [])
    orientation = args.orientation or ("r" if args.r else "R" if args.R else args.orientation_default)
    if args.grid:
        if args.grid_target == "D":
            D_grid = args.grid
        else:
            rates = args.grid
    try:
        return RunConfig(
            command=args.command,
            model_path=args.model,
            units=args.units,
            D_grid=D_grid,
            rate_grid=to_nats(rates, args.units),
            orientation=orientation,
            mesh=args.mesh,
            n_list=list(args.n or []),
            trials=args.trials,
            seed=args.seed,
            out=args.out,
            normalize=args.normalize,
            exhaustive=args.exhaustive,
            generator=args.generator,
            sources=list(args.sources or []),
            typicality=args.typicality,
        )
    except ValidationError as exc:
        first = exc.errors()[0]
        raise UsageError(f"{'.'.join(str(p) for p in first['loc'])}: {first['msg']}") from None


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(
        level=config.LOG_LEVEL,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        args = create_parser().parse_args(argv)
        run = build_config(args)
        table = args.handler(run)
    except SphereCoverError as exc:
        sys.stderr.write(f"spherecover: error: {exc.detail}\n")
        return exc.exit_code
    except ValueError as exc:
        sys.stderr.write(f"spherecover: error: {exc}\n")
        return UsageError.exit_code

    if run.out is None:
        write_csv(sys.stdout, table)
    else:
        try:
            with open(run.out, "w", encoding="utf-8", newline="") as handle:
                write_csv(handle, table)
        except OSError as exc:
            sys.stderr.write(f"spherecover: error: cannot write {run.out}: {exc.strerror}\n")
            return UsageError.exit_code
        logger.info("Wrote %d rows to %s", len(table.rows), run.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
