import argparse

from ..schemas.run import RunConfig
from ..services.exponent_solver import exponent_oracle
from ..services.rate_solver import rate_oracle
from ..services.report import Table
from .deps import from_nats, metadata, require, require_model


def cmd_oracle(run: RunConfig) -> Table:
    """Brute-force R(D) without a rate, E*(R,D) with one."""
    model = require_model(run)
    info = metadata(run, model)
    if not run.rate_grid:
        table = Table(columns=["D", "mesh", "rate"], metadata=info)
        for D in require(run.D_grid, "--D or --grid"):
            table.rows.append([D, run.mesh, from_nats(rate_oracle(model, D, run.mesh), run.units)])
        return table

    sign = -1.0 if run.orientation == "r" else 1.0
    table = Table(columns=[run.orientation, "D", "mesh", "exponent"], metadata=info)
    for D in require(run.D_grid, "--D"):
        for x in run.rate_grid:
            value = exponent_oracle(model, sign * x, D, run.mesh)
            table.rows.append([from_nats(x, run.units), D, run.mesh, from_nats(value, run.units)])
    return table


def register(subparsers: argparse._SubParsersAction, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("oracle", parents=[common], help="Brute-force cross-checks")
    parser.set_defaults(handler=cmd_oracle, grid_target="D", orientation_default="R")
