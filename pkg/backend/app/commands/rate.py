import argparse

from ..schemas.run import RunConfig
from ..services.rate_solver import rate_curve
from ..services.report import Table
from .deps import from_nats, metadata, require_model


def cmd_rate(run: RunConfig) -> Table:
    model = require_model(run)
    # an empty grid yields a header-only table
    curve = rate_curve(model, run.D_grid)
    table = Table(columns=["D", "rate", "lambda"], metadata=metadata(run, model))
    for point in curve.points:
        table.rows.append([point.D, from_nats(point.rate_nats, run.units), from_nats(point.lam, run.units)])
    return table


def register(subparsers: argparse._SubParsersAction, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("rate", parents=[common], help="R(D;P,M) along a distortion grid")
    parser.set_defaults(handler=cmd_rate, grid_target="D", orientation_default="R")
