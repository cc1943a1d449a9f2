import argparse
from typing import List

from ..schemas.results import ExponentResult
from ..schemas.run import RunConfig
from ..services.exponent_solver import (
    concentration_exponent,
    exponent,
    exponent_sweep,
    hoeffding_exponent,
    marton_exponent,
    talagrand_bound,
)
from ..services.report import Table
from .deps import from_nats, metadata, require, require_model


def _row(x: float, D: float, result: ExponentResult, run: RunConfig) -> List:
    return [from_nats(x, run.units), D, from_nats(result.value_nats, run.units), result.label]


def cmd_exponent(run: RunConfig) -> Table:
    model = require_model(run)
    sign = -1.0 if run.orientation == "r" else 1.0
    table = Table(columns=[run.orientation, "D", "exponent", "regime"], metadata=metadata(run, model))
    for D in require(run.D_grid, "--D"):
        for x in require(run.rate_grid, "--R, --r or --grid"):
            table.rows.append(_row(x, D, exponent(model, sign * x, D), run))
    return table


def cmd_exponent_sweep(run: RunConfig) -> Table:
    model = require_model(run)
    D = require(run.D_grid, "--D")[0]
    curve = exponent_sweep(model, require(run.rate_grid, "--grid"), D, run.orientation)
    info = metadata(run, model)
    info.update(
        D=D,
        r_infinite=from_nats(curve.r_infinite, run.units),
        r_zero=from_nats(curve.r_zero, run.units),
    )
    table = Table(columns=[run.orientation, "D", "exponent", "regime"], metadata=info)
    for sample in curve.samples:
        table.rows.append(_row(sample.x, D, sample.result, run))
    return table


def cmd_hoeffding(run: RunConfig) -> Table:
    """Model file supplies P = P1 (alternative) and M = P0 (null)."""
    model = require_model(run)
    table = Table(columns=["r", "exponent", "regime"], metadata=metadata(run, model))
    for r in require(run.rate_grid, "--r or --grid"):
        result = hoeffding_exponent(model.m, model.p, r)
        table.rows.append([from_nats(r, run.units), from_nats(result.value_nats, run.units), result.label])
    return table


def cmd_marton(run: RunConfig) -> Table:
    model = require_model(run)
    table = Table(columns=["R", "D", "exponent", "regime"], metadata=metadata(run, model))
    for D in require(run.D_grid, "--D"):
        for R in require(run.rate_grid, "--R or --grid"):
            table.rows.append(_row(R, D, marton_exponent(model.P, model.rho, R, D), run))
    return table


def cmd_concentration(run: RunConfig) -> Table:
    model = require_model(run)
    table = Table(columns=["r", "D", "exponent", "regime", "talagrand"], metadata=metadata(run, model))
    for D in require(run.D_grid, "--D"):
        for r in require(run.rate_grid, "--r or --grid"):
            result = concentration_exponent(model.P, model.rho, r, D)
            bound = talagrand_bound(r, D)
            table.rows.append(_row(r, D, result, run) + [from_nats(bound, run.units)])
    return table


def register(subparsers: argparse._SubParsersAction, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("exponent", parents=[common], help="E*(R,D) at given points")
    parser.set_defaults(handler=cmd_exponent, grid_target="rate", orientation_default="R")

    parser = subparsers.add_parser("exponent-sweep", parents=[common], help="E* along a rate grid at fixed D")
    parser.set_defaults(handler=cmd_exponent_sweep, grid_target="rate", orientation_default="r")

    parser = subparsers.add_parser("hoeffding", parents=[common], help="Hoeffding exponent, P = P1 and M = P0")
    parser.set_defaults(handler=cmd_hoeffding, grid_target="rate", orientation_default="r")

    parser = subparsers.add_parser("marton", parents=[common], help="Counting-measure exponent (M = 1)")
    parser.set_defaults(handler=cmd_marton, grid_target="rate", orientation_default="R")

    parser = subparsers.add_parser("concentration", parents=[common], help="Concentration exponent (M = P)")
    parser.set_defaults(handler=cmd_concentration, grid_target="rate", orientation_default="r")

