import argparse
import logging
from typing import List

from ..core.errors import SphereCoverError
from ..schemas.results import CoverReport
from ..schemas.run import RunConfig
from ..services.covering_sim import empirical_exponent_sweep, exhaustive_optimum, universality_check
from ..services.exponent_solver import exponent
from ..services.report import Table
from .deps import metadata, require, require_model

logger = logging.getLogger(__name__)

COLUMNS = ["n", "D", "R_nats", "mass_log", "error_prob", "empirical_exponent", "seed", "generator"]


def _row(report: CoverReport) -> List:
    return [
        report.n,
        report.D,
        report.R_nats,
        report.mass_log,
        report.error_prob,
        report.empirical_exponent,
        report.seed,
        report.generator,
    ]


def cmd_simulate(run: RunConfig) -> Table:
    """Finite-n covering runs; numbers are always reported in nats."""
    model = require_model(run)
    n_list = require(run.n_list, "--n")
    D = require(run.D_grid, "--D")[0]
    x = require(run.rate_grid, "--R or --r")[0]
    R = -x if run.orientation == "r" else x

    info = metadata(run, model)
    info["units"] = "nats"
    if run.exhaustive:
        table = Table(columns=list(COLUMNS), metadata=info)
        for n in n_list:
            table.rows.append(_row(exhaustive_optimum(model, n, R, D)))
        return table

    if run.sources:
        table = Table(columns=COLUMNS + ["source"], metadata=info)
        for n in n_list:
            for report in universality_check(
                model, n, R, D, run.sources, seed=run.seed, generator=run.generator, typicality=run.typicality
            ):
                table.rows.append(_row(report) + [";".join(repr(v) for v in report.source)])
        return table

    theory = None
    try:
        theory = exponent(model, R, D).value_nats
    except (SphereCoverError, ValueError) as exc:
        logger.warning("No theoretical exponent for comparison", extra={"error": str(exc)})
    sweep = empirical_exponent_sweep(
        model,
        n_list,
        R,
        D,
        run.trials,
        run.seed,
        generator=run.generator,
        typicality=run.typicality,
        theory_exponent=theory,
    )
    info["slope"] = sweep.slope
    if sweep.flagged:
        info["flagged"] = ",".join(str(n) for n in sweep.flagged)
    table = Table(columns=COLUMNS + ["error_floor"], metadata=info)
    table.rows.extend(_row(report) + [floor] for report, floor in zip(sweep.reports, sweep.error_floors))
    return table


def register(subparsers: argparse._SubParsersAction, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("simulate", parents=[common], help="Finite-n covering experiments")
    parser.set_defaults(handler=cmd_simulate, grid_target="rate", orientation_default="R")
