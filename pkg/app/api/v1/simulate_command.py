import argparse
import logging

import numpy as np

from app.api.v1.common import add_model_args, add_seed_arg, add_workers_arg, check_theta, float_list, require, simulator_from_args
from app.database import storage
from app.logic.exceptions import ValidationError
from app.services.seeding import derive_seed
from app.services.simulator_service import BoomBustSimulator

logger = logging.getLogger(__name__)


def register(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("simulate", help="Simulate statistic vectors or trajectories to CSV")
    add_model_args(parser)
    parser.add_argument("--theta", type=float_list, help="Comma-separated parameter values")
    parser.add_argument("--n", type=int, default=1000, help="Number of rows")
    parser.add_argument("--trajectories", action="store_true", help="Emit raw boom-bust trajectories instead of statistics")
    parser.add_argument("--output", help="Destination CSV")
    add_seed_arg(parser)
    add_workers_arg(parser)
    parser.set_defaults(handler=run)
    return parser


def run(args: argparse.Namespace) -> dict:
    require(args, "output")
    sim = simulator_from_args(args)
    theta = check_theta(sim, args.theta)
    if args.n < 1:
        raise ValidationError("--n must be positive")
    if args.trajectories:
        if not isinstance(sim, BoomBustSimulator):
            raise ValidationError("--trajectories is only available for the boom-bust model")
        matrix = sim.trajectories(np.tile(theta, (args.n, 1)), derive_seed(args.seed, 0))
    else:
        matrix = sim.simulate_many(sim.param_vector(theta), args.n, args.seed, args.workers)
    path = storage.save_matrix(args.output, matrix)
    logger.info(f"Simulated {matrix.shape[0]} rows from {sim.name}")
    return {"output": str(path), "rows": int(matrix.shape[0]), "cols": int(matrix.shape[1]), "seed": args.seed}
