import argparse
import math

from app.ReqResModels.synthlikmodels import EstimatorKind
from app.api.v1.common import add_model_args, add_seed_arg, add_workers_arg, check_theta, float_list, gamma_value, require, simulator_from_args
from app.database import storage
from app.services.synthlik_service import SynthLikService


def register(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("sl", help="Estimate the log synthetic likelihood at one parameter point")
    add_model_args(parser)
    parser.add_argument("--theta", type=float_list, help="Comma-separated parameter values")
    parser.add_argument("--obs", help="CSV holding the observed statistic vector")
    parser.add_argument("--m", type=int, default=1000, help="Simulations per estimate")
    parser.add_argument("--estimator", choices=[k.value for k in EstimatorKind], default=EstimatorKind.EES.value)
    parser.add_argument("--gamma", type=gamma_value, default=math.inf, help="Mixture parameter for the EES estimator")
    parser.add_argument("--l", type=int, default=0, help="Importance samples (0 = unnormalized)")
    parser.add_argument("--robust", action="store_true", help="Median/MAD moments for the Gaussian estimator")
    add_seed_arg(parser)
    add_workers_arg(parser)
    parser.set_defaults(handler=run)
    return parser


def run(args: argparse.Namespace) -> dict:
    require(args, "obs")
    sim = simulator_from_args(args)
    theta = sim.param_vector(check_theta(sim, args.theta))
    estimate = SynthLikService.estimate(
        EstimatorKind(args.estimator), storage.load_vector(args.obs), theta, sim, args.m, args.seed,
        gamma=args.gamma, l=args.l, robust=args.robust, workers=args.workers,
    )
    return estimate.to_dict()
