import argparse
import math

from app.ReqResModels.optimizermodels import IfConfig
from app.ReqResModels.synthlikmodels import EstimatorKind
from app.api.v1.common import add_model_args, add_seed_arg, add_workers_arg, check_theta, float_list, gamma_value, require, simulator_from_args
from app.database import storage
from app.services.optimizer_service import OptimizerService
from app.services.synthlik_service import SynthLikService


def register(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("estimate", help="Maximize the synthetic likelihood by iterated filtering")
    add_model_args(parser)
    parser.add_argument("--obs", help="CSV holding the observed statistic vector")
    parser.add_argument("--init", type=float_list, help="Comma-separated starting values")
    parser.add_argument("--iters", type=int, default=100, help="Filtering iterations")
    parser.add_argument("--particles", type=int, default=24, help="Particles per iteration")
    parser.add_argument("--sigma0-sq", type=float, default=0.95, help="Cooling base")
    parser.add_argument("--m", type=int, default=1000, help="Simulations per likelihood estimate")
    parser.add_argument("--estimator", choices=[k.value for k in EstimatorKind], default=EstimatorKind.EES.value)
    parser.add_argument("--gamma", type=gamma_value, default=math.inf, help="Mixture parameter for the EES estimator")
    parser.add_argument("--l", type=int, default=0, help="Importance samples inside each estimate (0 = unnormalized)")
    parser.add_argument("--tail-average", type=int, default=10, help="Trailing iterations averaged into the estimate")
    parser.add_argument("--output", help="CSV receiving the per-iteration trace")
    add_seed_arg(parser)
    add_workers_arg(parser)
    parser.set_defaults(handler=run)
    return parser


def run(args: argparse.Namespace) -> dict:
    require(args, "obs")
    sim = simulator_from_args(args)
    theta0 = sim.param_vector(check_theta(sim, args.init, "--init"))
    objective = SynthLikService.make_objective(
        EstimatorKind(args.estimator), storage.load_vector(args.obs), sim, args.m, gamma=args.gamma, l=args.l
    )
    config = IfConfig(
        n_particles=args.particles, iterations=args.iters, sigma0_sq=args.sigma0_sq,
        theta0=theta0, seed=args.seed, workers=args.workers,
    )
    trace = OptimizerService.maximize_sl(objective, config)
    payload = {
        "estimate": dict(zip(trace.names, trace.tail_average(args.tail_average).tolist())),
        "final": dict(zip(trace.names, trace.final.tolist())),
        "iterations": trace.iterations,
        "seed": args.seed,
    }
    if args.output:
        storage.save_trace(args.output, trace, root_seed=args.seed)
        payload["output"] = args.output
    return payload
