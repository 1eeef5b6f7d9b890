import argparse

from app.api.v1.common import add_seed_arg, add_workers_arg, gamma_value, require
from app.database import storage
from app.services.ees_service import EesService


def register(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("fit", help="Fit an EES model to a statistic matrix")
    parser.add_argument("--samples", help="Headerless CSV, one statistic vector per row")
    parser.add_argument("--gamma", type=gamma_value, help="Mixture parameter (inf for Gaussian)")
    parser.add_argument("--l", type=int, default=0, help="Importance samples for normalization (0 = unnormalized)")
    parser.add_argument("--output", help="Directory receiving the model manifest")
    add_seed_arg(parser)
    add_workers_arg(parser)
    parser.set_defaults(handler=run)
    return parser


def run(args: argparse.Namespace) -> dict:
    require(args, "samples", "gamma", "output")
    model = EesService.fit(storage.load_matrix(args.samples), args.gamma, seed=args.seed)
    if args.l > 0:
        model = EesService.normalize(model, args.l, workers=args.workers)
    storage.save_model(model, args.output)
    return {
        "output": args.output,
        "m": model.m,
        "d": model.d,
        "gamma": model.gamma,
        "log_z": model.log_z,
        "z_std_error": model.z_std_error,
        "seed": model.seed,
    }
