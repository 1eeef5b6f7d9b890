import argparse

from app.ReqResModels.tuningmodels import DEFAULT_GAMMA_GRID
from app.api.v1.common import add_seed_arg, add_workers_arg, float_list, require
from app.database import storage
from app.services.tuning_service import TuningService


def register(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("cv", help="Select gamma by k-fold cross-validation")
    parser.add_argument("--samples", help="Headerless CSV, one statistic vector per row")
    parser.add_argument("--grid", type=float_list, default=list(DEFAULT_GAMMA_GRID), help="Comma-separated gamma grid")
    parser.add_argument("--k", type=int, default=10, help="Number of folds")
    parser.add_argument("--l", type=int, default=1000, help="Importance samples per (gamma, fold) cell")
    parser.add_argument("--output", help="CSV receiving the curve (gamma, fold_1..fold_k, mean)")
    add_seed_arg(parser)
    add_workers_arg(parser)
    parser.set_defaults(handler=run)
    return parser


def run(args: argparse.Namespace) -> dict:
    require(args, "samples")
    result = TuningService.cross_validate_gamma(
        storage.load_matrix(args.samples), args.grid, args.k, args.l, args.seed, args.workers
    )
    payload = {
        "selected_gamma": result.selected_gamma,
        "gamma_grid": result.gamma_grid.tolist(),
        "mean_loss": result.mean_loss.tolist(),
        "fallbacks": int(result.failure_counts.sum()),
        "seed": args.seed,
    }
    if args.output:
        storage.save_cv_curve(args.output, result, root_seed=args.seed)
        payload["output"] = args.output
    return payload
