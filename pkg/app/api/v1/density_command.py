import argparse

from app.api.v1.common import add_seed_arg, add_workers_arg, gamma_value, require
from app.database import storage
from app.logic.exceptions import ValidationError
from app.services.ees_service import EesService


def register(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("density", help="Evaluate EES log densities at query points")
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--model-dir", help="Directory written by `fit`")
    source.add_argument("--samples", help="Statistic matrix to fit on the fly")
    parser.add_argument("--gamma", type=gamma_value, help="Mixture parameter when fitting on the fly")
    parser.add_argument("--l", type=int, default=0, help="Importance samples when fitting on the fly")
    parser.add_argument("--points", help="Headerless CSV of query points")
    parser.add_argument("--gaussian-fallback", action="store_true",
                        help="Score points where the saddlepoint solver fails by the Gaussian branch")
    parser.add_argument("--output", help="CSV receiving log_density and failed columns")
    add_seed_arg(parser)
    add_workers_arg(parser)
    parser.set_defaults(handler=run)
    return parser


def run(args: argparse.Namespace) -> dict:
    require(args, "points")
    if args.model_dir and args.samples:
        raise ValidationError("Give either --model-dir or --samples, not both")
    if args.model_dir:
        model = storage.load_model(args.model_dir)
    else:
        require(args, "samples", "gamma")
        model = EesService.fit(storage.load_matrix(args.samples), args.gamma, seed=args.seed)
        if args.l > 0:
            model = EesService.normalize(model, args.l, workers=args.workers)

    values, failed = EesService.batch_log_density(
        model, storage.load_matrix(args.points), gaussian_fallback=args.gaussian_fallback, workers=args.workers
    )
    payload = {"normalized": model.is_normalized, "n_points": int(values.size), "n_failed": int(failed.sum())}
    if args.output:
        storage.write_table(args.output, [
            {"log_density": float(v), "failed": bool(f)} for v, f in zip(values, failed)
        ], root_seed=model.seed)
        payload["output"] = args.output
    else:
        payload["log_density"] = values.tolist()
    return payload
