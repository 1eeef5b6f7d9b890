import argparse

from app.ReqResModels.experimentmodels import ExperimentConfig, ExperimentName
from app.api.v1.common import float_list, int_list, require
from app.database.settings import settings
from app.services.experiment_service import ExperimentService

# flags forwarded to ExperimentConfig when given; unset ones keep the model defaults
CONFIG_FLAGS = (
    "replicates", "m", "l", "sl_l", "gamma", "gamma_grid", "k", "estimators", "d", "dims", "beta",
    "correlated", "cv_data", "T", "N0", "burn_in", "true_theta", "init", "iterations", "particles",
    "tail_average", "test_size", "kde_scales", "abc_calibration_sims", "abc_chain_length",
    "abc_target_acceptance", "mean_shift_starts",
)


def register(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("experiment", help="Run a replicated study and write its report files")
    parser.add_argument("--experiment", choices=[e.value for e in ExperimentName])
    parser.add_argument("--replicates", type=int)
    parser.add_argument("--m", type=int)
    parser.add_argument("--l", type=int)
    parser.add_argument("--sl-l", type=int)
    parser.add_argument("--gamma", help="Fixed gamma or 'cv'")
    parser.add_argument("--gamma-grid", type=float_list)
    parser.add_argument("--k", type=int)
    parser.add_argument("--estimators", type=lambda s: [x.strip() for x in s.split(",") if x.strip()])
    parser.add_argument("--d", type=int)
    parser.add_argument("--dims", type=int_list)
    parser.add_argument("--beta", type=float)
    parser.add_argument("--correlated", action="store_true", default=None)
    parser.add_argument("--cv-data", choices=["shifted-exp", "gaussian"])
    parser.add_argument("--T", type=int)
    parser.add_argument("--N0", type=int)
    parser.add_argument("--burn-in", type=int)
    parser.add_argument("--true-theta", type=float_list)
    parser.add_argument("--init", type=float_list)
    parser.add_argument("--iterations", type=int)
    parser.add_argument("--particles", type=int)
    parser.add_argument("--tail-average", type=int)
    parser.add_argument("--test-size", type=int)
    parser.add_argument("--kde-scales", type=float_list)
    parser.add_argument("--abc-calibration-sims", type=int)
    parser.add_argument("--abc-chain-length", type=int)
    parser.add_argument("--abc-target-acceptance", type=float)
    parser.add_argument("--mean-shift-starts", type=int)
    parser.add_argument("--output-dir", default=settings.output_dir)
    parser.add_argument("--seed", type=int, default=settings.default_seed)
    parser.add_argument("--workers", type=int, default=settings.workers)
    parser.set_defaults(handler=run)
    return parser


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    require(args, "experiment")
    fields = {name: getattr(args, name) for name in CONFIG_FLAGS if getattr(args, name, None) is not None}
    return ExperimentConfig(
        experiment=args.experiment, seed=args.seed, output_dir=args.output_dir, workers=args.workers, **fields
    )


def run(args: argparse.Namespace) -> dict:
    report = ExperimentService.run_experiment(build_config(args))
    return report.model_dump(mode="json")
