import argparse
from typing import Optional

from app.ReqResModels.abcmodels import AbcAnalytic, AbcMcmcConfig
from app.api.v1.common import add_model_args, add_seed_arg, add_workers_arg, float_list, require, simulator_from_args
from app.database import storage
from app.logic.exceptions import ValidationError
from app.services.abc_service import AbcService


def register(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("abc", help="ABC comparators: analytic shifted exponential or MCMC-ABC")
    parser.add_argument("mode", choices=["analytic", "mcmc"])

    analytic = parser.add_argument_group("analytic mode")
    analytic.add_argument("--epsilon", type=float, help="Tolerance (calibrated from --psi and --phi when absent)")
    analytic.add_argument("--psi", type=float, help="Prior lower bound (calibrated from --epsilon and --phi when absent)")
    analytic.add_argument("--phi", type=float, help="Target prior acceptance probability")
    analytic.add_argument("--theta", type=float_list, help="Point at which to evaluate the ABC likelihood")

    mcmc = parser.add_argument_group("mcmc mode")
    add_model_args(mcmc)
    mcmc.add_argument("--obs", help="CSV holding the observed statistic vector")
    mcmc.add_argument("--lower", type=float_list, help="Uniform prior lower bounds (defaults to the model box)")
    mcmc.add_argument("--upper", type=float_list, help="Uniform prior upper bounds (defaults to the model box)")
    mcmc.add_argument("--target-acceptance", type=float, default=1e-3)
    mcmc.add_argument("--calibration-sims", type=int, default=100_000)
    mcmc.add_argument("--chain-length", type=int, default=1_200_000)
    mcmc.add_argument("--thin", type=int)
    mcmc.add_argument("--chain-burn-in", type=int, help="Leading chain steps discarded")
    mcmc.add_argument("--starts", type=int, default=500, help="Mean-shift starts")
    mcmc.add_argument("--output", help="CSV receiving the posterior samples")
    mcmc.add_argument("--map-output", help="JSON receiving the MAP estimate")
    add_seed_arg(parser)
    add_workers_arg(parser)
    parser.set_defaults(handler=run)
    return parser


def run(args: argparse.Namespace) -> dict:
    if args.mode == "analytic":
        return run_analytic(args)
    return run_mcmc(args)


def run_analytic(args: argparse.Namespace) -> dict:
    epsilon: Optional[float] = args.epsilon
    psi: Optional[float] = args.psi
    if epsilon is None:
        if psi is None or args.phi is None:
            raise ValidationError("analytic mode needs --epsilon, or --psi with --phi")
        epsilon = AbcService.calibrate_tolerance(psi, args.phi, args.beta, args.d)
    elif psi is None and args.phi is not None:
        psi = AbcService.calibrate_prior(epsilon, args.phi, args.beta, args.d)
    setting = AbcAnalytic(epsilon=epsilon, beta=args.beta, psi=psi, d=args.d)

    payload = {
        "epsilon": setting.epsilon,
        "psi": setting.psi,
        "beta": setting.beta,
        "d": setting.d,
        "map_mse": AbcService.abc_map_mse(setting.epsilon),
        "map_acceptance": AbcService.map_acceptance(setting.epsilon, setting.beta, setting.d),
    }
    if setting.psi is not None:
        payload["prior_acceptance"] = AbcService.acceptance_probability(setting.psi, setting.epsilon, setting.beta, setting.d)
    if args.theta is not None:
        if len(args.theta) != setting.d:
            raise ValidationError(f"--theta needs {setting.d} values")
        payload["likelihood"] = AbcService.abc_likelihood(args.theta, setting.epsilon, setting.beta)
    return payload


def run_mcmc(args: argparse.Namespace) -> dict:
    require(args, "obs")
    sim = simulator_from_args(args)
    lower, upper = sim.bounds()
    config = AbcMcmcConfig(
        lower=args.lower or lower,
        upper=args.upper or upper,
        epsilon=args.epsilon,
        target_acceptance=args.target_acceptance,
        calibration_sims=args.calibration_sims,
        chain_length=args.chain_length,
        thin=args.thin,
        burn_in=args.chain_burn_in,
        seed=args.seed,
        workers=args.workers,
    )
    result = AbcService.mcmc_abc(sim, config, storage.load_vector(args.obs))
    payload = result.to_dict()
    if result.samples.shape[0] > 0:
        mode = AbcService.mean_shift_map(result.samples, args.starts, args.seed, names=result.names, workers=args.workers)
        payload["map"] = mode.to_dict()
        if args.map_output:
            storage.write_json(args.map_output, {"map": mode.to_dict(), "seed": args.seed, "epsilon": result.epsilon})
    if args.output:
        storage.write_table(args.output, [dict(zip(result.names, row)) for row in result.samples.tolist()],
                            columns=result.names, root_seed=args.seed)
        payload["output"] = args.output
    return payload
