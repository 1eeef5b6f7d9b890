import argparse
from typing import List, Optional

from app.database.settings import settings
from app.logic.exceptions import ValidationError
from app.services.simulator_service import SIMULATOR_NAMES, Simulator, get_simulator


def float_list(text: str) -> List[float]:
    """Comma-separated floats, as given on the command line"""
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def int_list(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def gamma_value(text: str) -> float:
    """Nonnegative gamma; 'inf' selects the Gaussian limit"""
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"gamma must be a number or inf, got {text!r}")
    if value < 0:
        raise argparse.ArgumentTypeError("gamma must be nonnegative")
    return value


def add_seed_arg(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=settings.default_seed, help="Root seed")


def add_workers_arg(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--workers", type=int, default=settings.workers, help="Thread pool size")


def add_model_args(parser) -> None:
    parser.add_argument("--model", choices=SIMULATOR_NAMES, help="Simulator")
    parser.add_argument("--d", type=int, default=10, help="Shifted exponential dimension")
    parser.add_argument("--beta", type=float, default=0.5, help="Shifted exponential rate")
    parser.add_argument("--T", type=int, default=300, help="Boom-bust trajectory length")
    parser.add_argument("--N0", type=int, default=10, help="Boom-bust initial population")
    parser.add_argument("--burn-in", type=int, default=50, help="Boom-bust steps dropped before statistics")
    parser.add_argument("--correlation-seed", type=int, default=0, help="Seed of the copula correlation matrix")


def simulator_from_args(args: argparse.Namespace) -> Simulator:
    require(args, "model")
    return get_simulator(
        args.model, d=args.d, beta=args.beta, T=args.T, N0=args.N0,
        burn_in=args.burn_in, correlation_seed=args.correlation_seed,
    )


def check_theta(sim: Simulator, theta: Optional[List[float]], flag: str = "--theta") -> List[float]:
    if theta is None or len(theta) != len(sim.param_names):
        raise ValidationError(f"{flag} needs {len(sim.param_names)} values ({', '.join(sim.param_names)})")
    return theta


def require(args: argparse.Namespace, *names: str) -> None:
    """Flags that may come from the command line or the --config file but must be set by one of them"""
    missing = [f"--{name.replace('_', '-')}" for name in names if getattr(args, name, None) is None]
    if missing:
        raise ValidationError(f"Missing required option(s): {', '.join(missing)}")
