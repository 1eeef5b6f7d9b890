import argparse
from typing import Dict, Tuple

from app.api.v1 import (
    abc_command,
    cv_command,
    density_command,
    estimate_command,
    experiment_command,
    fit_command,
    simulate_command,
    sl_command,
)

COMMANDS = (simulate_command, fit_command, density_command, cv_command, sl_command,
            estimate_command, abc_command, experiment_command)


def build_router() -> Tuple[argparse.ArgumentParser, Dict[str, argparse.ArgumentParser]]:
    """Root parser plus each subcommand's parser, keyed by command name"""
    parser = argparse.ArgumentParser(
        prog="ees",
        description="Extended empirical saddlepoint density estimation and synthetic likelihood inference",
    )
    parser.add_argument("--config", help="Flat JSON file of defaults for the chosen command; flags win")
    parser.add_argument("--log-level", help="Overrides EES_LOG_LEVEL")
    subparsers = parser.add_subparsers(dest="command", required=True)
    commands = {}
    for module in COMMANDS:
        sub = module.register(subparsers)
        commands[sub.prog.split()[-1]] = sub
    return parser, commands
