from typing import List, Optional
import argparse
import logging
import sys

from pydantic import ValidationError as PydanticValidationError

from app.api import build_router
from app.database import storage
from app.database.settings import settings
from app.logic.exceptions import (
    InvalidInputError,
    NumericalError,
    StorageError,
    ValidationError,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3

# set by the router, never by a config file
ROUTING_KEYS = {"command", "handler", "config"}


def apply_config_file(parser: argparse.ArgumentParser, commands: dict, argv: Optional[List[str]],
                      args: argparse.Namespace) -> argparse.Namespace:
    """Re-parse with the JSON file's values as the command's defaults, so explicit flags still win"""
    if not args.config:
        return args
    values = storage.read_json(args.config)
    # a parsed namespace carries every flag of the chosen command
    known = set(vars(args)) - ROUTING_KEYS
    unknown = sorted(set(values) - known)
    if unknown:
        raise ValidationError(f"Unknown keys in {args.config}: {', '.join(unknown)}")
    commands[args.command].set_defaults(**values)
    return parser.parse_args(argv)


def main(argv: Optional[List[str]] = None) -> int:
    parser, commands = build_router()
    args = parser.parse_args(argv)
    level = (args.log_level or settings.log_level).upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        args = apply_config_file(parser, commands, argv, args)
        payload = args.handler(args)
    except (ValidationError, InvalidInputError, StorageError) as e:
        logger.error(f"{e.error_code}: {e.message}")
        return EXIT_INVALID
    except PydanticValidationError as e:
        logger.error(f"VALIDATION_ERROR: {e}")
        return EXIT_INVALID
    except NumericalError as e:
        logger.error(f"{e.error_code}: {e.message}")
        return EXIT_NUMERICAL

    print(storage.to_json(payload))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
