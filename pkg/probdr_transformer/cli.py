"""``probdr <command> [flags]``: dispatches to the commands and maps errors to exit codes."""

import sys
import typing

from loguru import logger

from probdr_transformer.commands import COMMANDS
from probdr_transformer.exceptions import (
    ConfigError,
    ConsistencyError,
    FormatError,
    InvalidInputError,
    InvalidParameterError,
    ProbDRError,
    ShapeError,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_INPUT = 3


def exit_code(error: BaseException) -> int:
    if isinstance(error, (ConfigError, InvalidParameterError)):
        return EXIT_USAGE
    if isinstance(error, (FormatError, ConsistencyError, InvalidInputError, ShapeError, OSError)):
        return EXIT_INPUT
    # divergence, convergence and rank failures
    if isinstance(error, ProbDRError):
        return EXIT_FAILURE
    raise error


def usage() -> str:
    lines = ["usage: probdr <command> [flags]", "", "commands:"]
    width = max(len(name) for name in COMMANDS)
    for name, command in COMMANDS.items():
        lines.append(f"  {name:<{width}}  {command.__doc__.strip().splitlines()[0]}")
    lines.append("")
    lines.append("Run 'probdr <command> --help' for the flags of a command.")
    return "\n".join(lines)


def main(argv: typing.Optional[typing.Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help"):
        print(usage())
        return EXIT_OK if argv else EXIT_USAGE
    name, rest = argv[0], argv[1:]
    if name not in COMMANDS:
        print(f"probdr: unknown command '{name}'\n\n{usage()}", file=sys.stderr)
        return EXIT_USAGE

    cls = COMMANDS[name]
    try:
        config = cls.config(rest)
    except SystemExit as e:
        # argparse: --help exits 0, bad flags exit 2
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    except (ProbDRError, OSError) as e:
        logger.error(f"{name}: {e}")
        return exit_code(e)

    try:
        command = cls(config)
    except (ProbDRError, OSError) as e:
        logger.error(f"{name}: {e}")
        return exit_code(e)

    with command:
        try:
            return command.run()
        except (ProbDRError, OSError) as e:
            logger.error(f"{name}: {e}")
            return exit_code(e)


if __name__ == "__main__":
    sys.exit(main())
