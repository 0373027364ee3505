# The MIT License (MIT)
# Copyright © 2024 probdr-transformer developers

# Permission is hereby granted, free of charge, to any person obtaining a copy of this software and associated
# documentation files (the “Software”), to deal in the Software without restriction, including without limitation
# the rights to use, copy, modify, merge, publish, distribute, sublicense, and/or sell copies of the Software,
# and to permit persons to whom the Software is furnished to do so, subject to the following conditions:

# The above copyright notice and this permission notice shall be included in all copies or substantial portions of
# the Software.

# THE SOFTWARE IS PROVIDED “AS IS”, WITHOUT WARRANTY OF ANY KIND, EXPRESS OR IMPLIED, INCLUDING BUT NOT LIMITED TO
# THE WARRANTIES OF MERCHANTABILITY, FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL
# THE AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER LIABILITY, WHETHER IN AN ACTION
# OF CONTRACT, TORT OR OTHERWISE, ARISING FROM, OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER
# DEALINGS IN THE SOFTWARE.

import os
import sys
import types
import typing
import argparse

from loguru import logger

from probdr_transformer.exceptions import ConfigError

CONFIG_ECHO = "config.txt"
EVENTS_LEVEL = "EVENTS"
TRUE_STRINGS = ("1", "true", "yes", "on")
FALSE_STRINGS = ("0", "false", "no", "off")


class Config(types.SimpleNamespace):
    """Nested view of dotted flag destinations: ``config.dimred.n_blocks``."""

    @classmethod
    def from_flat(cls, flat: typing.Dict[str, typing.Any]) -> "Config":
        root = cls()
        for key, value in flat.items():
            node = root
            *parents, leaf = key.split(".")
            for part in parents:
                if not hasattr(node, part):
                    setattr(node, part, cls())
                node = getattr(node, part)
            setattr(node, leaf, value)
        return root

    def flat(self, prefix: str = "") -> typing.Dict[str, typing.Any]:
        out = {}
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Config):
                out.update(value.flat(prefix=f"{name}."))
            else:
                out[name] = value
        return out


def seed_list(text: str) -> typing.List[int]:
    """Parses ``"1,2,3"`` into ``[1, 2, 3]``."""
    try:
        seeds = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed list '{text}'")
    if not seeds:
        raise argparse.ArgumentTypeError("at least one seed is required")
    return seeds


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _convert(action: argparse.Action, key: str, raw: str):
    if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
        lowered = raw.lower()
        if lowered in TRUE_STRINGS:
            return True
        if lowered in FALSE_STRINGS:
            return False
        raise ConfigError(f"configuration key '{key}' expects a boolean, got '{raw}'")
    try:
        value = action.type(raw) if action.type is not None else raw
    except (ValueError, TypeError, argparse.ArgumentTypeError) as e:
        raise ConfigError(f"configuration key '{key}': cannot convert '{raw}' ({e})")
    if action.choices is not None and value not in action.choices:
        raise ConfigError(
            f"configuration key '{key}' must be one of {list(action.choices)}, got '{raw}'"
        )
    return value


def load_config_file(path: str, parser: argparse.ArgumentParser) -> typing.Dict[str, typing.Any]:
    """
    Reads ``key=value`` lines; keys are flag destinations of ``parser``.

    Raises:
        ConfigError: On malformed lines or keys the parser does not know.
    """
    actions = {
        action.dest: action
        for action in parser._actions
        if action.dest not in ("help", "config")
    }
    values = {}
    with open(path, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, raw = line.partition("=")
            key, raw = key.strip(), raw.strip()
            if not sep:
                raise ConfigError(f"{path}:{number}: expected key=value, got '{line}'")
            if key not in actions:
                raise ConfigError(f"{path}:{number}: unknown configuration key '{key}'")
            values[key] = _convert(actions[key], key, raw)
    return values


def ensure_events_level():
    try:
        logger.level(EVENTS_LEVEL)
    except ValueError:
        logger.level(EVENTS_LEVEL, no=38, icon="📝")


def log_event(message: str):
    """Logs at the EVENTS level, which goes to the serialized events.log sink."""
    ensure_events_level()
    logger.log(EVENTS_LEVEL, message)


def check_config(cls, config: Config) -> typing.List[int]:
    r"""Checks/validates the config namespace object, prepares the output directory,
    echoes the resolved configuration and installs the log sinks.

    Returns:
        List[int]: loguru handler ids to remove when the command finishes.
    """
    config.full_path = os.path.abspath(os.path.expanduser(config.out))
    os.makedirs(config.full_path, exist_ok=True)

    level = "INFO"
    if config.logging.debug:
        level = "DEBUG"
    if config.logging.trace:
        level = "TRACE"

    logger.remove()
    handlers = [
        logger.add(sys.stderr, level=level),
        logger.add(
            os.path.join(config.full_path, "run.log"),
            level=level,
            format="{time:YYYY-MM-DD at HH:mm:ss} | {level} | {message}",
        ),
    ]

    if not config.logging.dont_save_events:
        # Add custom event logger for the events.
        ensure_events_level()
        handlers.append(
            logger.add(
                os.path.join(config.full_path, "events.log"),
                rotation=config.logging.events_retention_size,
                serialize=True,
                backtrace=False,
                diagnose=False,
                level=EVENTS_LEVEL,
                format="{time:YYYY-MM-DD at HH:mm:ss} | {level} | {message}",
            )
        )

    write_config_echo(config, os.path.join(config.full_path, CONFIG_ECHO))
    return handlers


def write_config_echo(config: Config, path: str):
    """Writes the resolved configuration as a replayable ``key=value`` file."""
    skip = {"config", "full_path"}
    lines = [
        f"{key}={format_value(value)}"
        for key, value in sorted(config.flat().items())
        if key not in skip and value is not None
    ]
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def add_args(cls, parser: argparse.ArgumentParser):
    """
    Adds the arguments every command shares.
    """

    parser.add_argument(
        "--config",
        type=str,
        help="Path to a key=value configuration file (flags override it).",
        default=None,
    )

    parser.add_argument(
        "--seed",
        type=int,
        help=(
            "Root seed; every random stream of the command is derived from it. Streams come from "
            "torch mt19937 generators, so results reproduce for a given torch version but not "
            "across other RNG implementations."
        ),
        default=0,
    )

    parser.add_argument(
        "--out",
        type=str,
        help="Output directory for results, logs and the resolved configuration.",
        default=os.path.join("runs", cls.name),
    )

    parser.add_argument(
        "--logging.debug",
        action="store_true",
        help="Log at DEBUG level.",
        default=False,
    )

    parser.add_argument(
        "--logging.trace",
        action="store_true",
        help="Log at TRACE level.",
        default=False,
    )

    parser.add_argument(
        "--logging.events_retention_size",
        type=str,
        help="Events retention size.",
        default="2 GB",
    )

    parser.add_argument(
        "--logging.dont_save_events",
        action="store_true",
        help="If set, we dont save events to a log file.",
        default=False,
    )


def add_verify_args(cls, parser: argparse.ArgumentParser):
    """Add verification specific arguments to the parser."""

    parser.add_argument(
        "--suite",
        type=str,
        choices=["linalg", "graph", "objective", "block", "lm", "all"],
        help="Which invariant suite to run.",
        default="all",
    )

    parser.add_argument(
        "--verify.instances",
        type=int,
        help="Random instances per property check.",
        default=20,
    )


def add_data_args(cls, parser: argparse.ArgumentParser, default_limit: int = 1000):
    """Dataset selection shared by eigenmaps and dimred."""

    parser.add_argument(
        "--data.images",
        "--images",
        type=str,
        help="IDX image file (optionally gzip-compressed).",
        default=None,
    )

    parser.add_argument(
        "--data.labels",
        "--labels",
        type=str,
        help="IDX label file (optionally gzip-compressed).",
        default=None,
    )

    parser.add_argument(
        "--data.limit",
        "--limit",
        type=int,
        help="Number of IDX items to load.",
        default=default_limit,
    )

    parser.add_argument(
        "--data.n",
        "--n",
        type=int,
        help="Number of points of a synthetic dataset.",
        default=300,
    )

    parser.add_argument(
        "--data.d",
        "--d",
        type=int,
        help="Dimension of a synthetic dataset.",
        default=50,
    )

    parser.add_argument(
        "--data.centers",
        type=int,
        help="Number of Gaussian blobs of the synthetic dataset.",
        default=3,
    )

    parser.add_argument(
        "--data.separation",
        type=float,
        help="Distance between blob centres, in units of the blob standard deviation.",
        default=8.0,
    )


def add_eigenmaps_args(cls, parser: argparse.ArgumentParser):
    """Add closed-form embedding arguments to the parser."""

    add_data_args(cls, parser)

    parser.add_argument(
        "--data.csv",
        "--data",
        type=str,
        help="Numeric CSV dataset with a header row (one point per row).",
        default=None,
    )

    parser.add_argument(
        "--synthetic",
        type=str,
        choices=["chain", "blobs"],
        help="Use a synthetic dataset instead of a file.",
        default=None,
    )

    parser.add_argument("--eigenmaps.k", "--k", type=int, help="Neighbours per point.", default=10)

    parser.add_argument("--eigenmaps.q", "--q", type=int, help="Embedding dimension.", default=2)

    parser.add_argument(
        "--eigenmaps.beta",
        "--beta",
        type=float,
        help="Wishart scale regulariser of the closed-form embedding.",
        default=0.5,
    )

    parser.add_argument(
        "--eigenmaps.method",
        type=str,
        choices=["jacobi", "lapack"],
        help="Eigensolver: cyclic Jacobi or LAPACK (torch.linalg.eigh).",
        default="jacobi",
    )


def add_dimred_args(cls, parser: argparse.ArgumentParser):
    """Add unrolled dimensionality reduction arguments to the parser."""

    add_data_args(cls, parser)

    parser.add_argument(
        "--synthetic",
        type=str,
        choices=["blobs"],
        help="Use the synthetic Gaussian blobs dataset.",
        default=None,
    )

    parser.add_argument("--dimred.q", "--q", type=int, help="Latent dimension.", default=128)

    parser.add_argument("--dimred.kappa", "--kappa", type=float, help="Softmax concentration.", default=30.0)

    parser.add_argument("--dimred.eta", "--eta", type=float, help="Step size (at most 0.5).", default=0.4)

    parser.add_argument("--dimred.beta", "--beta", type=float, help="Wishart scale regulariser.", default=1.0)

    parser.add_argument("--dimred.n_blocks", "--n-blocks", type=int, help="Number of unrolled blocks.", default=8)

    parser.add_argument(
        "--dimred.mask",
        type=str,
        choices=["none", "self", "causal"],
        help="Logit mask of the attention step.",
        default="none",
    )

    parser.add_argument(
        "--dimred.init",
        type=str,
        choices=["random", "pca"],
        help="Initial embedding: Gaussian random projection or PCA.",
        default="random",
    )

    parser.add_argument(
        "--dimred.layer_norm",
        type=str,
        choices=["experiment", "derivation"],
        help="LayerNorm gains 1/sqrt(n) (experiment) or 1/sqrt(q) (derivation).",
        default="experiment",
    )

    parser.add_argument(
        "--dimred.beta_in_mask",
        action="store_true",
        help="Subtract beta from the logit diagonal through the mask.",
        default=False,
    )

    parser.add_argument(
        "--dimred.all_steps",
        action="store_true",
        help="Write every unrolled state to the scatter CSV, not only the first and last.",
        default=False,
    )

    parser.add_argument(
        "--dimred.knn_k",
        type=int,
        help="If positive, score each step's soft adjacency against the data kNN graph.",
        default=0,
    )


def add_lm_args(cls, parser: argparse.ArgumentParser):
    """Add language model and training arguments to the parser."""

    parser.add_argument(
        "--corpus",
        type=str,
        help="UTF-8 plain-text training corpus.",
        default=None,
    )

    parser.add_argument(
        "--synthetic",
        type=str,
        choices=["text"],
        help="Train on the deterministic synthetic corpus instead of a file.",
        default=None,
    )

    parser.add_argument("--lm.block_size", type=int, help="Context length.", default=64)
    parser.add_argument("--lm.n_layer", type=int, help="Number of blocks.", default=2)
    parser.add_argument("--lm.n_head", type=int, help="Attention heads per block.", default=2)
    parser.add_argument("--lm.n_embd", type=int, help="Embedding width.", default=128)
    parser.add_argument("--lm.dropout", type=float, help="Dropout probability.", default=0.0)

    parser.add_argument(
        "--lm.attention_mode",
        "--mode",
        type=str,
        choices=["standard", "diffusion"],
        help="Mix values with A (standard) or A - I (diffusion).",
        default="diffusion",
    )

    parser.add_argument(
        "--lm.dtype",
        type=str,
        choices=["float32", "float64"],
        help="Parameter and activation precision.",
        default="float32",
    )

    parser.add_argument("--train.max_iters", type=int, help="Optimisation steps.", default=2000)
    parser.add_argument("--train.batch_size", type=int, help="Windows per batch.", default=32)
    parser.add_argument("--train.learning_rate", "--lr", type=float, help="AdamW learning rate.", default=1e-3)
    parser.add_argument("--train.weight_decay", type=float, help="AdamW weight decay.", default=0.1)
    parser.add_argument("--train.eval_interval", type=int, help="Iterations between evaluations.", default=100)
    parser.add_argument("--train.eval_iters", type=int, help="Batches per loss estimate.", default=20)
    parser.add_argument("--train.grad_clip", type=float, help="Gradient norm clip (0 disables).", default=1.0)
    parser.add_argument("--train.warmup_iters", type=int, help="Linear warm-up steps of the cosine schedule.", default=0)
    parser.add_argument("--train.split_fraction", type=float, help="Fraction of tokens used for training.", default=0.9)

    parser.add_argument(
        "--train.lr_schedule",
        type=str,
        choices=["constant", "cosine"],
        help="Learning rate schedule.",
        default="constant",
    )


def add_compare_args(cls, parser: argparse.ArgumentParser):
    """Add mode-comparison arguments to the parser."""

    add_lm_args(cls, parser)

    parser.add_argument(
        "--seeds",
        type=seed_list,
        help="Comma-separated seeds; one standard and one diffusion run per seed.",
        default=[1, 2, 3],
    )

    parser.add_argument(
        "--compare.workers",
        type=int,
        help="Runs executed concurrently (forced to 1 when dropout > 0).",
        default=1,
    )


def parse(parser: argparse.ArgumentParser, argv: typing.Optional[typing.Sequence[str]] = None) -> Config:
    """
    Parses ``argv`` with the precedence defaults < config file < flags.
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    pre.add_argument("--config", type=str, default=None)
    known, _ = pre.parse_known_args(argv)
    if known.config is not None:
        parser.set_defaults(**load_config_file(known.config, parser))
    return Config.from_flat(vars(parser.parse_args(argv)))


def config(cls, argv: typing.Optional[typing.Sequence[str]] = None) -> Config:
    """
    Returns the configuration object specific to this command after adding relevant arguments.
    """
    parser = argparse.ArgumentParser(prog=f"probdr {cls.name}", description=cls.__doc__, allow_abbrev=False)
    cls.add_args(parser)
    return parse(parser, argv)
