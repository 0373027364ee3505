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
import typing

from abc import ABC, abstractmethod

from loguru import logger

from probdr_transformer.utils.config import Config, check_config, add_args, config
from probdr_transformer import __version__ as version


class BaseCommand(ABC):
    """
    Base class for the CLI commands. This class is abstract and should be inherited by a subclass.

    It parses the command's flags (defaults < ``--config`` file < command line), prepares the
    output directory, echoes the resolved configuration into it and installs the log sinks,
    which are removed again when the command is closed.
    """

    name: str = "base"

    @classmethod
    def check_config(cls, config: Config) -> typing.List[int]:
        return check_config(cls, config)

    @classmethod
    def add_args(cls, parser):
        add_args(cls, parser)

    @classmethod
    def config(cls, argv: typing.Optional[typing.Sequence[str]] = None) -> Config:
        return config(cls, argv)

    def __init__(self, config: typing.Optional[Config] = None):
        self.config = config or self.config()
        self._handlers = self.check_config(self.config)

        # Log the configuration for reference.
        logger.info(f"probdr {self.name} v{version}")
        logger.info(self.config)

    @property
    def out(self) -> str:
        return self.config.full_path

    def path(self, *parts: str) -> str:
        return os.path.join(self.config.full_path, *parts)

    @abstractmethod
    def run(self) -> int:
        """Runs the command and returns its exit code."""
        ...

    def close(self):
        for handler in self._handlers:
            try:
                logger.remove(handler)
            except ValueError:
                pass
        self._handlers = []
        # back to a plain console sink
        logger.add(sys.stderr, level="INFO")

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_value, traceback):
        self.close()
