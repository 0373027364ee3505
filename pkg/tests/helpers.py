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

from typing import Union

import torch
from rich.console import Console
from rich.text import Text

from probdr_transformer.linalg import DTYPE, generator, orthogonal_matrix
from probdr_transformer.verify.instances import random_projected as _random_projected
from probdr_transformer.verify.instances import random_symmetric as _random_symmetric


class CLOSE_IN_VALUE:
    value: Union[float, int]
    tolerance: Union[float, int]

    def __init__(
        self,
        value: Union[float, int],
        tolerance: Union[float, int] = 0.0,
    ) -> None:
        self.value = value
        self.tolerance = tolerance

    def __eq__(self, __o: Union[float, int]) -> bool:
        # True if __o \in [value - tolerance, value + tolerance]
        # or if value \in [__o - tolerance, __o + tolerance]
        return (
            (self.value - self.tolerance) <= __o
            and __o <= (self.value + self.tolerance)
        ) or (
            (__o - self.tolerance) <= self.value
            and self.value <= (__o + self.tolerance)
        )

    def __repr__(self) -> str:
        return f"CLOSE_IN_VALUE({self.value!r} ± {self.tolerance!r})"


def random_symmetric(n: int, seed: int = 0) -> torch.Tensor:
    return _random_symmetric(n, generator(seed))


def random_projected(n: int, q: int, seed: int = 0) -> torch.Tensor:
    """n×q matrix whose rows have zero mean and unit norm."""
    return _random_projected(n, q, generator(seed))


def random_orthogonal(q: int, seed: int = 0) -> torch.Tensor:
    return orthogonal_matrix(q, seed)


def random_matrix(rows: int, cols: int, seed: int = 0) -> torch.Tensor:
    return torch.randn(rows, cols, generator=generator(seed), dtype=DTYPE)


def command_argv(out: str, *flags: str) -> list:
    """Flags for running a command into ``out`` without the events sink."""
    return ["--out", out, "--logging.dont_save_events", *flags]


class MockConsole:
    """
    Mocks the console object for print.
    Captures the last print output as a string.
    """

    captured_print = None

    def print(self, *args, **kwargs):
        console = Console(
            width=1000, no_color=True, markup=False
        )  # set width to 1000 to avoid truncation
        console.begin_capture()
        console.print(*args, **kwargs)
        self.captured_print = console.end_capture()

    @staticmethod
    def remove_rich_syntax(text: str) -> str:
        """
        Removes rich syntax from the given text.
        Removes markup and ansi syntax.
        """
        output_no_syntax = Text.from_ansi(Text.from_markup(text).plain).plain

        return output_no_syntax
