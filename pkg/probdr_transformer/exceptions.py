"""Error hierarchy shared by every module and mapped to exit codes by the CLI."""

import typing


class ProbDRError(Exception):
    """Root of every error raised by probdr_transformer."""


class ShapeError(ProbDRError, ValueError):
    pass


class InvalidInputError(ProbDRError, ValueError):
    pass


class InvalidParameterError(ProbDRError, ValueError):
    pass


class ConfigError(ProbDRError, ValueError):
    """Unknown configuration keys or values that cannot be converted."""


class ConvergenceError(ProbDRError, ArithmeticError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class NotPSDError(ProbDRError, ValueError):
    def __init__(self, message: str, min_eigenvalue: float):
        super().__init__(f"{message} (min eigenvalue={min_eigenvalue:.3e})")
        self.min_eigenvalue = min_eigenvalue


class InsufficientRankError(ProbDRError, ValueError):
    def __init__(self, message: str, eigenvalues: typing.Sequence[float]):
        shown = ", ".join(f"{v:.3e}" for v in list(eigenvalues)[:10])
        super().__init__(f"{message}; smallest eigenvalues: [{shown}]")
        self.eigenvalues = list(eigenvalues)


class DegenerateRowError(ProbDRError, ValueError):
    def __init__(self, row: int, block: typing.Optional[int] = None):
        self.row = row
        self.block = block
        where = f"row {row}" if block is None else f"row {row} in block {block}"
        super().__init__(f"Degenerate (constant) {where}: cannot normalise.")

    def at_block(self, block: int) -> "DegenerateRowError":
        return DegenerateRowError(self.row, block=block)


class FormatError(ProbDRError, ValueError):
    def __init__(self, message: str, observed: typing.Optional[int] = None):
        if observed is not None:
            message = f"{message} (observed magic 0x{observed:08x})"
        super().__init__(message)
        self.observed = observed


class ConsistencyError(ProbDRError, ValueError):
    pass


class TrainingDivergedError(ProbDRError, RuntimeError):
    """Raised when a training loss becomes non-finite; carries the partial run."""

    def __init__(self, message: str, run=None):
        super().__init__(message)
        self.run = run
