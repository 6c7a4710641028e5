"""Exception types. The CLI maps each family to an exit code."""

from __future__ import annotations


class MatchcastError(Exception):
    exit_code = 1


class ConfigError(MatchcastError, ValueError):
    """Bad configuration or command-line usage."""

    exit_code = 1


class DataError(MatchcastError, ValueError):
    """Malformed or inconsistent input data."""

    exit_code = 2

    def __init__(self, message: str, *, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class EmptySplitError(DataError):
    """A temporal split left the train or the test side empty."""

    def __init__(self, side: str, message: str):
        self.side = side
        super().__init__(message)


class ModelError(MatchcastError):
    exit_code = 3


class ConvergenceError(ModelError):
    def __init__(self, message: str, grad_norm: float, n_iter: int):
        self.grad_norm = grad_norm
        self.n_iter = n_iter
        super().__init__(f"{message} (iterations={n_iter}, max|grad|={grad_norm:.3e})")


class UnknownTeamError(ModelError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its argument otherwise
        return str(self.args[0])
