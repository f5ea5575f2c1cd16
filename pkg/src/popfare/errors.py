"""Exception hierarchy; ``exit_code`` is what the CLI returns for each category."""

from __future__ import annotations


class PopfareError(Exception):
    exit_code = 1


class ParseError(PopfareError):
    exit_code = 3

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)
        self.path = path
        self.line = line


class NetworkValidationError(PopfareError):
    exit_code = 4

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid network: " + "; ".join(str(v) for v in self.violations))


class ConvergenceError(PopfareError):
    exit_code = 5

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (max residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class InstanceTooLarge(PopfareError):
    exit_code = 6
