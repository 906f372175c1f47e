"""Exception hierarchy.

Every error carries a stable class name (used verbatim by the CLI) and an
exit code: 1 validation, 2 solver failure, 3 I/O.
"""


class TwoMeansError(Exception):
    exit_code = 1

    @property
    def name(self) -> str:
        return type(self).__name__


class ValidationError(TwoMeansError, ValueError):
    exit_code = 1


class SolverError(TwoMeansError, ArithmeticError):
    exit_code = 2


class DataIOError(TwoMeansError, OSError):
    exit_code = 3


# validation
class UnknownScenario(ValidationError):
    pass


class AmbiguousScenario(ValidationError):
    pass


class InvalidSize(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class GroupError(ValidationError):
    pass


class CapExceeded(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


class UsageError(ValidationError):
    pass


# solver / data-dependent failures
class ZeroVariance(SolverError):
    pass


class DegenerateData(SolverError):
    pass


class Infeasible(SolverError):
    pass


class NoOverlap(SolverError):
    pass


class NoConvergence(SolverError):
    pass


class NumericOverflow(SolverError):
    pass


class TiesPresent(SolverError):
    pass


# I/O
class ParseError(DataIOError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)
        self.line = line
        self.column = column
