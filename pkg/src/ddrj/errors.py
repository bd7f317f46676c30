"""Exception hierarchy.

Each exception carries the CLI exit code it maps to: 1 for usage/config
problems, 2 for bad input data, 3 for numerical failures.
"""

from __future__ import annotations


class DDRJError(Exception):
    exit_code = 1


class ConfigError(DDRJError):
    exit_code = 1


class UnknownScenario(ConfigError):
    pass


class DataError(DDRJError, ValueError):
    exit_code = 2


class ParseError(DataError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)


class SchemaMismatch(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class LengthMismatch(DataError):
    pass


class UnknownColumn(DataError):
    pass


class ZeroVariance(DataError):
    pass


class SingleGroup(DataError):
    pass


class SingleClass(DataError):
    pass


class FoldDegenerate(DataError):
    pass


class EmptyTrace(DataError):
    pass


class EmptySelection(DataError):
    pass


class NumericalError(DDRJError, ArithmeticError):
    exit_code = 3


class NotPositiveDefinite(NumericalError):
    pass
