"""Exceptions raised by ncp-detect."""

import typing as ty


class NcpError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(NcpError, ValueError):
    """An argument is outside the domain of the operation."""


class NumericError(NcpError, ArithmeticError):
    """A matrix is not positive definite or a factorization failed."""


class DegenerateTrainingError(NumericError):
    """The secondary data do not yield an invertible covariance estimate."""


class DegenerateGeometryError(NumericError):
    """An estimator update has a vanishing denominator."""


class SingularUpdateError(DegenerateGeometryError):
    """The linear system of the jammer signature update is singular."""


class ConfigError(NcpError):
    """Base class for configuration problems."""


class ConfigParseError(ConfigError):
    """The configuration file is not well-formed."""

    def __init__(
        self,
        message: str,
        path: ty.Optional[str] = None,
        line: ty.Optional[int] = None,
        column: ty.Optional[int] = None,
    ) -> None:
        self.path = path
        self.line = line
        self.column = column
        location = path or '<config>'
        if line is not None:
            location += ':{}'.format(line)
            if column is not None:
                location += ':{}'.format(column)
        super().__init__('{}: {}'.format(location, message))


class ConfigValidationError(ConfigError):
    """The configuration is well-formed but violates an invariant."""

    def __init__(self, message: str, fields: ty.Sequence[str] = ()) -> None:
        self.fields = tuple(fields)
        super().__init__(message)
