"""Exception hierarchy shared by all modules."""


class AnchorFPError(Exception):
    """Base class for errors raised by anchorfp."""


class DatasetError(AnchorFPError):
    """Malformed input data (files, shapes, non-finite values)."""


class PreprocessingError(AnchorFPError):
    """Preprocessing applied out of order, twice, or with mismatched statistics."""


class RankDeficientError(AnchorFPError):
    """The expanded anchor matrix does not have full column rank."""

    def __init__(self, message, dependent_columns=()):
        super().__init__(message)
        self.dependent_columns = tuple(dependent_columns)


class SingularSystemError(AnchorFPError):
    """Unpenalized normal equations are singular."""


class UndefinedStatisticError(AnchorFPError):
    """A correlation-type statistic is undefined (constant input)."""


class ConfigError(AnchorFPError):
    """Invalid pipeline configuration."""

    def __init__(self, message, findings=()):
        super().__init__(message)
        self.findings = list(findings)
