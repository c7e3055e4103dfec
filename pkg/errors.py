"""Exception hierarchy shared by every module of the screening harness.

Failures on a single value (a feature vector, a CSV row, a learner
hyperparameter) also derive from ValueError so callers that only know the
standard library can still catch them.
"""

from __future__ import annotations

from typing import Optional


class ScreeningError(Exception):
    """Base class for all errors raised by this package."""


# Feature vectors

class FeatureVectorError(ScreeningError, ValueError):
    """A raw feature vector violates the 19-feature schema."""


class ArityError(FeatureVectorError):
    pass


class RangeError(FeatureVectorError):
    pass


class NonFiniteError(FeatureVectorError):
    pass


# Learners

class LearnerSpecError(ScreeningError, ValueError):
    """Unknown learner kind or an invalid hyperparameter."""


class EmptyClassError(ScreeningError, ValueError):
    """A class of the label set has no training sample."""


# Fusion

class FusionError(ScreeningError, ValueError):
    pass


class MissingWeightsError(FusionError):
    pass


class NotBinaryError(FusionError):
    pass


class UnknownStrategyError(FusionError):
    pass


# Metrics

class LengthMismatchError(ScreeningError, ValueError):
    pass


class OneClassOnlyError(ScreeningError, ValueError):
    pass


# Data

class DataError(ScreeningError):
    """Problems with the input dataset or with splitting it."""


class SchemaError(DataError):
    pass


class EmptyFileError(DataError):
    pass


class RowValidationError(DataError, ValueError):
    """A CSV row failed validation; `line` is the 1-based file line."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.reason = message


class EmptyAfterFilterError(DataError):
    pass


class TooFewSamplesError(DataError):
    pass


class BadProportionsError(DataError, ValueError):
    pass


# Experiment

class ConfigError(ScreeningError):
    """Invalid experiment configuration; `key` is the dotted config key."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class FoldError(ScreeningError):
    """A cross-validation fold failed; wraps the original exception."""

    def __init__(self, fold: int, cause: Optional[BaseException] = None):
        detail = f": {cause}" if cause is not None else ""
        super().__init__(f"fold {fold} failed{detail}")
        self.fold = fold
