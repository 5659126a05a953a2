"""Exception hierarchy shared by every stage of the toolkit."""


class RegimekitError(Exception):
    """Base class for all toolkit errors."""


class DataError(RegimekitError, ValueError):
    """Input data violates a documented precondition."""


class ParseError(DataError):
    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class DuplicateDateError(DataError):
    pass


class TooFewRowsError(DataError):
    pass


class NonPositivePriceError(DataError):
    pass


class TooFewObservationsError(DataError):
    pass


class SeriesTooShortError(DataError):
    pass


class DegenerateVarianceError(DataError):
    pass


class NonFiniteInputError(DataError):
    pass


class NormalizationFailure(RegimekitError, ArithmeticError):
    pass


class EmptyDecompositionError(DataError):
    pass


class AllZeroEnergyError(DataError):
    pass


class InvalidGridError(DataError):
    pass


class EmptyWindowError(DataError):
    pass


class ZeroEnergyError(DataError):
    pass


class SequenceTooShortError(DataError):
    pass


class SupportViolationError(DataError):
    pass


class ConfigError(RegimekitError):
    pass


class MissingInputError(RegimekitError):
    def __init__(self, ticker, path=None):
        self.ticker = ticker
        self.path = path
        msg = f"no input for ticker {ticker!r}"
        if path is not None:
            msg += f" (expected {path})"
        super().__init__(msg)


class StageFailure(RegimekitError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")


class MissingStageOutputError(RegimekitError):
    pass


class TooFewExtremaWarning(UserWarning):
    """Envelope fell back to a constant because the signal had < 2 peaks."""
