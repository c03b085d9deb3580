"""Exception hierarchy shared by every module of the package."""


class LPORecError(Exception):
    """Base class; ``code`` is the CLI exit status for this failure."""

    code = 3


class ValidationError(LPORecError, ValueError):
    code = 2


class EmptyInput(ValidationError):
    pass


class OutOfRange(ValidationError, IndexError):
    pass


class ParseError(ValidationError):
    def __init__(self, line, message="malformed line"):
        self.line = line
        super().__init__(f"line {line}: {message}")


class TooFewInteractions(ValidationError):
    def __init__(self, user, count):
        self.user = user
        super().__init__(f"user {user!r} has only {count} interactions (need >= 3)")


class InvalidSpec(ValidationError):
    pass


class EmptyAfterFilter(ValidationError):
    pass


class InvalidDims(ValidationError):
    pass


class EmptyHistory(ValidationError):
    pass


class HistoryTooLong(ValidationError):
    pass


class InvalidTarget(ValidationError):
    pass


class TemperatureNonPositive(ValidationError):
    pass


class DuplicateNegative(ValidationError):
    pass


class TargetInNegatives(ValidationError):
    pass


class EmptyBatch(ValidationError):
    pass


class NotEnoughCandidates(ValidationError):
    pass


class InvalidStrategy(ValidationError):
    pass


class InvalidRatio(ValidationError):
    pass


class EmptySplit(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class ShapeMismatch(LPORecError, ValueError):
    pass


class NotScalar(LPORecError, ValueError):
    pass


class NonFinite(LPORecError, FloatingPointError):
    pass


class NonFiniteGradient(NonFinite):
    pass


class NonFiniteLoss(NonFinite):
    def __init__(self, batch_index, value):
        self.batch_index = batch_index
        super().__init__(f"non-finite loss {value!r} at batch {batch_index}")
