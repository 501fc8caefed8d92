"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class FedAteError(Exception):
    """Base class; precondition violations exit with code 2."""

    exit_code = 2


class InputError(FedAteError):
    """Unreadable or malformed input (exit code 1)."""

    exit_code = 1


class InvariantError(FedAteError):
    """An internal invariant failed (exit code 3)."""

    exit_code = 3


class ParseError(InputError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(InputError):
    pass


class BoundsError(InputError):
    """A record violates the declared bounds (exit code 1, like other bad input)."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyDataset(FedAteError):
    pass


class InvalidParts(FedAteError):
    pass


class NonPositiveScale(FedAteError):
    pass


class NonPositiveEpsilon(FedAteError):
    pass


class InvalidEpsilonDelta(FedAteError):
    pass


class InvalidDelta(FedAteError):
    pass


class BetaTooLarge(FedAteError):
    pass


class OneArmEmpty(FedAteError):
    pass


class InsufficientForVariance(FedAteError):
    pass


class DeltaZero(FedAteError):
    pass


class NoReports(FedAteError):
    pass


class TooManySites(FedAteError):
    pass


class InvalidParams(FedAteError):
    pass


class TooFewRecords(FedAteError):
    pass


class InvalidJ(FedAteError):
    pass


class TooLarge(FedAteError):
    pass
