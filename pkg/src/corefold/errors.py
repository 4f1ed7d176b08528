"""Exception hierarchy shared by all modules.

Exit-code convention for the CLI: validation failures are 2, an
insufficient search horizon is 3, and a blown budget cap is 4.
"""


class CorefoldError(Exception):
    """Base class for all package errors."""

    exit_code = 2


class ValidationError(CorefoldError):
    """Malformed or inconsistent input."""

    exit_code = 2


class UnknownGenerator(ValidationError):
    pass


class InvalidPresentation(ValidationError):
    pass


class EmptyRelators(ValidationError):
    pass


class StableLetterInInput(ValidationError):
    pass


class BackendCannotDecide(CorefoldError):
    exit_code = 2


class NotFolded(ValidationError):
    pass


class Disconnected(ValidationError):
    pass


class NotSubgroup(ValidationError):
    """Raised with a witness word that fails membership."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class NotNested(ValidationError):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class NotSurjective(ValidationError):
    pass


class NotBased(ValidationError):
    pass


class TrivialGenerator(ValidationError):
    pass


class MoveInvalid(ValidationError):
    pass


class DistanceUnknown(CorefoldError):
    exit_code = 3


class RadiusInsufficient(CorefoldError):
    """The configured search horizon cannot certify the answer."""

    exit_code = 3


class BudgetExceeded(CorefoldError):
    """A configured size cap was hit before the computation finished."""

    exit_code = 4
