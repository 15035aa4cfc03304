class EMDLossError(Exception):
    """Base class for errors raised by this package."""


class InvalidInputError(EMDLossError, ValueError):
    pass


class NumericalError(EMDLossError, ArithmeticError):
    """NaN/inf produced where a finite number was required."""


class InsufficientDataError(EMDLossError):
    def __init__(self, message, classes=()):
        super().__init__(message)
        self.classes = tuple(classes)


class UndefinedMetricError(EMDLossError, ValueError):
    pass
