"""Exception types shared across the package."""


class AnaxError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(AnaxError, ValueError):
    pass


class ContractError(AnaxError):
    """A caller broke an API precondition (missing gradient, wrong trace...)."""


class ConfigError(AnaxError, ValueError):
    pass


class DataError(AnaxError, ValueError):
    pass


class FormatError(AnaxError):
    """A file on disk does not match its declared binary layout."""


class NumericError(AnaxError, ArithmeticError):
    pass
