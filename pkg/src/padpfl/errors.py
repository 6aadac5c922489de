"""Exception types raised across the package."""


class InvalidParameterError(ValueError):
    """A numeric parameter violates its documented domain."""


class SingularityError(ZeroDivisionError):
    """A formula is evaluated at a point where it is undefined."""


class DivergenceError(RuntimeError):
    """Local training produced a non-finite loss."""

    def __init__(self, message, *, round=None, client=None, epoch=None):
        self.round = round
        self.client = client
        self.epoch = epoch
        where = ", ".join(
            f"{k}={v}" for k, v in (("round", round), ("client", client), ("epoch", epoch)) if v is not None
        )
        super().__init__(f"{message} ({where})" if where else message)


class FormatError(ValueError):
    """An input file does not follow the expected binary layout."""


class ConfigError(ValueError):
    """A scenario configuration failed to parse or validate."""
