"""Exception hierarchy shared by the analysis modules."""


class PscError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PscError, ValueError):
    """A parameter lies outside its valid domain."""

    def __init__(self, parameter, message):
        self.parameter = parameter
        super().__init__(f"{parameter}: {message}")


class DegenerateModelError(PscError, ValueError):
    """The requested quantity does not exist for these parameters."""


class UnreachableOutputError(PscError, ValueError):
    """An attack output has probability zero under both victim directions."""
