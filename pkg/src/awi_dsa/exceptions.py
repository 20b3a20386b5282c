"""Exception types raised across the package."""


class AwiError(Exception):
    """Base class for package errors."""


class ZeroLikelihood(AwiError, ValueError):
    """A CQI level was observed that has zero probability at the current belief."""


class HorizonTooLarge(AwiError, ValueError):
    """Requested oracle horizon exceeds the configured cap."""


class BracketFailure(AwiError, RuntimeError):
    """Bisection bracket does not contain a sign change."""


class ConfigError(AwiError, ValueError):
    """Invalid experiment configuration.

    ``line`` is the 1-based line in the source document when known.
    """

    def __init__(self, message, line=None, source=None):
        super().__init__(message)
        self.line = line
        self.source = source

    def __str__(self):
        msg = super().__str__()
        if self.line is None:
            return msg if self.source is None else f"{self.source}: {msg}"
        src = self.source or "<config>"
        return f"{src}:{self.line}: {msg}"
