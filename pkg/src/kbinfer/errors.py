"""Exception types shared across the package."""


class KbError(Exception):
    """Base class for kbinfer-specific errors."""


class CapabilityError(KbError):
    """A combination of kernel family, noise family, or atom types has no
    supported closed form."""


class ConfigError(KbError):
    """Invalid experiment configuration or incompatible pipeline wiring."""


class NumericError(KbError):
    """A linear solve or iteration failed numerically.

    Attributes
    ----------
    cond : float or None
        Condition-number estimate of the offending matrix, when available.
    time_index : int or None
        Failing time step for sequential algorithms.
    """

    def __init__(self, message, cond=None, time_index=None):
        super().__init__(message)
        self.cond = cond
        self.time_index = time_index
