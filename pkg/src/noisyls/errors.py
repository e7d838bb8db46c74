"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Inconsistent or out-of-range configuration."""


class DomainError(ValueError):
    """A theoretical hypothesis does not hold for the requested parameters.

    ``assumption`` names the violated hypothesis so that callers (and the CLI)
    can surface it verbatim.
    """

    def __init__(self, message, assumption=None):
        super().__init__(message)
        self.assumption = assumption
