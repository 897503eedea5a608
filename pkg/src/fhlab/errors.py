"""Exception types shared across the lab."""


class FhlabError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(FhlabError):
    """Inconsistent or invalid setup: mismatched grids, violated stability
    bounds, resolution limits, bad experiment configuration."""


class SchemaError(ConfigurationError):
    """Config file failed strict validation (unknown key, wrong type)."""


class DomainError(FhlabError, ValueError):
    """Mathematically invalid argument (divergent sum, nonpositive data
    where positivity is required, non-Hurwitz drift matrix, ...)."""


class ArityError(FhlabError, ValueError):
    """Too few data points for the requested operation."""


class DivergenceError(FhlabError, RuntimeError):
    """Numerical blow-up (NaN/overflow) during time stepping.

    Carries the step index at which the first non-finite value appeared.
    """

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step
