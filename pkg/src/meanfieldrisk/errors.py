"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration value violates the model's constraints or schema."""


class NotApplicableError(ValueError):
    """A method was requested for a population it is not defined for."""


class NumericalError(ArithmeticError):
    """A numerical routine produced a non-finite value or failed to converge."""
