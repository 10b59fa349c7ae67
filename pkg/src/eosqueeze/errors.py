class EosqueezeError(Exception):
    """Base class for simulator errors."""


class ConfigError(EosqueezeError, ValueError):
    """Scenario file failed schema validation."""


class NumericalInstabilityError(EosqueezeError, ArithmeticError):
    """A numerical integration left its stability bounds."""
