"""Exception types raised by the engine, the oracles and the benchmark harness."""


class ExpradError(Exception):
    """Base class for all library errors."""


class ShapeError(ExpradError, ValueError):
    """Operand shapes are incompatible, or a scalar root was required."""


class CapacityError(ExpradError):
    """An arena is too small for the expression being bound into it."""


class DomainError(ExpradError, ArithmeticError):
    """An input point lies outside the domain of an operation (e.g. log of 0)."""


class ConfigError(ExpradError, ValueError):
    """Invalid construction-time configuration (bad bounds, unknown benchmark)."""
