"""Toolkit exception types, mapped to CLI exit codes by fwikit.cli."""


class ConfigurationError(ValueError):
    """Invalid configuration: bad grid/geometry parameters, malformed config
    files, unknown keys, incompatible method/parameter combinations."""


class NumericalError(RuntimeError):
    """Numerical failure: singular factorization, ill-conditioned data-space
    Hessian at zero damping, exhausted solver."""
