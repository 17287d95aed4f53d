"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid user-supplied configuration (layer sizes, counts, tags, ...)."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class ContractError(ValueError):
    """A caller violated a shape or dimension precondition."""


class DegeneratePointError(ValueError):
    """A point lies where the requested quantity is undefined (e.g. on Γ)."""


class GeometryError(RuntimeError):
    """Sampling could not satisfy the geometric constraints."""


class DivergenceError(RuntimeError):
    """A residual or loss became non-finite."""


class DegenerateSolutionError(ValueError):
    """A relative error was requested against an exact solution that vanishes."""
