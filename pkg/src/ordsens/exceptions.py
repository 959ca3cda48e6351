"""Exception types shared across the package."""


class OrdsensError(Exception):
    """Base class for package errors."""


class SchemaError(OrdsensError):
    """Input data violates the declared schema."""


class ConvergenceError(OrdsensError):
    """An iterative fit did not converge within its iteration budget."""


class SeparationError(OrdsensError):
    """A fitted parameter ran away, indicating (quasi-)separation."""


class DivergenceError(OrdsensError):
    """A sampler produced numerically divergent state."""


class DrawError(OrdsensError):
    """Rejection sampling of parameter draws exhausted its retry budget."""
