class ParameterDomainError(ValueError):
    """A parameter lies outside the domain of its family or model."""


class DegeneracyError(ValueError):
    """Data or an estimate is degenerate, e.g. a direction is undefined."""


class GeometryError(ValueError):
    """The embedding is rank deficient or the metric is not positive definite."""


class ConvergenceError(RuntimeError):
    """An iterative solver stopped before meeting its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message if residual is None else f"{message} (residual {residual:.3e})")
        self.residual = residual
