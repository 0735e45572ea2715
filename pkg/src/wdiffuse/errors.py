"""Exception hierarchy shared by all numerical modules.

The CLI maps :class:`ParameterError` to exit code 2 and every
:class:`NumericalError` to exit code 3.
"""


class ParameterError(ValueError):
    """Invalid parameter or argument outside the documented domain."""


class NumericalError(RuntimeError):
    """A numerical routine could not deliver a result at the requested accuracy."""


class QuadratureError(NumericalError):
    """Adaptive quadrature failed; ``best`` carries the best available estimate."""

    def __init__(self, message, best=None, abscissa=None):
        super().__init__(message)
        self.best = best
        self.abscissa = abscissa


class SamplerError(NumericalError):
    """A rejection sampler exceeded its rejection budget."""


class BoundaryError(NumericalError):
    """A configuration is too close to the boundary of the simplex to be processed."""
