"""Domain errors.  All of them are ``ValueError`` subclasses so callers can catch broadly."""


class DegreeError(ValueError):
    """Bidegree or dimension does not admit the requested operation."""


class JetOrderError(ValueError):
    """An operation needs more derivatives than the jet carries."""


class SingularMetricError(ValueError):
    def __init__(self, message: str = "metric not invertible"):
        super().__init__(message)


class PositivityError(ValueError):
    """A metric or dual matrix is not positive definite."""


class DegenerateRescalingError(ValueError):
    def __init__(self, message: str = "rescaling degenerate at m=2: ‖Ω‖²_η ≡ 1"):
        super().__init__(message)


class StencilError(ValueError):
    def __init__(self, message: str = "stencil exceeds grid"):
        super().__init__(message)


class AmplitudeError(ValueError):
    def __init__(self, eps: float):
        self.eps = eps
        self.suggested = eps / 2
        super().__init__(f"amplitude too large (eps={eps:g}); try eps={eps / 2:g}")


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""
