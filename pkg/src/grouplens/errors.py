"""Exception types raised across the package."""


class InvalidArgumentError(ValueError):
    pass


class DegenerateScaleError(ArithmeticError):
    """Noise-level estimate fell below its floor (near-perfect fit)."""

    def __init__(self, sigma, floor):
        super().__init__(
            f"sigma estimate {sigma:.3e} fell below sigma_floor={floor:.3e}")
        self.sigma = sigma
        self.floor = floor


class RankDeficiencyError(ArithmeticError):
    """The projected group design lost rank; no bias correction is possible."""


class InfeasibleProjectionError(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
